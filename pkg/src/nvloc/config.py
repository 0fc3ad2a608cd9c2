"""Serializable run configuration in human-scale units.

Every key carries its unit as a suffix (``_nm``, ``_ua``, ``_mhz``, ``_mt``,
``_mt_per_ma``...). Values are converted to SI only when building the
library objects.
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

from .coupling import ResonatorParams
from .errors import DataFormatError, ValidationError
from .locator import AlphaMeasurement, GeometryPrior, SearchDomain
from .spin_model import SpinConstants
from .wire_field import MODELS, GridSpec, NVAxis, WireGeometry

NM = 1e-9
UA = 1e-6

DEFAULTS = {
    "spin": {
        "D_mhz": 2870.0,
        "gamma_e_mhz_per_mt": 28.0,
        "gamma_I_mhz_per_mt": -0.0043,
        "A_z_mhz": 3.03,
        "A_perp_mhz": 3.65,
        "gamma_I_perp_mhz_per_mt": 0.075,
    },
    "wire": {"width_nm": 36.0, "thickness_nm": 20.0, "length_nm": 500.0},
    "axis": {"nv": [1, 1, 1], "wire": [1, 1, 0], "normal": [0, 0, 1]},
    "prior": {"width_sigma_nm": 5.0, "thickness_sigma_nm": 2.0, "rel_perp": 0.011, "rel_z": 0.037},
    "alpha": {"alpha_z_mt_per_ma": None, "alpha_perp_mt_per_ma": None, "sigma_mt_per_ma": 0.02},
    "model": "infinite",
    "bootstrap": {"n": 5000, "seed": 0, "forward": "infinite", "half_plane": "auto"},
    "search": {"x_min_nm": -300.0, "x_max_nm": 300.0, "z_min_nm": -100.0, "z_max_nm": -1.0, "pitch_nm": 2.0},
    "grid": {"x_min_nm": -200.0, "x_max_nm": 200.0, "nx": 201, "z_min_nm": -100.0, "z_max_nm": 50.0, "nz": 76},
    "fieldmap": {"current_ua": 1000.0},
    "odmr": {
        "half_span_mhz": 40.0,
        "points": 801,
        "linewidth_mhz": 1.0,
        "contrast": 0.03,
        "rate_kcps": 100.0,
        "integration_s": 1.0,
    },
    "nutation": {"noise": 0.01, "max_delay_us": 200.0, "points": 201},
    "resonator": {"delta_i_na": 35.0, "kappa_per_s": 1e5, "gamma2_per_s": 1e5, "eta": 1.0},
    "out_dir": ".",
}

# keys that do not change any computed number and are left out of the hash
_UNHASHED = ("out_dir",)


def _merge(base, override, path=""):
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ValidationError(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ValidationError(f"config key {where!r} must be an object")
            _merge(base[key], value, where)
        else:
            base[key] = value
    return base


class RunConfig:
    """Resolved configuration: defaults, then the JSON file, then flag overrides."""

    def __init__(self, data=None):
        self.data = _merge(copy.deepcopy(DEFAULTS), data or {})
        if self.data["model"] not in MODELS:
            raise ValidationError(f"model must be one of {MODELS}")

    @classmethod
    def load(cls, path=None):
        if path is None:
            return cls()
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise DataFormatError(f"cannot read config: {exc.strerror}", path=path) from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DataFormatError(exc.msg, path=path, line=exc.lineno) from exc
        if not isinstance(data, dict):
            raise DataFormatError("config must be a JSON object", path=path)
        return cls(data)

    def set(self, dotted, value):
        """Apply one override; ``None`` leaves the current value untouched."""
        if value is None:
            return self
        keys = dotted.split(".")
        _merge(self.data, _nest(keys, value))
        return self

    def get(self, dotted):
        node = self.data
        for key in dotted.split("."):
            node = node[key]
        return node

    def to_dict(self):
        return copy.deepcopy(self.data)

    def hashed_part(self):
        return {k: v for k, v in self.data.items() if k not in _UNHASHED}

    @property
    def hash(self):
        blob = json.dumps(self.hashed_part(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    # ------------------------------------------------------------ builders

    def spin_constants(self):
        s = self.data["spin"]
        return SpinConstants(
            D=s["D_mhz"] * 1e6,
            gamma_e=s["gamma_e_mhz_per_mt"] * 1e9,
            gamma_I=s["gamma_I_mhz_per_mt"] * 1e9,
            A_z=s["A_z_mhz"] * 1e6,
            A_perp=s["A_perp_mhz"] * 1e6,
            gamma_I_perp=s["gamma_I_perp_mhz_per_mt"] * 1e9,
        )

    def geometry(self):
        w = self.data["wire"]
        return WireGeometry(w["width_nm"] * NM, w["thickness_nm"] * NM, w["length_nm"] * NM)

    def axis(self):
        a = self.data["axis"]
        return NVAxis.from_crystal(tuple(a["nv"]), tuple(a["wire"]), tuple(a["normal"]))

    def prior(self):
        w, p = self.data["wire"], self.data["prior"]
        return GeometryPrior(
            w_mean=w["width_nm"] * NM,
            w_sigma=p["width_sigma_nm"] * NM,
            t_mean=w["thickness_nm"] * NM,
            t_sigma=p["thickness_sigma_nm"] * NM,
            rel_perp=p["rel_perp"],
            rel_z=p["rel_z"],
            length=w["length_nm"] * NM,
        )

    def alpha(self):
        a = self.data["alpha"]
        if a["alpha_z_mt_per_ma"] is None or a["alpha_perp_mt_per_ma"] is None:
            raise ValidationError("alpha_z and alpha_perp are required")
        # mT/mA and T/A are the same number
        return AlphaMeasurement(
            float(a["alpha_z_mt_per_ma"]), float(a["alpha_perp_mt_per_ma"]), float(a["sigma_mt_per_ma"])
        )

    def domain(self):
        s = self.data["search"]
        return SearchDomain(
            s["x_min_nm"] * NM, s["x_max_nm"] * NM, s["z_min_nm"] * NM, s["z_max_nm"] * NM, s["pitch_nm"] * NM
        )

    def grid(self):
        g = self.data["grid"]
        return GridSpec(
            g["x_min_nm"] * NM, g["x_max_nm"] * NM, int(g["nx"]), g["z_min_nm"] * NM, g["z_max_nm"] * NM, int(g["nz"])
        )

    def resonator(self):
        r = self.data["resonator"]
        return ResonatorParams(r["delta_i_na"] * 1e-9, r["kappa_per_s"], r["gamma2_per_s"], r["eta"])


def _nest(keys, value):
    out = value
    for key in reversed(keys):
        out = {key: out}
    return out
