"""CSV and JSON readers and writers for spectra, traces and results."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .fitting import NutationTrace, OdmrSpectrum

ODMR_HEADER = ("freq_hz", "pl_cps")
NUTATION_HEADER = ("delay_s", "contrast")
CURRENT_COLUMN = "current_amp"


def _fmt(value):
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.12g}"


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _clean(obj):
    # JSON has no inf/nan
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def write_json(path, obj):
    path = Path(path)
    text = json.dumps(_clean(obj), indent=2, sort_keys=True, default=_json_default)
    path.write_text(text + "\n")
    return path


def read_json(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataFormatError(f"cannot read: {exc.strerror}", path=path) from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataFormatError(exc.msg, path=path, line=exc.lineno) from exc


def write_csv(path, header, rows, meta=None):
    """Write ``rows`` under ``header``; ``meta`` becomes leading ``# key=value`` lines."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        for key, value in (meta or {}).items():
            fh.write(f"# {key}={value}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def read_table(path, required, optional=()):
    """Parse a numeric CSV; returns ``{column: array}`` plus ``# key=value`` metadata."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise DataFormatError(f"cannot read: {exc.strerror}", path=path) from exc
    meta, header, columns = {}, None, None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if header is None and "=" in line:
                key, _, value = line[1:].partition("=")
                meta[key.strip()] = value.strip()
            continue
        fields = next(csv.reader([line]))
        if header is None:
            header = [f.strip() for f in fields]
            unknown = set(header) - set(required) - set(optional)
            if tuple(header[: len(required)]) != tuple(required) or unknown or len(set(header)) != len(header):
                expected = ",".join(required)
                raise DataFormatError(f"bad header {line!r}, expected {expected!r}", path=path, line=lineno)
            columns = {name: [] for name in header}
            continue
        if len(fields) != len(header):
            raise DataFormatError(f"expected {len(header)} fields, got {len(fields)}", path=path, line=lineno)
        for name, text in zip(header, fields):
            try:
                value = float(text)
            except ValueError:
                raise DataFormatError(f"not a number: {text.strip()!r}", path=path, line=lineno) from None
            if not math.isfinite(value):
                raise DataFormatError(f"non-finite value in column {name!r}", path=path, line=lineno)
            columns[name].append(value)
    if header is None:
        raise DataFormatError("no header line", path=path, line=len(lines) or 1)
    return {k: np.array(v) for k, v in columns.items()}, meta


def sidecar_path(path):
    return Path(path).with_suffix(".json")


def _current(path, table):
    if CURRENT_COLUMN in table:
        values = table[CURRENT_COLUMN]
        if len(values) == 0 or np.ptp(values) > 0:
            raise DataFormatError(f"column {CURRENT_COLUMN!r} must hold one constant value", path=path)
        return float(values[0])
    side = sidecar_path(path)
    if not side.exists():
        raise DataFormatError(f"no {CURRENT_COLUMN!r} column and no sidecar {side.name}", path=path)
    manifest = read_json(side)
    if not isinstance(manifest, dict) or "i0_amp" not in manifest:
        raise DataFormatError("sidecar lacks 'i0_amp'", path=side)
    return float(manifest["i0_amp"])


def _wrap(path, build):
    # surface sample-level validation errors as file errors
    try:
        return build()
    except ValueError as exc:
        if isinstance(exc, DataFormatError):
            raise
        raise DataFormatError(str(exc), path=path) from exc


def read_odmr(path) -> OdmrSpectrum:
    table, _ = read_table(path, ODMR_HEADER, (CURRENT_COLUMN,))
    current = _current(path, table)
    return _wrap(path, lambda: OdmrSpectrum(table["freq_hz"], table["pl_cps"], current))


def read_nutation(path) -> NutationTrace:
    table, _ = read_table(path, NUTATION_HEADER, (CURRENT_COLUMN,))
    current = _current(path, table)
    return _wrap(path, lambda: NutationTrace(table["delay_s"], table["contrast"], current))


def write_odmr(path, s: OdmrSpectrum, meta=None):
    path = write_csv(path, ODMR_HEADER, zip(s.frequencies, s.pl), meta)
    write_json(sidecar_path(path), {"i0_amp": s.current, **(meta or {})})
    return path


def write_nutation(path, t: NutationTrace, meta=None):
    path = write_csv(path, NUTATION_HEADER, zip(t.delays, t.signal), meta)
    write_json(sidecar_path(path), {"i0_amp": t.current, **(meta or {})})
    return path
