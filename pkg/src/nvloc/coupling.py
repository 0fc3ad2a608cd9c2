"""Spin-resonator coupling and single-spin detection time from alpha_perp."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ValidationError
from .spin_model import SpinConstants, sx_matrix_element


@dataclass(frozen=True)
class ResonatorParams:
    delta_i: float = 35e-9  # A, vacuum current fluctuations
    kappa: float = 1e5  # 1/s, energy damping rate
    gamma2: float = 1e5  # 1/s, spin decoherence rate
    eta: float = 1.0  # detection efficiency

    def __post_init__(self):
        if min(self.delta_i, self.kappa, self.gamma2, self.eta) <= 0:
            raise ValidationError("resonator parameters must be positive")
        if self.eta > 1:
            raise ValidationError("detection efficiency cannot exceed 1")


@dataclass(frozen=True)
class CouplingEstimate:
    g_over_2pi: float  # Hz
    detection_time: float | None = None  # s

    @property
    def g_angular(self):
        return 2 * math.pi * self.g_over_2pi

    def to_dict(self):
        return {
            "g_over_2pi_hz": self.g_over_2pi,
            "g_angular_rad_per_s": self.g_angular,
            "detection_time_s": self.detection_time,
        }


def coupling_constant(
    alpha_perp: float, r: ResonatorParams = ResonatorParams(), c: SpinConstants = SpinConstants()
) -> CouplingEstimate:
    """g/2pi = gamma_e * (alpha_perp * delta_i) * <0|S_x|-1>."""
    if alpha_perp < 0:
        raise ValidationError("alpha_perp is a magnitude and must be >= 0")
    delta_b = alpha_perp * r.delta_i
    return CouplingEstimate(c.gamma_e * delta_b * sx_matrix_element(c, 0, -1))


def detection_time(g: CouplingEstimate, r: ResonatorParams = ResonatorParams()) -> float:
    """kappa^2 gamma2 / (eta g^4), with g in rad/s."""
    if g.g_over_2pi <= 0:
        raise ZeroDivisionError("detection time diverges for zero coupling")
    return r.kappa**2 * r.gamma2 / (r.eta * g.g_angular**4)


def estimate(alpha_perp, r: ResonatorParams = ResonatorParams(), c: SpinConstants = SpinConstants()):
    g = coupling_constant(alpha_perp, r, c)
    t = detection_time(g, r) if g.g_over_2pi > 0 else math.inf
    return CouplingEstimate(g.g_over_2pi, t)
