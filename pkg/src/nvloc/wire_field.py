"""Magnetic field of the nanowire and its projection onto the NV axis.

Lab frame: y' runs along the wire (current flows toward +y'), z' is the
surface normal pointing out of the diamond, x' = y' x z'. The wire occupies
x' in [-w/2, w/2], z' in [0, t], y' in [-L/2, L/2]; the NV sits at z' < 0.

Points and fields are arrays whose last axis holds (x', y', z') components.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import QuadratureError, SingularPointError, ValidationError

MU0 = 4e-7 * math.pi
MODELS = ("infinite", "finite")


@dataclass(frozen=True)
class WireGeometry:
    """Nanowire dimensions in meters."""

    width: float = 36e-9
    thickness: float = 20e-9
    length: float = 500e-9

    def __post_init__(self):
        for name in ("width", "thickness", "length"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValidationError(f"wire {name} must be positive, got {value!r}")


@dataclass(frozen=True)
class NVAxis:
    """Unit vector of the NV symmetry axis expressed in the lab frame."""

    u: tuple

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        if u.shape != (3,) or abs(np.linalg.norm(u) - 1.0) > 1e-12:
            raise ValidationError(f"NV axis must be a unit 3-vector, got {self.u!r}")
        object.__setattr__(self, "u", tuple(float(x) for x in u))

    @classmethod
    def from_crystal(cls, nv=(1, 1, 1), wire=(1, 1, 0), normal=(0, 0, 1)):
        """Axis for an NV along crystal direction ``nv`` with the wire along
        ``wire`` on a surface with normal ``normal`` (Miller indices)."""
        y = np.asarray(wire, dtype=float)
        z = np.asarray(normal, dtype=float)
        y /= np.linalg.norm(y)
        z /= np.linalg.norm(z)
        if abs(y @ z) > 1e-12:
            raise ValidationError("wire direction must lie in the surface plane")
        x = np.cross(y, z)
        n = np.asarray(nv, dtype=float)
        n /= np.linalg.norm(n)
        u = np.array([n @ x, n @ y, n @ z])
        return cls(tuple(u / np.linalg.norm(u)))

    @property
    def vector(self):
        return np.asarray(self.u)


@dataclass(frozen=True)
class AlphaPair:
    """Field per unit current at the NV: axial (signed) and transverse, T/A."""

    alpha_z: float
    alpha_perp: float


def _as_points(p):
    p = np.asarray(p, dtype=float)
    if p.shape[-1:] != (3,):
        raise ValidationError(f"points need 3 components on the last axis, got shape {p.shape}")
    return p


def thin_wire_field(current, p, g: WireGeometry = WireGeometry()):
    """Field of an infinite line current along the wire's center line."""
    p = _as_points(p)
    dx = p[..., 0]
    dz = p[..., 2] - 0.5 * g.thickness
    r2 = dx * dx + dz * dz
    if np.any(r2 == 0):
        raise SingularPointError("field of a line current is undefined on the line")
    k = MU0 * current / (2 * math.pi * r2)
    return np.stack([k * dz, np.zeros_like(k), -k * dx], axis=-1)


def _plane_primitive(u, v):
    # d^2/du dv of this gives v / (u^2 + v^2)
    r2 = u * u + v * v
    safe_r2 = np.where(r2 > 0, r2, 1.0)
    safe_v = np.where(v != 0, v, 1.0)
    log_term = np.where(r2 > 0, 0.5 * u * np.log(safe_r2), 0.0)
    # u / v may overflow to inf for subnormal v; arctan(inf) is still exact
    with np.errstate(over="ignore"):
        atan_term = np.where(v != 0, v * np.arctan(u / safe_v), 0.0)
    return log_term + atan_term


def _corner_sum_2d(fn, x, z, g):
    u_hi, u_lo = x + 0.5 * g.width, x - 0.5 * g.width
    v_hi, v_lo = z, z - g.thickness
    return fn(u_hi, v_hi) - fn(u_hi, v_lo) - fn(u_lo, v_hi) + fn(u_lo, v_lo)


def _infinite_analytic(g, current, x, z):
    k = MU0 * current / (2 * math.pi * g.width * g.thickness)
    bx = k * _corner_sum_2d(_plane_primitive, x, z, g)
    bz = -k * _corner_sum_2d(lambda u, v: _plane_primitive(v, u), x, z, g)
    return bx, bz


def _log_sum(a, rho2, r):
    # log(a + r) with r = sqrt(a^2 + rho2), stable for a < 0
    with np.errstate(divide="ignore", invalid="ignore"):
        pos = np.log(np.where(a >= 0, a + r, 1.0))
        neg = np.log(np.where(a < 0, rho2 / (r - a), 1.0))
    return np.where(a >= 0, pos, neg)


def _box_primitive(u, v, s):
    # d^3/du dv ds of this gives v / (u^2 + v^2 + s^2)^(3/2)
    r = np.sqrt(u * u + v * v + s * s)
    log_s = _log_sum(s, u * u + v * v, r)
    log_u = _log_sum(u, v * v + s * s, r)
    term_u = np.where(u != 0, u * np.nan_to_num(log_s, neginf=0.0), 0.0)
    term_s = np.where(s != 0, s * np.nan_to_num(log_u, neginf=0.0), 0.0)
    denom = np.where((v != 0) & (r > 0), v * r, 1.0)
    term_v = np.where(v != 0, v * np.arctan(u * s / denom), 0.0)
    return -(term_u + term_s - term_v)


def _finite_analytic(g, current, x, y, z):
    k = MU0 * current / (4 * math.pi * g.width * g.thickness)
    xs = (x + 0.5 * g.width, x - 0.5 * g.width)
    zs = (z, z - g.thickness)
    ys = (y + 0.5 * g.length, y - 0.5 * g.length)
    bx = np.zeros(np.broadcast(x, y, z).shape)
    bz = np.zeros_like(bx)
    for i, u in enumerate(xs):
        for j, v in enumerate(zs):
            for m, s in enumerate(ys):
                sign = (-1) ** (i + j + m)
                bx = bx + sign * _box_primitive(u, v, s)
                bz = bz + sign * _box_primitive(v, u, s)
    return k * bx, -k * bz


def _split(lo, hi, at):
    # points within a hair of an edge are left to the endpoint handling of QAGS
    margin = 1e-6 * (hi - lo)
    if lo + margin < at < hi - margin:
        return [(lo, at), (at, hi)]
    return [(lo, hi)]


def _dblquad(kernel, g, x, z, rtol):
    """Integrate kernel(xs, zs) over the cross-section, split at the point."""
    total = 0.0
    abserr = 0.0
    for xa, xb in _split(-0.5 * g.width, 0.5 * g.width, x):
        for za, zb in _split(0.0, g.thickness, z):
            with warnings.catch_warnings():
                warnings.simplefilter("error", integrate.IntegrationWarning)
                try:
                    value, err = integrate.dblquad(
                        lambda zs, xs: kernel(xs, zs), xa, xb, za, zb, epsabs=0.0, epsrel=rtol
                    )
                except integrate.IntegrationWarning as exc:
                    raise QuadratureError(
                        f"quadrature did not converge at x'={x:.3e}, z'={z:.3e}: {exc}",
                        estimate=total,
                        abserr=abserr,
                    ) from exc
            total += value
            abserr += err
    return total


def _infinite_quad(g, current, x, z, rtol):
    k = MU0 * current / (2 * math.pi * g.width * g.thickness)

    def kx(xs, zs):
        return (z - zs) / ((x - xs) ** 2 + (z - zs) ** 2)

    def kz(xs, zs):
        return -(x - xs) / ((x - xs) ** 2 + (z - zs) ** 2)

    return k * _dblquad(kx, g, x, z, rtol), k * _dblquad(kz, g, x, z, rtol)


def _finite_quad(g, current, x, y, z, rtol):
    k = MU0 * current / (4 * math.pi * g.width * g.thickness)
    lo, hi = y + 0.5 * g.length, y - 0.5 * g.length

    def along(xs, zs):
        rho2 = (x - xs) ** 2 + (z - zs) ** 2
        return (lo / math.sqrt(rho2 + lo * lo) - hi / math.sqrt(rho2 + hi * hi)) / rho2

    def kx(xs, zs):
        return (z - zs) * along(xs, zs)

    def kz(xs, zs):
        return -(x - xs) * along(xs, zs)

    return k * _dblquad(kx, g, x, z, rtol), k * _dblquad(kz, g, x, z, rtol)


def rect_wire_field_infinite(g: WireGeometry, current, p, method="analytic", rtol=1e-6):
    """Field of an infinitely long bar with uniform current density.

    ``method="analytic"`` evaluates the cross-section integral in closed
    form (vectorised); ``method="quadrature"`` integrates the line-current
    kernel adaptively to relative tolerance ``rtol`` (scalar points only).
    """
    p = _as_points(p)
    if method == "analytic":
        bx, bz = _infinite_analytic(g, current, p[..., 0], p[..., 2])
    elif method == "quadrature":
        flat = p.reshape(-1, 3)
        out = np.array([_infinite_quad(g, current, q[0], q[2], rtol) for q in flat])
        bx, bz = out[:, 0].reshape(p.shape[:-1]), out[:, 1].reshape(p.shape[:-1])
    else:
        raise ValidationError(f"unknown method {method!r}")
    return np.stack([bx, np.zeros_like(bx), bz], axis=-1)


def rect_wire_field_finite(g: WireGeometry, current, p, method="analytic", rtol=1e-6):
    """Field of a straight bar of length ``g.length`` with uniform current density.

    Every current element points along y', so B_y' vanishes identically for
    this bare segment (no leads are modelled).
    """
    p = _as_points(p)
    if method == "analytic":
        bx, bz = _finite_analytic(g, current, p[..., 0], p[..., 1], p[..., 2])
    elif method == "quadrature":
        flat = p.reshape(-1, 3)
        out = np.array([_finite_quad(g, current, q[0], q[1], q[2], rtol) for q in flat])
        bx, bz = out[:, 0].reshape(p.shape[:-1]), out[:, 1].reshape(p.shape[:-1])
    else:
        raise ValidationError(f"unknown method {method!r}")
    return np.stack([bx, np.zeros_like(bx), bz], axis=-1)


def wire_field(g: WireGeometry, current, p, model="infinite"):
    if model == "infinite":
        return rect_wire_field_infinite(g, current, p)
    if model == "finite":
        return rect_wire_field_finite(g, current, p)
    raise ValidationError(f"unknown field model {model!r}; expected one of {MODELS}")


def project_to_nv_frame(B, axis: NVAxis):
    """Split lab-frame field(s) into (B_z along the NV axis, |B_perp|)."""
    u = np.asarray(axis.u if isinstance(axis, NVAxis) else axis, dtype=float)
    if abs(np.linalg.norm(u) - 1.0) > 1e-12:
        raise ValidationError("NV axis must be a unit vector")
    B = np.asarray(B, dtype=float)
    b_par = B @ u
    b_perp2 = np.sum(B * B, axis=-1) - b_par * b_par
    return b_par, np.sqrt(np.maximum(b_perp2, 0.0))


def alpha_xz(x, z, g: WireGeometry, axis: NVAxis, model="infinite", field_scale=(1.0, 1.0)):
    """Vectorised (alpha_z, alpha_perp) on the y' = 0 midplane.

    ``field_scale`` multiplies the lab x' and z' components before the
    projection (used to inject relative model errors).
    """
    x, z = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(z, dtype=float))
    if model == "infinite":
        bx, bz = _infinite_analytic(g, 1.0, x, z)
    elif model == "finite":
        bx, bz = _finite_analytic(g, 1.0, x, np.zeros_like(x), z)
    else:
        raise ValidationError(f"unknown field model {model!r}; expected one of {MODELS}")
    bx = bx * field_scale[0]
    bz = bz * field_scale[1]
    ux, uy, uz = axis.u
    a_z = bx * ux + bz * uz
    a_perp2 = bx * bx + bz * bz - a_z * a_z
    return a_z, np.sqrt(np.maximum(a_perp2, 0.0))


def _plane_primitive_scalar(u, v):
    r2 = u * u + v * v
    out = 0.5 * u * math.log(r2) if r2 > 0 else 0.0
    if v != 0:
        out += v * math.atan(u / v)
    return out


def alpha_point(x, z, g: WireGeometry, axis: NVAxis, field_scale=(1.0, 1.0)):
    """Scalar (alpha_z, alpha_perp) for the infinite model; same maths as
    :func:`alpha_xz` without array overhead, for use inside optimizers."""
    f = _plane_primitive_scalar
    u_hi, u_lo = x + 0.5 * g.width, x - 0.5 * g.width
    v_hi, v_lo = z, z - g.thickness
    k = MU0 / (2 * math.pi * g.width * g.thickness)
    bx = k * (f(u_hi, v_hi) - f(u_hi, v_lo) - f(u_lo, v_hi) + f(u_lo, v_lo))
    bz = -k * (f(v_hi, u_hi) - f(v_lo, u_hi) - f(v_hi, u_lo) + f(v_lo, u_lo))
    bx *= field_scale[0]
    bz *= field_scale[1]
    ux, _, uz = axis.u
    a_z = bx * ux + bz * uz
    return a_z, math.sqrt(max(bx * bx + bz * bz - a_z * a_z, 0.0))


def alpha_map(g: WireGeometry, p, axis: NVAxis, model="infinite") -> AlphaPair:
    """Field per ampere at point ``p`` projected to the NV frame."""
    B = wire_field(g, 1.0, p, model)
    a_z, a_perp = project_to_nv_frame(B, axis)
    if np.ndim(a_z) == 0:
        return AlphaPair(float(a_z), float(a_perp))
    return AlphaPair(a_z, a_perp)


@dataclass(frozen=True)
class GridSpec:
    """Rectangular (x', z') grid, meters; endpoints inclusive."""

    x_min: float = -200e-9
    x_max: float = 200e-9
    nx: int = 201
    z_min: float = -100e-9
    z_max: float = 50e-9
    nz: int = 76

    def __post_init__(self):
        if self.nx < 1 or self.nz < 1:
            raise ValidationError("grid needs at least one point per axis")
        if self.x_max < self.x_min or self.z_max < self.z_min:
            raise ValidationError("grid bounds are inverted")

    @property
    def x(self):
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def z(self):
        return np.linspace(self.z_min, self.z_max, self.nz)


@dataclass
class FieldGrid:
    x: np.ndarray
    z: np.ndarray
    magnitude: np.ndarray  # shape (nz, nx), tesla
    current: float

    def rows(self):
        """(x' nm, z' nm, |B| mT) rows, z'-major order."""
        for j, zj in enumerate(self.z):
            for i, xi in enumerate(self.x):
                yield xi * 1e9, zj * 1e9, self.magnitude[j, i] * 1e3


def field_magnitude_grid(g: WireGeometry, current, grid: GridSpec = GridSpec(), model="infinite"):
    xx, zz = np.meshgrid(grid.x, grid.z)
    p = np.stack([xx, np.zeros_like(xx), zz], axis=-1)
    B = wire_field(g, current, p, model)
    return FieldGrid(grid.x, grid.z, np.linalg.norm(B, axis=-1), current)
