"""Invert measured field-per-current ratios for the NV position (x', z').

The forward map comes from :mod:`nvloc.wire_field`. A coarse grid search
over the depth-bounded domain is followed by a bounded local least-squares
refinement in each x' half-plane. Uncertainty is propagated by re-running
the fit on Gaussian draws of the wire geometry and of the measured ratios.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import contourpy
import numpy as np
from scipy import optimize

from .errors import (
    InversionError,
    NoConsistentPositionError,
    OutOfRangeError,
    UnstableInversionError,
    ValidationError,
)
from .wire_field import NVAxis, WireGeometry, alpha_point, alpha_xz

DEFAULT_AXIS = NVAxis.from_crystal()
NOISE_FLOOR = 1e-6  # T/A; residual scale used when sigma_alpha == 0
MAX_FAILURE_FRACTION = 0.10
ONE_SIGMA_MASS = 1.0 - math.exp(-0.5)


@dataclass(frozen=True)
class AlphaMeasurement:
    """Measured alpha_z (signed) and alpha_perp with a shared 1-sigma error, T/A."""

    alpha_z: float
    alpha_perp: float
    sigma_alpha: float = 0.02

    def __post_init__(self):
        if not (math.isfinite(self.alpha_z) and math.isfinite(self.alpha_perp)):
            raise ValidationError("alpha values must be finite")
        if not (math.isfinite(self.sigma_alpha) and self.sigma_alpha >= 0):
            raise ValidationError("sigma_alpha must be >= 0")

    @property
    def noise_scale(self):
        return max(self.sigma_alpha, NOISE_FLOOR)


@dataclass(frozen=True)
class GeometryPrior:
    """Gaussian priors on wire width and thickness (m) and relative field errors."""

    w_mean: float = 36e-9
    w_sigma: float = 5e-9
    t_mean: float = 20e-9
    t_sigma: float = 2e-9
    rel_perp: float = 0.011
    rel_z: float = 0.037
    length: float = 500e-9

    def __post_init__(self):
        if self.w_mean <= 0 or self.t_mean <= 0 or self.length <= 0:
            raise ValidationError("geometry means must be positive")
        if min(self.w_sigma, self.t_sigma, self.rel_perp, self.rel_z) < 0:
            raise ValidationError("prior sigmas must be >= 0")

    @property
    def mean_geometry(self):
        return WireGeometry(self.w_mean, self.t_mean, self.length)


@dataclass(frozen=True)
class SearchDomain:
    """Depth-bounded search window and grid pitch, meters."""

    x_min: float = -300e-9
    x_max: float = 300e-9
    z_min: float = -100e-9
    z_max: float = -1e-9
    pitch: float = 2e-9

    def __post_init__(self):
        if not (self.x_min < 0 < self.x_max):
            raise ValidationError("search window must straddle x' = 0")
        if not (self.z_min < self.z_max <= 0):
            raise ValidationError("search depth must lie below the surface")
        if self.pitch <= 0:
            raise ValidationError("grid pitch must be positive")

    def grid(self):
        x = np.arange(self.x_min, self.x_max + 0.5 * self.pitch, self.pitch)
        z = np.arange(self.z_min, self.z_max + 0.5 * self.pitch, self.pitch)
        z = z[z <= self.z_max + 1e-15]
        return np.meshgrid(x, z)


@dataclass(frozen=True)
class Candidate:
    x: float
    z: float
    residual: float


@dataclass(frozen=True)
class PositionFit:
    x: float
    z: float
    residual: float
    mirror: bool = False
    alternate: Candidate | None = None


def _refine(m, g, axis, model, field_scale, x0, z0, bounds_x, bounds_z):
    # work in nm to keep the problem well scaled
    def resid(p):
        if model == "infinite":
            a_z, a_p = alpha_point(p[0] * 1e-9, p[1] * 1e-9, g, axis, field_scale)
        else:
            a_z, a_p = alpha_xz(p[0] * 1e-9, p[1] * 1e-9, g, axis, model, field_scale)
        return np.array([a_z - m.alpha_z, a_p - m.alpha_perp])

    lo = np.array([bounds_x[0], bounds_z[0]]) * 1e9
    hi = np.array([bounds_x[1], bounds_z[1]]) * 1e9
    start = np.clip(np.array([x0, z0]) * 1e9, lo, hi)
    result = optimize.least_squares(
        resid, start, bounds=(lo, hi), method="trf", xtol=1e-12, ftol=1e-14, gtol=1e-14, max_nfev=200
    )
    return Candidate(result.x[0] * 1e-9, result.x[1] * 1e-9, float(np.linalg.norm(result.fun)))


def fit_position(
    m: AlphaMeasurement,
    g: WireGeometry = WireGeometry(),
    axis: NVAxis = DEFAULT_AXIS,
    model: str = "infinite",
    domain: SearchDomain = SearchDomain(),
    half_plane: str = "auto",
    field_scale=(1.0, 1.0),
) -> PositionFit:
    """Position whose predicted (alpha_z, alpha_perp) best matches ``m``.

    ``half_plane`` is ``"auto"`` (search both, prefer the lower residual),
    ``"negative"`` (x' <= 0) or ``"positive"`` (x' >= 0). When the two
    half-plane optima are within the noise scale of each other, the one
    matching the current-direction convention (alpha_z >= 0 for x' <= 0)
    is returned and ``mirror`` is set; the other is kept in ``alternate``.
    """
    if not m.alpha_perp > 0:
        raise ValidationError("alpha_perp must be > 0; the transverse field never vanishes below the surface")
    if half_plane not in ("auto", "negative", "positive"):
        raise ValidationError(f"unknown half_plane {half_plane!r}")

    xx, zz = domain.grid()
    a_z, a_p = alpha_xz(xx, zz, g, axis, model, field_scale)
    noise = m.noise_scale
    if math.hypot(m.alpha_z, m.alpha_perp) > np.max(np.hypot(a_z, a_p)) + 5 * noise:
        raise OutOfRangeError("measured field ratio exceeds every value in the search domain")

    cost = (a_z - m.alpha_z) ** 2 + (a_p - m.alpha_perp) ** 2
    halves = {
        "negative": (xx <= 0, (domain.x_min, 0.0)),
        "positive": (xx >= 0, (0.0, domain.x_max)),
    }
    wanted = ("negative", "positive") if half_plane == "auto" else (half_plane,)
    found = {}
    for name in wanted:
        mask, bounds_x = halves[name]
        idx = np.unravel_index(np.argmin(np.where(mask, cost, np.inf)), cost.shape)
        found[name] = _refine(
            m, g, axis, model, field_scale, xx[idx], zz[idx], bounds_x, (domain.z_min, domain.z_max)
        )

    mirror = False
    alternate = None
    if len(found) == 1:
        best = found[wanted[0]]
    else:
        neg, pos = found["negative"], found["positive"]
        if abs(neg.residual - pos.residual) <= noise:
            mirror = True
            best, alternate = (neg, pos) if m.alpha_z >= 0 else (pos, neg)
        else:
            best, alternate = (neg, pos) if neg.residual < pos.residual else (pos, neg)

    if best.residual > 5 * noise:
        raise NoConsistentPositionError(
            f"best residual {best.residual:.3g} T/A exceeds 5 sigma ({5 * noise:.3g} T/A)",
            residual=best.residual,
            x=best.x,
            z=best.z,
        )
    return PositionFit(best.x, best.z, best.residual, mirror, alternate)


# ---------------------------------------------------------------- bootstrap


@dataclass
class BootstrapResult:
    samples: np.ndarray  # (n_ok, 2) [x', z'] in meters
    n: int
    failures: int
    mirror_count: int
    model: str
    seed: int

    @property
    def failure_fraction(self):
        return self.failures / self.n if self.n else 0.0


def _positive_normal(rng, mean, sigma):
    while True:
        value = rng.normal(mean, sigma)
        if value > 0:
            return value


def _bootstrap_one(k, m, prior, axis, model, forward, seed, domain, half_plane):
    rng = np.random.default_rng([seed, k])
    w = _positive_normal(rng, prior.w_mean, prior.w_sigma)
    t = _positive_normal(rng, prior.t_mean, prior.t_sigma)
    a_z = rng.normal(m.alpha_z, m.sigma_alpha)
    a_p = rng.normal(m.alpha_perp, m.sigma_alpha)
    scale = (1.0, 1.0)
    if model == "finite":
        scale = (1.0 + rng.normal(0.0, prior.rel_perp), 1.0 + rng.normal(0.0, prior.rel_z))
    try:
        fit = fit_position(
            AlphaMeasurement(a_z, a_p, m.sigma_alpha),
            WireGeometry(w, t, prior.length),
            axis,
            forward,
            domain,
            half_plane,
            scale,
        )
    except (InversionError, ValidationError):
        return None
    return fit.x, fit.z, fit.mirror


def _bootstrap_chunk(ks, *args):
    return [_bootstrap_one(k, *args) for k in ks]


def default_workers():
    env = os.environ.get("NVLOC_THREADS")
    if env:
        return max(1, int(env))
    return 1


def bootstrap_positions(
    m: AlphaMeasurement,
    prior: GeometryPrior = GeometryPrior(),
    axis: NVAxis = DEFAULT_AXIS,
    model: str = "infinite",
    n: int = 5000,
    seed: int = 0,
    forward: str = "infinite",
    domain: SearchDomain = SearchDomain(),
    half_plane: str = "auto",
    workers: int | None = None,
    check_stability: bool = True,
) -> BootstrapResult:
    """Re-fit the position ``n`` times under Gaussian perturbations.

    Each draw perturbs width, thickness (redrawn until positive), alpha_z
    and alpha_perp independently. ``model="finite"`` additionally scales the
    lab x' and z' field components by 1 + N(0, rel_perp) and 1 + N(0, rel_z)
    to account for the finite wire length. ``forward`` selects the field
    model used inside each fit. Draw ``k`` uses the RNG stream seeded by
    ``(seed, k)``, so results do not depend on ``workers``.
    """
    if n < 100:
        raise ValidationError("bootstrap needs n >= 100")
    if model not in ("infinite", "finite"):
        raise ValidationError(f"unknown bootstrap model {model!r}")
    workers = default_workers() if workers is None else max(1, int(workers))
    args = (m, prior, axis, model, forward, seed, domain, half_plane)

    if workers == 1:
        results = _bootstrap_chunk(range(n), *args)
    else:
        chunks = [range(i, min(i + 250, n)) for i in range(0, n, 250)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(_bootstrap_chunk, chunks, *[[a] * len(chunks) for a in args])
            results = [r for part in parts for r in part]

    ok = [r for r in results if r is not None]
    samples = np.array([(x, z) for x, z, _ in ok]).reshape(-1, 2)
    out = BootstrapResult(
        samples=samples,
        n=n,
        failures=n - len(ok),
        mirror_count=sum(1 for *_, flag in ok if flag),
        model=model,
        seed=seed,
    )
    if check_stability and out.failure_fraction > MAX_FAILURE_FRACTION:
        raise UnstableInversionError(
            f"{out.failure_fraction:.1%} of bootstrap fits failed", failure_fraction=out.failure_fraction
        )
    return out


# ---------------------------------------------------------------- summaries


@dataclass
class PositionEstimate:
    x: float
    z: float
    std_x: float
    std_z: float
    samples: np.ndarray = field(repr=False)
    residual: float | None = None

    def to_dict(self):
        return {
            "x_nm": self.x * 1e9,
            "z_nm": self.z * 1e9,
            "std_x_nm": self.std_x * 1e9,
            "std_z_nm": self.std_z * 1e9,
            "n_samples": int(len(self.samples)),
        }


def summarize(samples, residual=None) -> PositionEstimate:
    """Mean and (sample) standard deviation of bootstrap positions."""
    samples = np.asarray(samples, dtype=float).reshape(-1, 2)
    if len(samples) < 2:
        raise ValidationError("need at least two samples")
    # centring on a sample keeps constant input at exactly zero spread
    shifted = samples - samples[0]
    mean = samples[0] + shifted.mean(axis=0)
    std = shifted.std(axis=0, ddof=1)
    return PositionEstimate(float(mean[0]), float(mean[1]), float(std[0]), float(std[1]), samples, residual)


def array_statistics(estimates):
    """Mean lateral offset and population std of x' over several NVs."""
    xs = np.array([e.x if isinstance(e, PositionEstimate) else float(e) for e in estimates])
    if len(xs) < 2:
        raise ValidationError("need at least two position estimates")
    return float(xs.mean()), float((xs - xs[0]).std(ddof=0))


@dataclass(frozen=True)
class PdfGrid:
    x_min: float
    x_max: float
    nx: int
    z_min: float
    z_max: float
    nz: int

    @property
    def x(self):
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def z(self):
        return np.linspace(self.z_min, self.z_max, self.nz)


@dataclass
class PositionPDF:
    x: np.ndarray
    z: np.ndarray
    density: np.ndarray  # (nz, nx), 1/m^2, sums to 1 over the grid cells
    bandwidth: tuple
    degenerate: bool = False

    @property
    def cell_area(self):
        dx = self.x[1] - self.x[0] if len(self.x) > 1 else 1.0
        dz = self.z[1] - self.z[0] if len(self.z) > 1 else 1.0
        return dx * dz

    def total_mass(self):
        return float(self.density.sum() * self.cell_area)

    def mode(self):
        j, i = np.unravel_index(np.argmax(self.density), self.density.shape)
        return float(self.x[i]), float(self.z[j])

    def level_for_mass(self, mass):
        """Density threshold whose super-level set holds ``mass`` of the probability."""
        flat = np.sort(self.density.ravel())[::-1]
        cumulative = np.cumsum(flat) * self.cell_area
        k = min(int(np.searchsorted(cumulative, mass)), len(flat) - 1)
        return float(flat[k])

    def contours(self, masses=(ONE_SIGMA_MASS, 0.865, 0.989)):
        """Iso-density polylines enclosing the given probability masses.

        Returns ``{mass: [array (N, 2) of (x', z') in meters, ...]}``; lines
        are closed, or end on the grid boundary.
        """
        gen = contourpy.contour_generator(self.x, self.z, self.density)
        return {mass: list(gen.lines(self.level_for_mass(mass))) for mass in masses}


def silverman_bandwidth(values):
    values = np.asarray(values, dtype=float)
    n = len(values)
    spread = values.std(ddof=1)
    iqr = np.subtract(*np.percentile(values, [75, 25])) / 1.349
    scale = min(spread, iqr) if iqr > 0 else spread
    # two-dimensional product kernel: n^(-1/(d+4)) with d = 2
    return scale * n ** (-1.0 / 6.0)


def position_pdf(samples, grid: PdfGrid | None = None, bandwidth="auto") -> PositionPDF:
    """Gaussian product-kernel density estimate of bootstrap positions on a grid."""
    samples = np.asarray(samples, dtype=float).reshape(-1, 2)
    # a 100-draw bootstrap may lose up to 10% to failed fits
    if len(samples) < 50:
        raise ValidationError("density estimation needs at least 50 samples")
    # centring on a sample keeps constant input at exactly zero spread
    shifted = samples - samples[0]
    mean = samples[0] + shifted.mean(axis=0)
    std = shifted.std(axis=0, ddof=1)
    degenerate = bool(np.any(std <= 1e-15 * np.maximum(np.abs(mean), 1e-9)))

    if degenerate:
        h = (0.0, 0.0)
    elif bandwidth == "auto":
        h = (silverman_bandwidth(samples[:, 0]), silverman_bandwidth(samples[:, 1]))
    elif np.ndim(bandwidth) == 0:
        h = (float(bandwidth), float(bandwidth))
    else:
        h = tuple(float(b) for b in bandwidth)

    if grid is None:
        half = np.maximum(4 * std + 3 * np.asarray(h), 1e-9)
        grid = PdfGrid(mean[0] - half[0], mean[0] + half[0], 121, mean[1] - half[1], mean[1] + half[1], 121)
    x, z = grid.x, grid.z

    if degenerate:
        density = np.zeros((len(z), len(x)))
        density[np.argmin(np.abs(z - mean[1])), np.argmin(np.abs(x - mean[0]))] = 1.0
    else:
        kx = np.exp(-0.5 * ((x[:, None] - samples[None, :, 0]) / h[0]) ** 2)
        kz = np.exp(-0.5 * ((z[:, None] - samples[None, :, 1]) / h[1]) ** 2)
        density = kz @ kx.T
    pdf = PositionPDF(x, z, density, h, degenerate)
    total = density.sum() * pdf.cell_area
    if total > 0:
        pdf.density = density / total
    return pdf
