"""Spectral and time-trace fits that turn raw data into field-per-current ratios.

ODMR spectra are fitted with a baseline plus four Gaussian dips; the line
centers give B_z. Nuclear-oscillation traces are fitted with an undamped
sinusoid whose frequency gives B_perp. Slopes of B vs drive current are the
alpha ratios consumed by :mod:`nvloc.locator`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage, optimize, signal

from .errors import (
    AmbiguousBranchError,
    FitError,
    InconsistentInputsError,
    InsufficientDataError,
    NoOscillationError,
    UnderResolvedError,
    ValidationError,
)
from .spin_model import SpinConstants, nuclear_oscillation_frequency, secular_transitions

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))
MIN_SAMPLES = 16


@dataclass
class OdmrSpectrum:
    frequencies: np.ndarray  # Hz, strictly increasing
    pl: np.ndarray  # counts / s
    current: float = 0.0  # A
    noise: np.ndarray | None = None  # counts / s, per point

    def __post_init__(self):
        self.frequencies = np.asarray(self.frequencies, dtype=float)
        self.pl = np.asarray(self.pl, dtype=float)
        if self.frequencies.shape != self.pl.shape or self.frequencies.ndim != 1:
            raise ValidationError("frequency and PL samples must be 1-D and of equal length")
        if len(self.frequencies) < MIN_SAMPLES:
            raise ValidationError(f"need at least {MIN_SAMPLES} samples, got {len(self.frequencies)}")
        if np.any(np.diff(self.frequencies) <= 0):
            raise ValidationError("frequencies must be strictly increasing")
        if self.noise is not None:
            self.noise = np.asarray(self.noise, dtype=float)
            if self.noise.shape != self.pl.shape or np.any(self.noise <= 0):
                raise ValidationError("noise estimates must be positive, one per sample")


@dataclass
class NutationTrace:
    delays: np.ndarray  # s, strictly increasing
    signal: np.ndarray  # dimensionless
    current: float = 0.0  # A

    def __post_init__(self):
        self.delays = np.asarray(self.delays, dtype=float)
        self.signal = np.asarray(self.signal, dtype=float)
        if self.delays.shape != self.signal.shape or self.delays.ndim != 1:
            raise ValidationError("delay and signal samples must be 1-D and of equal length")
        if len(self.delays) < MIN_SAMPLES:
            raise ValidationError(f"need at least {MIN_SAMPLES} samples, got {len(self.delays)}")
        if np.any(np.diff(self.delays) <= 0):
            raise ValidationError("delays must be strictly increasing")


@dataclass(frozen=True)
class GaussianLine:
    center: float
    sigma: float
    amplitude: float
    center_err: float
    branch: int | None = None  # +1 / -1 electron branch
    m_I: float | None = None


@dataclass
class GaussianQuadruplet:
    baseline: float
    lines: list  # four GaussianLine, ascending center
    residual_norm: float
    iterations: int
    ambiguous: bool = False

    @property
    def centers(self):
        return np.array([line.center for line in self.lines])

    @property
    def center_errors(self):
        return np.array([line.center_err for line in self.lines])

    def to_dict(self):
        return {
            "baseline_cps": self.baseline,
            "lines": [
                {
                    "center_hz": line.center,
                    "center_err_hz": line.center_err,
                    "sigma_hz": line.sigma,
                    "amplitude_cps": line.amplitude,
                    "branch": line.branch,
                    "m_I": line.m_I,
                }
                for line in self.lines
            ],
            "residual_norm": self.residual_norm,
            "iterations": self.iterations,
            "ambiguous": self.ambiguous,
        }


@dataclass(frozen=True)
class SinusoidFit:
    frequency: float
    amplitude: float
    phase: float
    offset: float
    frequency_err: float
    amplitude_err: float
    phase_err: float
    offset_err: float
    residual_norm: float

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class LinearFit:
    slope: float
    slope_err: float
    intercept: float
    intercept_err: float
    residual_rms: float
    n: int
    model: str = "linear"

    def __call__(self, x):
        return self.slope * np.asarray(x) + self.intercept

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


# ---------------------------------------------------------------- ODMR


def _gauss_model(params, f):
    baseline = params[0]
    out = np.full_like(f, baseline)
    for k in range(4):
        c, s, a = params[1 + 3 * k : 4 + 3 * k]
        out += a * np.exp(-0.5 * ((f - c) / s) ** 2)
    return out


def _gauss_jacobian(params, f):
    jac = np.empty((len(f), len(params)))
    jac[:, 0] = 1.0
    for k in range(4):
        c, s, a = params[1 + 3 * k : 4 + 3 * k]
        d = (f - c) / s
        e = np.exp(-0.5 * d * d)
        jac[:, 1 + 3 * k] = a * e * d / s
        jac[:, 2 + 3 * k] = a * e * d * d / s
        jac[:, 3 + 3 * k] = e
    return jac


MIN_DIP_SIGNIFICANCE = 5.0  # fitted dip depth over its standard error


def _robust_std(x):
    return 1.4826 * np.median(np.abs(x - np.median(x)))


def _initial_dips(f, y, window):
    smooth = ndimage.uniform_filter1d(y, size=window, mode="nearest")
    baseline = float(np.median(y))
    noise = _robust_std(y - smooth) / math.sqrt(window)
    peaks, props = signal.find_peaks(-smooth, prominence=max(5.0 * noise, 1e-12 * abs(baseline)))
    if len(peaks) < 4:
        raise UnderResolvedError(
            f"found {len(peaks)} resolvable dips, need 4; widen the scan or improve SNR"
        )
    best = np.sort(peaks[np.argsort(props["prominences"])[-4:]])
    widths = signal.peak_widths(-smooth, best, rel_height=0.5)[0]
    df = np.median(np.diff(f))
    guesses = [baseline]
    for idx, width in zip(best, widths):
        sigma = max(width * df / FWHM_PER_SIGMA, df)
        guesses += [f[idx], sigma, smooth[idx] - baseline]
    return np.array(guesses)


def _doublet_dips(f, y, window, split, sigma):
    """Starting values from the two strongest dip pairs spaced by ``split``.

    Used when plain peak picking merges a doublet and grabs a noise dip
    instead; the pair template keeps both members of each doublet.
    """
    smooth = ndimage.uniform_filter1d(y, size=window, mode="nearest")
    baseline = float(np.median(y))
    depth = baseline - smooth
    lo = np.interp(f - split / 2, f, depth, left=0.0, right=0.0)
    hi = np.interp(f + split / 2, f, depth, left=0.0, right=0.0)
    score = np.minimum(lo, hi)
    first = int(np.argmax(score))
    score = np.where(np.abs(f - f[first]) < split, -np.inf, score)
    second = int(np.argmax(score))
    guesses = [baseline]
    for center in sorted((f[first], f[second])):
        for line in (center - split / 2, center + split / 2):
            guesses += [line, sigma, -float(np.interp(line, f, depth))]
    return np.array(guesses)


def assign_branches(centers, c: SpinConstants = SpinConstants(), tol=0.1, max_mismatch=0.5):
    """Label four ascending centers with (branch, m_I).

    Tries the adjacent pairing (c0, c1 | c2, c3) and the interleaved pairing
    (c0, c2 | c1, c3) and keeps the one whose in-branch splittings match
    A_z. Returns ``None`` when both are equally consistent (within
    ``tol * A_z``); raises when neither pairing matches within
    ``max_mismatch * A_z`` (summed over both branches). The lower-frequency
    branch is labelled -1, which fixes B_z >= 0; the sign is not observable
    from a single spectrum.
    """
    c0, c1, c2, c3 = np.sort(np.asarray(centers, dtype=float))
    cost_adjacent = abs(c1 - c0 - c.A_z) + abs(c3 - c2 - c.A_z)
    cost_interleaved = abs(c2 - c0 - c.A_z) + abs(c3 - c1 - c.A_z)
    if min(cost_adjacent, cost_interleaved) > max_mismatch * c.A_z:
        raise UnderResolvedError("fitted lines do not form two hyperfine doublets split by A_z")
    if abs(cost_adjacent - cost_interleaved) < tol * c.A_z:
        return None
    if cost_adjacent < cost_interleaved:
        return [(-1, +0.5), (-1, -0.5), (+1, -0.5), (+1, +0.5)]
    return [(-1, +0.5), (+1, -0.5), (-1, -0.5), (+1, +0.5)]


def fit_four_gaussians(
    s: OdmrSpectrum, c: SpinConstants = SpinConstants(), window=5, max_iter=200
) -> GaussianQuadruplet:
    """Least-squares fit of baseline + four Gaussian dips to an ODMR spectrum."""
    f0 = float(np.mean(s.frequencies))
    f_scale = 1e6
    y_scale = float(np.median(np.abs(s.pl))) or 1.0
    f = (s.frequencies - f0) / f_scale
    y = s.pl / y_scale
    w = np.ones_like(y) if s.noise is None else y_scale / s.noise

    p0 = _initial_dips(f, y, window)

    def resid(p):
        return w * (_gauss_model(p, f) - y)

    def jac(p):
        return w[:, None] * _gauss_jacobian(p, f)

    def solve(start):
        result = optimize.least_squares(
            resid, start, jac=jac, method="lm", x_scale="jac",
            gtol=1e-8, ftol=1e-12, xtol=1e-12, max_nfev=max_iter,
        )
        if result.status <= 0:
            raise FitError(
                f"four-Gaussian fit did not converge: {result.message}", residual=float(np.linalg.norm(result.fun))
            )
        order = np.argsort(result.x[1::3])
        return result, assign_branches(result.x[1::3][order] * f_scale, c)

    try:
        result, labels = solve(p0)
    except UnderResolvedError:
        sigma = min(float(np.median(np.abs(p0[2::3]))), 0.5 * c.A_z / f_scale)
        result, labels = solve(_doublet_dips(f, y, window, c.A_z / f_scale, sigma))
    residual_norm = float(np.linalg.norm(result.fun))

    p = result.x
    dof = max(len(y) - len(p), 1)
    jtj = result.jac.T @ result.jac
    cov = np.linalg.pinv(jtj)
    if s.noise is None:
        cov = cov * (residual_norm**2 / dof)
    errs = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    amps, amp_errs = p[3::3], errs[3::3]
    if np.any((amps >= 0) | (np.abs(amps) < MIN_DIP_SIGNIFICANCE * amp_errs)):
        raise UnderResolvedError("a fitted line is not a significant dip; the spectrum does not resolve four lines")

    raw = []
    for k in range(4):
        cen, sig, amp = p[1 + 3 * k : 4 + 3 * k]
        raw.append((cen * f_scale + f0, abs(sig) * f_scale, amp * y_scale, errs[1 + 3 * k] * f_scale))
    raw.sort(key=lambda item: item[0])
    lines = [
        GaussianLine(
            center=cen,
            sigma=sig,
            amplitude=amp,
            center_err=err,
            branch=None if labels is None else labels[k][0],
            m_I=None if labels is None else labels[k][1],
        )
        for k, (cen, sig, amp, err) in enumerate(raw)
    ]
    return GaussianQuadruplet(
        baseline=float(p[0] * y_scale),
        lines=lines,
        residual_norm=residual_norm * y_scale if s.noise is None else residual_norm,
        iterations=int(result.nfev),
        ambiguous=labels is None,
    )


def bz_from_centers(q: GaussianQuadruplet, c: SpinConstants = SpinConstants()) -> float:
    """B_z (T) from the difference of branch-mean frequencies; m_I terms cancel."""
    if q.ambiguous or any(line.branch is None for line in q.lines):
        raise AmbiguousBranchError("cannot tell which lines belong to which electron branch")
    plus = [line.center for line in q.lines if line.branch > 0]
    minus = [line.center for line in q.lines if line.branch < 0]
    if len(plus) != 2 or len(minus) != 2:
        raise AmbiguousBranchError("expected two lines per electron branch")
    return (np.mean(plus) - np.mean(minus)) / (2.0 * c.gamma_e)


def bz_error(q: GaussianQuadruplet, c: SpinConstants = SpinConstants()) -> float:
    """Standard error of :func:`bz_from_centers`, assuming independent centers."""
    return float(np.sqrt(np.sum(q.center_errors**2)) / (4.0 * c.gamma_e))


# ---------------------------------------------------------------- linear


def linear_fit(x, y, sigma=None, model="linear") -> LinearFit:
    """Least-squares straight line. Inverse-variance weighted when ``sigma`` is given."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError("x and y must be 1-D and of equal length")
    if len(np.unique(x)) < 2:
        raise InsufficientDataError("need at least two distinct abscissae for a line")
    w = np.ones_like(y) if sigma is None else 1.0 / np.asarray(sigma, dtype=float)
    design = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(design * w[:, None], y * w, rcond=None)
    resid = y - design @ coef
    n = len(x)
    cov = np.linalg.inv((design * w[:, None]).T @ (design * w[:, None]))
    if sigma is None:
        cov = cov * (resid @ resid / (n - 2) if n > 2 else 0.0)
    errs = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    rms = float(np.sqrt(np.mean(resid**2)))
    return LinearFit(float(coef[0]), float(errs[0]), float(coef[1]), float(errs[1]), rms, n, model)


def _fold_fit(x, y, sigma):
    # y = |a x + b|: try every sign change between consecutive sorted currents
    order = np.argsort(x)
    xs, ys = x[order], y[order]
    ss = None if sigma is None else np.asarray(sigma, dtype=float)[order]
    best = None
    for k in range(len(xs) + 1):
        signs = np.where(np.arange(len(xs)) < k, -1.0, 1.0)
        try:
            fit = linear_fit(xs, signs * ys, ss, model="abs")
        except InsufficientDataError:
            continue
        pred = fit(xs)
        w = 1.0 if ss is None else 1.0 / ss
        sse = float(np.sum((w * (np.abs(pred) - ys)) ** 2))
        if best is None or sse < best[0] - 1e-300:
            best = (sse, fit)
    fit = best[1]
    if fit.slope < 0:
        fit = LinearFit(-fit.slope, fit.slope_err, -fit.intercept, fit.intercept_err,
                        fit.residual_rms, fit.n, "abs")
    return fit


def _extract_alpha(currents, values, sigma, model, what):
    currents = np.asarray(currents, dtype=float)
    values = np.asarray(values, dtype=float)
    if currents.shape != values.shape:
        raise ValidationError("currents and field values must have equal length")
    if len(np.unique(currents)) < 3:
        raise InsufficientDataError(f"{what} extraction needs at least 3 distinct currents")
    if model == "linear":
        return linear_fit(currents, values, sigma)
    if model == "signed":
        keep = currents != 0
        signed = np.sign(currents[keep]) * values[keep]
        sig = None if sigma is None else np.asarray(sigma, dtype=float)[keep]
        if len(np.unique(currents[keep])) < 2:
            raise InsufficientDataError(f"{what} extraction needs nonzero currents")
        fit = linear_fit(currents[keep], signed, sig)
        return LinearFit(fit.slope, fit.slope_err, fit.intercept, fit.intercept_err,
                         fit.residual_rms, fit.n, "signed")
    if model == "abs":
        return _fold_fit(currents, values, sigma)
    raise ValidationError(f"unknown line model {model!r}")


def extract_alpha_z(currents, b_z, sigma=None, model="linear") -> LinearFit:
    """Slope of B_z against drive current (T/A).

    ``model="linear"`` treats ``b_z`` as signed. ``model="abs"`` fits
    |a i + b| to unsigned values, as obtained from spectra, with a >= 0.
    """
    return _extract_alpha(currents, b_z, sigma, model, "alpha_z")


def extract_alpha_perp(currents, b_perp, sigma=None, model="signed") -> LinearFit:
    """Slope of B_perp against drive current (T/A).

    B_perp is a magnitude. ``model="signed"`` gives each value the sign of
    its current and fits a line (negligible ambient transverse field);
    ``model="abs"`` fits |a i + b| with a collinear ambient term b.
    """
    return _extract_alpha(currents, b_perp, sigma, model, "alpha_perp")


# ---------------------------------------------------------------- sinusoid


def _periodogram(t, y):
    span = t[-1] - t[0]
    nyquist = 0.5 / np.median(np.diff(t))
    freqs = np.arange(1.0, int(10 * span * nyquist) + 1) / (10 * span)
    power = signal.lombscargle(t, y - y.mean(), 2 * np.pi * freqs)
    return freqs, power


def fit_sinusoid(trace: NutationTrace) -> SinusoidFit:
    """Fit offset + amplitude * cos(2 pi f t + phase) with no decay term."""
    t = trace.delays
    y = trace.signal
    freqs, power = _periodogram(t, y)
    peak = int(np.argmax(power))
    if power[peak] <= 0 or power[peak] < 3.0 * np.median(power):
        raise NoOscillationError("no significant periodogram peak in the trace")
    f_guess = freqs[peak]

    t0 = t[0]
    tau = t - t0
    f_scale = f_guess

    def model_terms(fr):
        arg = 2 * np.pi * fr * f_scale * tau
        return np.cos(arg), np.sin(arg)

    # linear params (offset, p, q) for y = offset + p cos + q sin
    cs, sn = model_terms(1.0)
    lin, *_ = np.linalg.lstsq(np.column_stack([np.ones_like(tau), cs, sn]), y, rcond=None)
    p0 = np.array([1.0, *lin])

    def resid(p):
        cs, sn = model_terms(p[0])
        return p[1] + p[2] * cs + p[3] * sn - y

    def jac(p):
        cs, sn = model_terms(p[0])
        dphi = 2 * np.pi * f_scale * tau
        return np.column_stack([dphi * (-p[2] * sn + p[3] * cs), np.ones_like(tau), cs, sn])

    result = optimize.least_squares(resid, p0, jac=jac, method="lm", xtol=1e-14, ftol=1e-14,
                                    gtol=1e-10, max_nfev=200)
    if result.status <= 0:
        raise FitError(f"sinusoid fit did not converge: {result.message}")
    fr, offset, pc, qs = result.x
    res = result.fun
    dof = max(len(y) - 4, 1)
    cov = np.linalg.pinv(result.jac.T @ result.jac) * (res @ res / dof)
    err = np.sqrt(np.clip(np.diag(cov), 0.0, None))

    frequency = fr * f_scale
    amplitude = math.hypot(pc, qs)
    # p cos + q sin = A cos(x + phi) with phi = atan2(-q, p); shift to t = 0
    phase = math.atan2(-qs, pc) - 2 * np.pi * frequency * t0
    phase = (phase + np.pi) % (2 * np.pi) - np.pi
    amp_err = math.hypot(pc * err[2], qs * err[3]) / amplitude if amplitude > 0 else float("inf")
    phase_err = math.hypot(qs * err[2], pc * err[3]) / amplitude**2 if amplitude > 0 else float("inf")
    if frequency * (t[-1] - t[0]) < 2.0:
        warnings.warn("trace spans fewer than two oscillation periods", RuntimeWarning, stacklevel=2)
    return SinusoidFit(
        frequency=float(frequency),
        amplitude=float(amplitude),
        phase=float(phase),
        offset=float(offset),
        frequency_err=float(err[0] * f_scale),
        amplitude_err=float(amp_err),
        phase_err=float(phase_err),
        offset_err=float(err[1]),
        residual_norm=float(np.linalg.norm(res)),
    )


def bperp_from_omega(f_no: float, B_z: float, c: SpinConstants = SpinConstants()) -> float:
    """Invert the nuclear oscillation frequency for B_perp (T)."""
    floor = abs(c.gamma_I * B_z)
    if f_no < floor:
        raise InconsistentInputsError(
            f"oscillation frequency {f_no:.6g} Hz is below the axial floor {floor:.6g} Hz"
        )
    return math.sqrt(f_no * f_no - floor * floor) / c.gamma_I_perp


# ---------------------------------------------------------------- synthetic data


def default_odmr_frequencies(c: SpinConstants = SpinConstants(), half_span=20e6, n=401):
    return np.linspace(c.D - half_span, c.D + half_span, n)


def synth_odmr(
    c: SpinConstants,
    B_z: float,
    linewidth: float = 1e6,
    contrast: float = 0.03,
    rate: float = 1e5,
    integration: float = 1.0,
    seed: int = 0,
    frequencies=None,
    current: float = 0.0,
    noise: bool = True,
) -> OdmrSpectrum:
    """Four Gaussian dips at the secular line positions with Poisson photon noise.

    ``linewidth`` is the Gaussian sigma (Hz); ``integration`` the counting
    time per frequency point (s); PL is reported in counts per second.
    """
    f = default_odmr_frequencies(c) if frequencies is None else np.asarray(frequencies, dtype=float)
    mean = np.ones_like(f)
    for center in secular_transitions(c, B_z).as_array():
        mean -= contrast * np.exp(-0.5 * ((f - center) / linewidth) ** 2)
    expected = rate * integration * mean
    if not noise:
        return OdmrSpectrum(f, expected / integration, current, None)
    rng = np.random.default_rng(seed)
    counts = rng.poisson(expected).astype(float)
    return OdmrSpectrum(f, counts / integration, current, np.sqrt(np.maximum(counts, 1.0)) / integration)


def nutation_model(c: SpinConstants, B_z, B_perp, delays):
    """Ideal m_S = 0 population from the closed-form oscillation frequency."""
    f = nuclear_oscillation_frequency(c, B_z, B_perp)
    if f == 0:
        return np.ones_like(np.asarray(delays, dtype=float))
    depth = (c.gamma_I_perp * B_perp / f) ** 2
    return 1.0 - 0.5 * depth * np.sin(np.pi * f * np.asarray(delays, dtype=float)) ** 2


def synth_nutation(
    c: SpinConstants,
    B_z: float,
    B_perp: float,
    noise: float = 0.01,
    seed: int = 0,
    delays=None,
    current: float = 0.0,
) -> NutationTrace:
    """Nuclear-oscillation trace with additive Gaussian noise of std ``noise``."""
    t = np.linspace(0.0, 200e-6, 201) if delays is None else np.asarray(delays, dtype=float)
    clean = nutation_model(c, B_z, B_perp, t)
    rng = np.random.default_rng(seed)
    return NutationTrace(t, clean + noise * rng.standard_normal(t.shape), current)
