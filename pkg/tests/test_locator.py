import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from matplotlib.path import Path as PolyPath
from scipy import ndimage

from conftest import NV1, NV2
from nvloc.errors import (
    NoConsistentPositionError,
    OutOfRangeError,
    UnstableInversionError,
    ValidationError,
)
from nvloc.locator import (
    ONE_SIGMA_MASS,
    AlphaMeasurement,
    GeometryPrior,
    PdfGrid,
    SearchDomain,
    array_statistics,
    bootstrap_positions,
    fit_position,
    position_pdf,
    summarize,
)
from nvloc.wire_field import NVAxis, WireGeometry, alpha_map

nm = 1e-9
G = WireGeometry()
AX = NVAxis.from_crystal()


def alpha_at(x, z, g=G, model="infinite"):
    return alpha_map(g, (x, 0.0, z), AX, model)


def nv1_measurement(sigma=0.02):
    a = alpha_at(*NV1)
    return AlphaMeasurement(a.alpha_z, a.alpha_perp, sigma)


# ---------------------------------------------------------------- types


def test_measurement_defaults_and_validation():
    assert AlphaMeasurement(1.4, 1.9).sigma_alpha == 0.02
    with pytest.raises(ValidationError):
        AlphaMeasurement(1.4, math.nan)
    with pytest.raises(ValidationError):
        AlphaMeasurement(1.4, 1.9, -0.1)


def test_prior_defaults_and_validation():
    p = GeometryPrior()
    assert (p.w_mean, p.w_sigma, p.t_mean, p.t_sigma) == (36e-9, 5e-9, 20e-9, 2e-9)
    assert (p.rel_perp, p.rel_z) == (0.011, 0.037)
    with pytest.raises(ValidationError):
        GeometryPrior(w_mean=0)
    with pytest.raises(ValidationError):
        GeometryPrior(t_sigma=-1e-9)


def test_domain_validation():
    with pytest.raises(ValidationError):
        SearchDomain(z_max=1e-9)
    with pytest.raises(ValidationError):
        SearchDomain(x_min=10e-9)


# ---------------------------------------------------------------- point fit


def test_round_trip_nv1():
    a = alpha_at(*NV1)
    fit = fit_position(AlphaMeasurement(a.alpha_z, a.alpha_perp), G, AX)
    assert abs(fit.x - NV1[0]) < 0.1 * nm and abs(fit.z - NV1[1]) < 0.1 * nm
    assert fit.residual < 1e-6


@given(st.floats(-290, 290).filter(lambda x: abs(x) > 2), st.floats(-99, -1.5))
def test_round_trip_property(x, z):
    a = alpha_at(x * nm, z * nm)
    fit = fit_position(AlphaMeasurement(a.alpha_z, a.alpha_perp), G, AX)
    assert abs(fit.x - x * nm) < 0.1 * nm and abs(fit.z - z * nm) < 0.1 * nm


def test_round_trip_finite_model():
    a = alpha_at(*NV2, model="finite")
    fit = fit_position(AlphaMeasurement(a.alpha_z, a.alpha_perp), G, AX, model="finite")
    assert abs(fit.x - NV2[0]) < 0.1 * nm and abs(fit.z - NV2[1]) < 0.1 * nm


def test_quoted_slopes_land_near_nv1():
    fit = fit_position(AlphaMeasurement(1.4, 1.9), G, AX)
    assert abs(fit.x - NV1[0]) < 3 * 0.8 * nm
    assert abs(fit.z - NV1[1]) < 3 * 2.7 * nm


def test_sign_convention_and_forced_half_plane():
    a = alpha_at(*NV1)
    m = AlphaMeasurement(-a.alpha_z, a.alpha_perp)
    assert fit_position(m, G, AX).x == pytest.approx(-NV1[0], abs=0.1 * nm)
    forced = fit_position(AlphaMeasurement(a.alpha_z, a.alpha_perp), G, AX, half_plane="negative")
    assert forced.x < 0


def test_mirror_solution_is_flagged():
    a = alpha_at(0.0, -20 * nm)
    fit = fit_position(AlphaMeasurement(a.alpha_z, a.alpha_perp), G, AX)
    assert fit.mirror and fit.alternate is not None
    assert abs(fit.x) < 0.1 * nm


def test_zero_alpha_perp_rejected():
    with pytest.raises(ValidationError):
        fit_position(AlphaMeasurement(1.0, 0.0), G, AX)


def test_out_of_range_alpha():
    with pytest.raises(OutOfRangeError):
        fit_position(AlphaMeasurement(40.0, 50.0), G, AX)


def test_inconsistent_alpha_pair():
    # a large axial part with almost no transverse part is not produced anywhere
    with pytest.raises(NoConsistentPositionError):
        fit_position(AlphaMeasurement(2.0, 0.05, 0.001), G, AX)


# ---------------------------------------------------------------- bootstrap


def test_bootstrap_is_deterministic_and_worker_independent():
    m = nv1_measurement()
    a = bootstrap_positions(m, n=100, seed=5, workers=1)
    b = bootstrap_positions(m, n=100, seed=5, workers=1)
    c = bootstrap_positions(m, n=100, seed=5, workers=2)
    assert np.array_equal(a.samples, b.samples)
    assert np.array_equal(a.samples, c.samples)
    assert not np.array_equal(a.samples, bootstrap_positions(m, n=100, seed=6).samples)


def test_degenerate_priors_give_identical_samples():
    prior = GeometryPrior(w_sigma=0, t_sigma=0)
    r = bootstrap_positions(nv1_measurement(0.0), prior, n=100, seed=0)
    assert r.failures == 0
    assert np.ptp(r.samples, axis=0).max() == 0


def test_bootstrap_needs_100_draws():
    with pytest.raises(ValidationError):
        bootstrap_positions(nv1_measurement(), n=50)


def test_unstable_inversion():
    with pytest.raises(UnstableInversionError) as info:
        bootstrap_positions(AlphaMeasurement(1.4, 1.9, 2.0), n=100, seed=0)
    assert info.value.failure_fraction > 0.10


def test_failures_are_reported_not_raised_below_threshold():
    r = bootstrap_positions(AlphaMeasurement(1.4, 1.9, 2.0), n=100, seed=0, check_stability=False)
    assert r.failures > 10
    assert len(r.samples) == r.n - r.failures


@pytest.mark.parametrize("seed", [11, 12, 13])
def test_inflating_sigma_does_not_shrink_spread(seed):
    base = summarize(bootstrap_positions(nv1_measurement(0.02), n=150, seed=seed).samples)
    wide = summarize(bootstrap_positions(nv1_measurement(0.04), n=150, seed=seed).samples)
    assert wide.std_x >= base.std_x and wide.std_z >= base.std_z


def test_finite_mode_widens_lateral_spread():
    m = nv1_measurement()
    inf = summarize(bootstrap_positions(m, model="infinite", n=300, seed=2).samples)
    fin = summarize(bootstrap_positions(m, model="finite", n=300, seed=2).samples)
    assert fin.std_x >= inf.std_x


def test_nv2_finite_depth_spread():
    a = alpha_at(*NV2)
    r = bootstrap_positions(AlphaMeasurement(a.alpha_z, a.alpha_perp), model="finite", n=400, seed=3)
    est = summarize(r.samples)
    assert 11.2 * nm / 2 <= est.std_z <= 11.2 * nm * 2


# ---------------------------------------------------------------- summaries


def test_summarize_constant_and_permutation():
    s = np.tile([[-80e-9, -9e-9]], (10, 1))
    assert summarize(s).std_x == 0 and summarize(s).std_z == 0
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(50, 2))
    a, b = summarize(pts), summarize(pts[rng.permutation(50)])
    assert (a.x, a.z) == pytest.approx((b.x, b.z), rel=1e-14)
    with pytest.raises(ValidationError):
        summarize(pts[:1])


def test_array_statistics_table_values():
    mean, std = array_statistics([-83.9e-9, -122.6e-9, -152.3e-9])
    assert mean == pytest.approx(-119.6e-9, abs=0.05e-9)
    assert std == pytest.approx(28.0e-9, abs=0.05e-9)
    assert array_statistics([-1e-7, -1e-7]) == (-1e-7, 0.0)


# ---------------------------------------------------------------- density


def gaussian_samples(n=2000, seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal([-84e-9, -9e-9], [1e-9, 3e-9], size=(n, 2))


def test_pdf_normalized_and_peaked_at_mean():
    s = gaussian_samples()
    pdf = position_pdf(s)
    assert pdf.total_mass() == pytest.approx(1.0, abs=1e-3)
    mx, mz = pdf.mode()
    assert abs(mx - s[:, 0].mean()) < pdf.bandwidth[0]
    assert abs(mz - s[:, 1].mean()) < pdf.bandwidth[1]


def test_pdf_one_sigma_contour_mass():
    s = gaussian_samples(4000)
    pdf = position_pdf(s)
    lines = pdf.contours((ONE_SIGMA_MASS,))[ONE_SIGMA_MASS]
    assert len(lines) == 1
    poly = PolyPath(lines[0])
    fresh = gaussian_samples(20000, seed=9)
    inside = poly.contains_points(fresh).mean()
    # kernel smoothing inflates the region slightly
    assert 0.36 < inside < 0.47


def test_pdf_on_explicit_grid_and_bandwidth():
    s = gaussian_samples()
    grid = PdfGrid(-100e-9, -70e-9, 61, -25e-9, 5e-9, 61)
    pdf = position_pdf(s, grid, bandwidth=1e-9)
    assert pdf.bandwidth == (1e-9, 1e-9)
    assert pdf.density.shape == (61, 61)
    assert np.all(pdf.density >= 0)


def test_pdf_degenerate_samples():
    s = np.tile([[-84e-9, -9e-9]], (200, 1))
    pdf = position_pdf(s)
    assert pdf.degenerate
    assert pdf.total_mass() == pytest.approx(1.0)


def test_pdf_sample_floor():
    assert position_pdf(gaussian_samples(90)).total_mass() == pytest.approx(1.0, abs=1e-3)
    with pytest.raises(ValidationError):
        position_pdf(gaussian_samples(30))


@pytest.fixture(scope="module")
def nv1_pdf():
    m = nv1_measurement()
    r = bootstrap_positions(m, n=400, seed=4)
    return position_pdf(r.samples), fit_position(m, G, AX)


def test_nv1_bootstrap_pdf_is_unimodal(nv1_pdf):
    pdf, point = nv1_pdf
    d = pdf.density
    peaks = (d == ndimage.maximum_filter(d, size=5)) & (d > 0.05 * d.max())
    assert peaks.sum() == 1
    inner = pdf.contours((ONE_SIGMA_MASS,))[ONE_SIGMA_MASS]
    assert any(PolyPath(c).contains_point((point.x, point.z)) for c in inner)


@pytest.mark.xfail(strict=False, reason="density peak wanders 0.4-2.4 nm between seeds along the flat x-z ridge")
def test_nv1_pdf_mode_near_point_fit(nv1_pdf):
    pdf, point = nv1_pdf
    assert math.dist(pdf.mode(), (point.x, point.z)) < 1 * nm
