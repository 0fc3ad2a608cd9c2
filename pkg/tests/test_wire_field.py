import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import NV1
from nvloc.errors import SingularPointError, ValidationError
from nvloc.wire_field import (
    MU0,
    GridSpec,
    NVAxis,
    WireGeometry,
    alpha_map,
    alpha_point,
    alpha_xz,
    field_magnitude_grid,
    project_to_nv_frame,
    rect_wire_field_finite,
    rect_wire_field_infinite,
    thin_wire_field,
    wire_field,
)

nm = 1e-9


def filament_sum(g, current, x, z, n=300):
    """Midpoint-rule sum of line currents over the cross-section."""
    xs = (np.arange(n) + 0.5) / n * g.width - g.width / 2
    zs = (np.arange(n) + 0.5) / n * g.thickness
    fx, fz = np.meshgrid(xs, zs)
    dx, dz = x - fx, z - fz
    r2 = dx * dx + dz * dz
    k = MU0 * current / (2 * math.pi * n * n)
    return np.array([np.sum(k * dz / r2), 0.0, -np.sum(k * dx / r2)])


outside = st.tuples(st.floats(-300, 300), st.floats(-150, -2)).map(lambda p: (p[0] * nm, 0.0, p[1] * nm))
anywhere = st.tuples(st.floats(-60, 60), st.floats(-40, 40)).map(lambda p: (p[0] * nm, 0.0, p[1] * nm))


# ---------------------------------------------------------------- geometry and axis


def test_geometry_defaults_and_validation():
    g = WireGeometry()
    assert (g.width, g.thickness, g.length) == (36e-9, 20e-9, 500e-9)
    with pytest.raises(ValidationError):
        WireGeometry(width=0)


def test_axis_from_crystal_directions():
    u = NVAxis.from_crystal().vector
    assert np.allclose(u, [0.0, math.sqrt(2 / 3), 1 / math.sqrt(3)], atol=1e-15)
    assert abs(np.linalg.norm(u) - 1) < 1e-12


def test_axis_validation():
    with pytest.raises(ValidationError):
        NVAxis((1.0, 1.0, 0.0))
    with pytest.raises(ValidationError):
        NVAxis.from_crystal(wire=(1, 1, 1))


# ---------------------------------------------------------------- thin wire


def test_thin_wire_ampere(geom):
    b = thin_wire_field(1e-3, (0.0, 0.0, geom.thickness / 2 - 100 * nm), geom)
    assert np.linalg.norm(b) == pytest.approx(2.0e-3, rel=1e-12)


def test_thin_wire_below_center_points_along_x(geom):
    b = thin_wire_field(1e-3, (0.0, 0.0, -50 * nm), geom)
    assert b[1] == 0 and abs(b[2]) < 1e-20 and b[0] < 0


def test_thin_wire_sign_flip_and_singularity(geom):
    p = (30 * nm, 0.0, -40 * nm)
    assert np.allclose(thin_wire_field(-1e-3, p, geom), -thin_wire_field(1e-3, p, geom))
    with pytest.raises(SingularPointError):
        thin_wire_field(1e-3, (0.0, 0.0, geom.thickness / 2), geom)


# ---------------------------------------------------------------- infinite bar


@given(outside)
def test_infinite_matches_filament_sum(p):
    g = WireGeometry()
    b = rect_wire_field_infinite(g, 1e-3, p)
    ref = filament_sum(g, 1e-3, p[0], p[2])
    assert np.allclose(b, ref, rtol=2e-3, atol=2e-3 * np.linalg.norm(ref))


@given(anywhere)
def test_infinite_analytic_matches_quadrature_everywhere(p):
    # includes points inside the conductor, where the kernel is singular
    g = WireGeometry()
    a = rect_wire_field_infinite(g, 1e-3, p)
    q = rect_wire_field_infinite(g, 1e-3, p, method="quadrature", rtol=1e-8)
    assert np.allclose(a, q, rtol=1e-6, atol=1e-6 * np.linalg.norm(q) + 1e-15)


def test_infinite_far_field_is_thin_wire(geom):
    r = 20 * max(geom.width, geom.thickness) * 1.01
    for angle in np.linspace(-math.pi, 0, 7):
        p = (r * math.cos(angle), 0.0, geom.thickness / 2 + r * math.sin(angle))
        b = rect_wire_field_infinite(geom, 1e-3, p)
        ref = thin_wire_field(1e-3, p, geom)
        assert np.linalg.norm(b - ref) < 1e-3 * np.linalg.norm(ref)


def test_tiny_cross_section_is_thin_wire():
    g = WireGeometry(1 * nm, 1 * nm)
    b = rect_wire_field_infinite(g, 1e-3, (0.0, 0.0, g.thickness / 2 - 100 * nm))
    assert np.linalg.norm(b) == pytest.approx(2.0e-3, rel=1e-4)


def test_nv1_field_scale(geom):
    b = rect_wire_field_infinite(geom, 1.0, (NV1[0], 0.0, NV1[1]))
    thin = thin_wire_field(1.0, (NV1[0], 0.0, NV1[1]), geom)
    assert 2.0 < np.linalg.norm(b) < 2.7
    assert np.linalg.norm(b) == pytest.approx(np.linalg.norm(thin), rel=0.05)


def test_infinite_has_no_axial_component(geom):
    b = rect_wire_field_infinite(geom, 1e-3, np.array([[10 * nm, 5 * nm, -3 * nm], [-80 * nm, 0, 50 * nm]]))
    assert np.all(b[..., 1] == 0)


@given(outside, st.floats(-5e-3, 5e-3))
def test_linearity(p, current):
    g = WireGeometry()
    for model in ("infinite", "finite"):
        assert np.allclose(wire_field(g, current, p, model), current * wire_field(g, 1.0, p, model), rtol=1e-12)


@given(outside)
def test_mirror_symmetry_in_x(p):
    g = WireGeometry()
    b = rect_wire_field_infinite(g, 1.0, p)
    m = rect_wire_field_infinite(g, 1.0, (-p[0], 0.0, p[2]))
    assert m[0] == pytest.approx(b[0], rel=1e-9, abs=1e-12)
    assert m[2] == pytest.approx(-b[2], rel=1e-9, abs=1e-12)


@given(outside)
def test_alpha_invariant_under_center_plane_reflection(p):
    g, ax = WireGeometry(), NVAxis.from_crystal()
    a = alpha_map(g, p, ax)
    r = alpha_map(g, (p[0], 0.0, g.thickness - p[2]), ax)
    assert r.alpha_z == pytest.approx(a.alpha_z, rel=1e-8, abs=1e-12)
    assert r.alpha_perp == pytest.approx(a.alpha_perp, rel=1e-8, abs=1e-12)


def test_quadrature_tolerance_convergence(geom):
    p = (NV1[0], 0.0, NV1[1])
    coarse = rect_wire_field_infinite(geom, 1.0, p, method="quadrature", rtol=1e-6)
    fine = rect_wire_field_infinite(geom, 1.0, p, method="quadrature", rtol=5e-7)
    assert np.linalg.norm(coarse - fine) < 1e-6 * np.linalg.norm(fine)


def test_unknown_method_rejected(geom):
    with pytest.raises(ValidationError):
        rect_wire_field_infinite(geom, 1.0, (0, 0, -1e-8), method="simpson")


# ---------------------------------------------------------------- finite bar


def test_long_segment_matches_infinite():
    g = WireGeometry(length=100 * 36 * nm)
    for p in [(40 * nm, 0.0, -10 * nm), (-40 * nm, 0.0, -10 * nm), (0.0, 0.0, -30 * nm)]:
        f = rect_wire_field_finite(g, 1.0, p)
        i = rect_wire_field_infinite(g, 1.0, p)
        assert np.linalg.norm(f - i) < 1e-3 * np.linalg.norm(i)


@pytest.mark.parametrize("p", [(NV1[0], 0.0, NV1[1]), (10 * nm, 120 * nm, -15 * nm), (-20 * nm, -300 * nm, 30 * nm)])
def test_finite_analytic_matches_quadrature(geom, p):
    a = rect_wire_field_finite(geom, 1.0, p)
    q = rect_wire_field_finite(geom, 1.0, p, method="quadrature", rtol=1e-8)
    assert np.allclose(a, q, rtol=1e-6, atol=1e-6 * np.linalg.norm(q))


def test_finite_symmetry_about_midplane(geom):
    p = np.array([[-60 * nm, 80 * nm, -12 * nm], [-60 * nm, -80 * nm, -12 * nm]])
    b = rect_wire_field_finite(geom, 1.0, p)
    assert np.allclose(b[0], b[1], rtol=1e-12)
    assert np.all(b[..., 1] == 0)


def test_finite_reduction_at_shallow_depth(geom):
    p = (NV1[0], 0.0, -10 * nm)
    f = np.linalg.norm(rect_wire_field_finite(geom, 1.0, p))
    i = np.linalg.norm(rect_wire_field_infinite(geom, 1.0, p))
    assert 0.005 < 1 - f / i < 0.10


# ---------------------------------------------------------------- projection and alpha


def test_projection_cases(axis):
    u = axis.vector
    assert project_to_nv_frame(2.0 * u, axis)[1] == pytest.approx(0.0, abs=1e-12)
    orth = np.cross(u, [1.0, 0.0, 0.0])
    bz, bp = project_to_nv_frame(orth, axis)
    assert bz == pytest.approx(0.0, abs=1e-15) and bp == pytest.approx(np.linalg.norm(orth))


@given(st.floats(-5, 5), st.floats(-5, 5))
def test_projection_of_wire_field(bx, bz_lab):
    axis = NVAxis.from_crystal()
    bz, bp = project_to_nv_frame(np.array([bx, 0.0, bz_lab]), axis)
    assert bz == pytest.approx(bz_lab / math.sqrt(3), rel=1e-12, abs=1e-15)
    assert bp == pytest.approx(math.sqrt(bx * bx + 2 / 3 * bz_lab**2), rel=1e-9, abs=1e-12)


def test_projection_rejects_non_unit_axis():
    with pytest.raises(ValidationError):
        project_to_nv_frame(np.ones(3), (1.0, 1.0, 0.0))


def test_alpha_map_at_nv1(geom, axis):
    a = alpha_map(geom, (NV1[0], 0.0, NV1[1]), axis)
    assert 1.3 <= a.alpha_z <= 1.5
    assert 1.6 <= a.alpha_perp <= 2.2


def test_alpha_perp_positive_below_surface(geom, axis):
    x = np.linspace(-300, 300, 121) * nm
    z = np.linspace(-100, -1, 45) * nm
    _, a_perp = alpha_xz(*np.meshgrid(x, z), geom, axis)
    assert np.all(a_perp > 0)


@given(st.floats(-300, 300), st.floats(-100, -1))
def test_alpha_point_matches_vectorised(x, z):
    g, ax = WireGeometry(), NVAxis.from_crystal()
    a = alpha_xz(x * nm, z * nm, g, ax)
    b = alpha_point(x * nm, z * nm, g, ax)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-15)


def test_doubling_width_far_from_wire(axis):
    for x in (-180 * nm, -250 * nm, 200 * nm):
        a = alpha_map(WireGeometry(36 * nm), (x, 0.0, -10 * nm), axis)
        b = alpha_map(WireGeometry(72 * nm), (x, 0.0, -10 * nm), axis)
        assert abs(b.alpha_z / a.alpha_z - 1) < 0.10
        assert abs(b.alpha_perp / a.alpha_perp - 1) < 0.10


# ---------------------------------------------------------------- grid


def test_grid_two_millitesla_at_100nm(geom):
    grid = GridSpec(-100 * nm, 100 * nm, 3, geom.thickness / 2 - 100 * nm, geom.thickness / 2 - 100 * nm, 1)
    fg = field_magnitude_grid(geom, 1e-3, grid)
    assert fg.magnitude[0, 1] == pytest.approx(2.0e-3, rel=0.01)


def test_grid_symmetric_in_x(geom):
    fg = field_magnitude_grid(geom, 1e-3, GridSpec(nx=81, nz=31))
    assert np.allclose(fg.magnitude, fg.magnitude[:, ::-1], rtol=1e-9)


def test_grid_maximum_next_to_conductor(geom):
    grid = GridSpec(nx=101, nz=76)
    fg = field_magnitude_grid(geom, 1e-3, grid)
    xx, zz = np.meshgrid(fg.x, fg.z)
    inside = (np.abs(xx) <= geom.width / 2) & (zz >= 0) & (zz <= geom.thickness)
    dx = np.maximum(np.abs(xx) - geom.width / 2, 0)
    dz = np.maximum(np.maximum(-zz, zz - geom.thickness), 0)
    dist = np.hypot(dx, dz)
    mag = np.where(inside, -np.inf, fg.magnitude)
    j, i = np.unravel_index(np.argmax(mag), mag.shape)
    pitch = max(fg.x[1] - fg.x[0], fg.z[1] - fg.z[0])
    assert dist[j, i] <= dist[~inside].min() + pitch


def test_grid_rows_units(geom):
    fg = field_magnitude_grid(geom, 1e-3, GridSpec(0.0, 0.0, 1, -50 * nm, -50 * nm, 1))
    rows = list(fg.rows())
    assert len(rows) == 1
    x_nm, z_nm, b_mt = rows[0]
    assert (x_nm, z_nm) == pytest.approx((0.0, -50.0))
    assert b_mt == pytest.approx(np.linalg.norm(rect_wire_field_infinite(geom, 1e-3, (0, 0, -50 * nm))) * 1e3)


def test_grid_validation():
    with pytest.raises(ValidationError):
        GridSpec(nx=0)
    with pytest.raises(ValidationError):
        GridSpec(x_min=1.0, x_max=0.0)
