import numpy as np
import pytest
import scipy.special as sp
from scipy.integrate import trapezoid
from hypothesis import given, settings, strategies as st

from qvort.analytic import (
    J1_FIRST_PEAK,
    J1_FIRST_ZERO,
    J1_MAX,
    BesselPairParams,
    LocalVortexModel,
    bessel_angle,
    bessel_j0,
    bessel_j1,
    bessel_k_for_box,
    bessel_pair_field,
    bessel_radii,
    bessel_vortex_positions,
    erfc_window,
    local_compression,
    local_phase,
    local_velocity,
    local_vortex_field,
    radial_window,
    smooth_step,
)
from qvort.grid import GridSpec
from qvort.vortex import detect_vortices_2d, material_velocity, vortex_velocity


def test_bessel_against_scipy():
    x = np.concatenate([np.linspace(0, 30, 3001), np.geomspace(30, 500, 400), [1e-8, 7.999999, 8.000001]])
    np.testing.assert_allclose(bessel_j0(x), sp.j0(x), atol=5e-14)
    np.testing.assert_allclose(bessel_j1(x), sp.j1(x), atol=5e-14)
    np.testing.assert_allclose(bessel_j1(-x), -sp.j1(x), atol=5e-14)
    assert isinstance(bessel_j1(1.0), float)


@settings(max_examples=50)
@given(st.floats(0, 200))
def test_bessel_scalar_property(x):
    assert abs(bessel_j0(x) - sp.j0(x)) < 5e-14
    assert abs(bessel_j1(x) - sp.j1(x)) < 5e-14


def test_bessel_constants():
    assert J1_FIRST_ZERO == pytest.approx(sp.jn_zeros(1, 1)[0], abs=1e-14)
    assert J1_FIRST_PEAK == pytest.approx(sp.jnp_zeros(1, 1)[0], abs=1e-14)
    assert J1_MAX == pytest.approx(sp.j1(sp.jnp_zeros(1, 1)[0]), abs=1e-15)


def test_bessel_radii_frozen():
    inner, outer = bessel_radii(BesselPairParams(0.3, 1.0))
    # root-found with scipy.special.j1 and brentq
    assert inner == pytest.approx(0.6308692556957952, abs=1e-13)
    assert outer == pytest.approx(3.1023660912539053, abs=1e-13)
    assert sp.j1(inner) == pytest.approx(0.3, abs=1e-14)


@pytest.mark.parametrize("c0", [0.0, -0.1, J1_MAX, 0.7])
def test_bessel_params_reject(c0):
    with pytest.raises(ValueError):
        BesselPairParams(c0, 1.0)


def test_bessel_positions_rotate():
    p = BesselPairParams(0.25, 2.0, (1.0, 1.0))
    t = 0.3
    inner, outer = bessel_vortex_positions(p, t)
    assert (inner.charge, outer.charge) == (1, -1)
    theta = 0.5 * 4.0 * t
    assert bessel_angle(p, t) == pytest.approx(theta)
    r_in, r_out = bessel_radii(p)
    np.testing.assert_allclose(inner.position, (1 + r_in * np.cos(theta), 1 + r_in * np.sin(theta)))
    np.testing.assert_allclose(outer.position, (1 + r_out * np.cos(theta), 1 + r_out * np.sin(theta)))


def _bessel_setup(c0=0.3, t=0.0, n=256):
    g = GridSpec(2, n)
    k = bessel_k_for_box(g.length)
    c = (0.5 + 0.37 * g.dx, 0.5 + 0.21 * g.dx)
    p = BesselPairParams(c0, k, c)
    return g, p, bessel_pair_field(p, g, t)


def test_bessel_field_closed_form_inside_window():
    g, p, f = _bessel_setup(t=0.01)
    X, Y = g.mesh()
    dx, dy = g.minimum_image(X - p.center[0]), g.minimum_image(Y - p.center[1])
    r = np.hypot(dx, dy)
    exact = p.c0 - sp.j1(p.k * r) * np.exp(1j * (np.arctan2(dy, dx) - 0.5 * p.k**2 * 0.01))
    core = r < 0.8 * J1_FIRST_ZERO / p.k
    np.testing.assert_allclose(f.values[core], exact[core], atol=1e-12)
    assert f.meta["params"]["c0"] == 0.3


@pytest.mark.parametrize("c0", [0.2, 0.3, 0.4])
def test_bessel_field_has_exactly_the_pair(c0):
    g, p, f = _bessel_setup(c0, t=0.05)
    vort = detect_vortices_2d(f)
    assert len(vort) == 2
    for exp in bessel_vortex_positions(p, 0.05):
        match = [v for v in vort if np.hypot(v.x - exp.x, v.y - exp.y) < 0.1 * g.dx]
        assert len(match) == 1 and match[0].charge == exp.charge


def test_bessel_velocity_is_rigid_rotation():
    g, p, f = _bessel_setup(0.3)
    for v, r in zip(bessel_vortex_positions(p), bessel_radii(p)):
        w = vortex_velocity(f, v.position)
        d = np.subtract(v.position, p.center)
        expected = 0.5 * p.k**2 * np.array([-d[1], d[0]])
        np.testing.assert_allclose(w, expected, rtol=1e-4, atol=1e-4 * p.k**2 * r)


def test_windows():
    s = np.linspace(-1, 2, 31)
    st_ = smooth_step(s)
    assert st_[0] == 0 and st_[-1] == 1 and np.all(np.diff(st_) >= 0)
    assert smooth_step(0.5) == pytest.approx(0.5)
    g = GridSpec(2, 64)
    w = radial_window(g, (0.5, 0.5))
    X, Y = g.mesh()
    r = np.hypot(X - 0.5, Y - 0.5)
    assert np.all(w[r <= 0.27] == 1) and np.all(w[r >= 0.45] == 0)
    e = erfc_window(g, (0.5, 0.5), r_half=0.25, width=0.01)
    assert e[32, 48] == pytest.approx(0.5)
    with pytest.raises(ValueError):
        radial_window(g, (0.5, 0.5), 0.3, 0.2)
    with pytest.raises(ValueError):
        erfc_window(g, (0.5, 0.5), r_half=0.6)


def test_local_phase_frozen_value():
    s, sr, spp = local_phase(1.0, 2.0, np.pi / 4)
    assert s == pytest.approx(np.arctan(2.0), abs=1e-15)
    assert sr == pytest.approx(np.pi / 4)
    assert spp == pytest.approx(np.arctan(2.0) - np.pi / 4)


@settings(max_examples=30)
@given(a=st.floats(0.2, 5), b=st.floats(0.2, 5))
def test_local_phase_is_continuous_and_winds_once(a, b):
    phi = np.linspace(-np.pi, 3 * np.pi, 4001)
    s, _, spp = local_phase(a, b, phi)
    assert np.max(np.abs(np.diff(s))) < 0.05 * max(a / b, b / a)
    i0, i1 = 500, 500 + 2000
    assert s[i1] - s[i0] == pytest.approx(2 * np.pi, abs=1e-9)
    np.testing.assert_allclose(np.tan(s[::37]), (b / a) * np.tan(phi[::37]), rtol=1e-6, atol=1e-6)


def _fd_phase(a, b, x, y, h=1e-4):
    """Central differences of the phase of a x + i b y, taken relative to the centre point."""

    def ang(dx, dy):
        return np.angle((a * (x + dx) + 1j * b * (y + dy)) / (a * x + 1j * b * y))

    gx = (ang(h, 0) - ang(-h, 0)) / (2 * h)
    gy = (ang(0, h) - ang(0, -h)) / (2 * h)
    lap = (ang(h, 0) + ang(-h, 0) + ang(0, h) + ang(0, -h)) / h**2
    return gx, gy, lap


@pytest.mark.parametrize("a,b", [(1.0, 2.0), (1.5, 0.7)])
def test_local_velocity_and_compression_match_finite_differences(a, b):
    phi = np.linspace(0.1, 2 * np.pi, 13)
    r = 0.8
    x, y = r * np.cos(phi), r * np.sin(phi)
    gx, gy, lap = _fd_phase(a, b, x, y)
    v = local_velocity(a, b, r, phi)
    np.testing.assert_allclose(v[:, 0], gx, atol=1e-6)
    np.testing.assert_allclose(v[:, 1], gy, atol=1e-6)
    np.testing.assert_allclose(local_compression(a, b, r, phi), lap, atol=1e-4)


def test_local_frozen_values():
    # Laplacian of atan2(2y, x) on the unit circle at 45 degrees, checked symbolically
    assert local_compression(1.0, 2.0, 1.0, np.pi / 4) == pytest.approx(-0.96)
    assert local_compression(1.0, 2.0, 1.0, -np.pi / 4) == pytest.approx(0.96)
    assert np.linalg.norm(local_velocity(1.0, 1.0, 0.5, 0.3)) == pytest.approx(2.0)
    assert local_compression(1.0, 1.0, 0.5, 0.3) == 0.0
    assert np.linalg.norm(local_velocity(1.0, 2.0, 1.0, 0.0)) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        local_velocity(1.0, 1.0, 0.0, 0.3)


@pytest.mark.parametrize("a,b", [(1.0, 2.0), (3.0, 0.5)])
def test_local_circulation_is_quantized(a, b):
    phi = np.linspace(0, 2 * np.pi, 20001)
    r = 0.3
    v = local_velocity(a, b, r, phi)
    tangent = r * np.stack([-np.sin(phi), np.cos(phi)], -1)
    assert trapezoid(np.sum(v * tangent, -1), phi) == pytest.approx(2 * np.pi, rel=1e-8)


def test_local_vortex_field():
    g = GridSpec(2, 256)
    x0 = (0.5 + 0.37 * g.dx, 0.5 + 0.37 * g.dx)
    m = LocalVortexModel(1.0, 2.0, x0, orientation=0.3)
    f = local_vortex_field(m, g, window=None)
    fw = local_vortex_field(m, g)
    X, Y = g.mesh()
    near = np.hypot(X - x0[0], Y - x0[1]) < 0.2
    np.testing.assert_allclose(fw.values[near], f.values[near])
    assert fw.meta["params"]["window"] == "bump"
    # linear near the null: it is at rest and carries no material velocity (window leakage ~1e-6)
    np.testing.assert_allclose(vortex_velocity(fw, x0), 0.0, atol=1e-5)
    np.testing.assert_allclose(material_velocity(fw, x0), 0.0, atol=1e-5)
    with pytest.raises(ValueError):
        local_vortex_field(LocalVortexModel(1.0, 1.0, (1.5, 0.5)), g)
    with pytest.raises(ValueError):
        LocalVortexModel(0.0, 1.0)
