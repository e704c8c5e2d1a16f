import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qvort.flow import (
    FlowFields,
    InsufficientDataError,
    Spectrum,
    clip_velocity,
    energy_spectrum,
    equipartition_ratio,
    fit_power_law,
    flow_spectra,
    fluid_variables,
    helmholtz_decompose,
    loglog_fit,
    quantum_potential,
    read_spectrum_csv,
    rotational_fraction,
    write_spectrum_csv,
)
from qvort.grid import GridSpec, WaveField


def test_plane_wave_velocity():
    g = GridSpec(2, 32, 2.0)
    X, Y = g.mesh()
    k = 2 * np.pi * 3 / g.length
    flow = fluid_variables(WaveField(g, 0.7 * np.exp(1j * k * Y)))
    np.testing.assert_allclose(flow.v[0], 0.0, atol=1e-11)
    np.testing.assert_allclose(flow.v[1], k, rtol=1e-12)
    np.testing.assert_allclose(flow.rho, 0.49)
    assert not flow.flagged.any()


def test_density_floor_flags_nulls(sin_field_2d):
    f, _ = sin_field_2d
    vals = f.values.copy()
    vals[5, 5] = 1e-20
    flow = fluid_variables(f.with_values(vals))
    assert flow.flagged[5, 5]
    assert np.all(np.isfinite(flow.v))


def test_quantum_potential_of_modulated_amplitude():
    g = GridSpec(2, 64)
    X, _ = g.mesh()
    k = 2 * np.pi * 2
    amp = 1 + 0.1 * np.cos(k * X)
    q, flagged = quantum_potential(WaveField(g, amp))
    np.testing.assert_allclose(q, -0.1 * k * k * np.cos(k * X) / (2 * amp), atol=1e-9)
    assert not flagged.any()


def _potential_and_solenoidal(g):
    X, Y = g.mesh()
    k = 2 * np.pi
    phi = np.sin(k * X) * np.cos(2 * k * Y)
    vp = np.stack([k * np.cos(k * X) * np.cos(2 * k * Y), -2 * k * np.sin(k * X) * np.sin(2 * k * Y)])
    # curl-only field from the stream function psi = cos(3kx) sin(ky): v = (d_y psi, -d_x psi)
    vr = np.stack([k * np.cos(3 * k * X) * np.cos(k * Y), 3 * k * np.sin(3 * k * X) * np.sin(k * Y)])
    return phi, vp, vr


def test_helmholtz_separates_known_parts():
    g = GridSpec(2, 32)
    _, vp, vr = _potential_and_solenoidal(g)
    flow = FlowFields(g, np.ones(g.shape), vp + vr + np.array([0.3, -0.2])[:, None, None])
    out = helmholtz_decompose(flow)
    np.testing.assert_allclose(out.v_p, vp, atol=1e-11)
    np.testing.assert_allclose(out.v_r, vr, atol=1e-11)
    np.testing.assert_allclose(out.v_mean, [0.3, -0.2], atol=1e-14)


def test_flow_spectra_split():
    g = GridSpec(2, 32)
    _, vp, vr = _potential_and_solenoidal(g)
    s = flow_spectra(vp + vr, g)
    assert s["potential"].total() == pytest.approx(0.5 * np.mean(np.sum(vp**2, 0)), rel=1e-12)
    assert s["rotational"].total() == pytest.approx(0.5 * np.mean(np.sum(vr**2, 0)), rel=1e-12)
    assert rotational_fraction(vp, g) < 1e-20
    # potential part lives in shell round(sqrt(1 + 4)) = 2, rotational in round(sqrt(10)) = 3
    assert np.argmax(s["potential"].energy) == 2
    assert np.argmax(s["rotational"].energy) == 3


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31), dims=st.sampled_from([2, 3]))
def test_spectrum_parseval(seed, dims):
    g = GridSpec(dims, 16)
    v = np.random.default_rng(seed).standard_normal((dims,) + g.shape)
    s = energy_spectrum(v, g)
    assert s.total() == pytest.approx(0.5 * np.mean(np.sum(v**2, 0)), rel=1e-12)
    assert s.counts.sum() == g.size


def test_clip_velocity():
    g = GridSpec(2, 16)
    v = np.zeros((2,) + g.shape)
    v[0, 1, 1] = 100.0
    v[1, 2, 2] = -3.0
    clipped, n = clip_velocity(FlowFields(g, np.ones(g.shape), v), kappa=1.0)
    assert n == 1
    assert clipped.v[0, 1, 1] == pytest.approx(16.0)
    assert clipped.v[1, 2, 2] == -3.0
    with pytest.raises(ValueError):
        clip_velocity(FlowFields(g, np.ones(g.shape), v), kappa=0.0)


@settings(max_examples=25, deadline=None)
@given(slope=st.floats(-4, 2), amp=st.floats(1e-3, 1e3))
def test_loglog_fit_recovers_power_law(slope, amp):
    k = np.arange(2.0, 40.0)
    s, a, r2 = loglog_fit(k, amp * k**slope)
    assert s == pytest.approx(slope, abs=1e-9)
    assert a == pytest.approx(amp, rel=1e-9)
    assert r2 == pytest.approx(1.0, abs=1e-9)


def test_fit_power_law_on_spectrum():
    k = np.arange(0.0, 33.0)
    e = np.where(k > 0, 2.0 * np.where(k > 0, k, 1.0) ** -1.5, 0.0)
    spec = Spectrum(k, e, np.ones_like(k, dtype=int))
    fit = fit_power_law(spec, 4, 16)
    assert fit.slope == pytest.approx(-1.5, abs=1e-12)
    assert fit.npoints == 13
    with pytest.raises(InsufficientDataError):
        fit_power_law(spec, 4, 6)
    e2 = e.copy()
    e2[10] = 0.0
    with pytest.raises(ValueError):
        fit_power_law(Spectrum(k, e2, spec.counts), 4, 16)


def test_equipartition_ratio():
    k = np.arange(10.0)
    c = np.ones(10, int)
    sp = Spectrum(k, np.full(10, 2.0), c)
    sr = Spectrum(k, np.full(10, 4.0), c)
    assert equipartition_ratio(sp, sr, 2, 5) == pytest.approx(0.5)
    with pytest.raises(ZeroDivisionError):
        equipartition_ratio(sp, Spectrum(k, np.zeros(10), c), 2, 5)


def test_spectrum_csv_roundtrip(tmp_path):
    g = GridSpec(2, 16)
    v = np.random.default_rng(1).standard_normal((2,) + g.shape)
    s = energy_spectrum(v, g)
    write_spectrum_csv(s, tmp_path / "s.csv")
    back = read_spectrum_csv(tmp_path / "s.csv")
    assert np.array_equal(back.energy, s.energy)
    assert np.array_equal(back.counts, s.counts)
