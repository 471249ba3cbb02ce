import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slepian_qns.control import envelope_from_sequence
from slepian_qns.dpss import DpssParams, dpswf, flat_top_envelope, generate_dpss
from slepian_qns.envelope import ControlEnvelope
from slepian_qns.errors import GridMismatchError, InvalidParameterError
from slepian_qns.filters import (
    FilterFunction,
    amplitude_filter,
    count_peaks,
    dephasing_filter,
    fourier_sum,
    peak_width,
    predict_fidelity,
    reconstruct_filter_by_sid,
)
from slepian_qns.noise import PsdModel, synthesize_ensemble
from slepian_qns.sensor import simulate_fidelity


def dpss_env(N=64, NW=4, k=0, dt=1e-5, rabi=1e6, mode="abs_area", area=2 * np.pi):
    seq = generate_dpss(DpssParams.from_nw(N, NW, dt=dt, k=k))
    return envelope_from_sequence(seq, rabi, area, mode)


def nyquist_grid(env, points=2048):
    return np.linspace(0.0, np.pi / env.dt, points)


def test_zero_envelope():
    env = ControlEnvelope(np.zeros(16), 1e-6)
    assert np.all(amplitude_filter(env, nyquist_grid(env, 64)).values == 0)


def test_constant_envelope_dc_value():
    N, dt, rabi = 50, 2e-6, 3e4
    env = ControlEnvelope(np.ones(N), dt, rabi)
    F = amplitude_filter(env, [0.0, 1.0])
    assert F.values[0] == pytest.approx((rabi * N * dt) ** 2, rel=1e-12)


def test_fourier_sum_matches_naive_loop():
    rng = np.random.default_rng(3)
    w = rng.normal(size=7) + 1j * rng.normal(size=7)
    omega = np.array([0.0, 0.3, 2.0])
    naive = [sum(w[n] * 0.5 * np.exp(-1j * om * n * 0.5) for n in range(7)) for om in omega]
    np.testing.assert_allclose(fourier_sum(w, 0.5, omega), naive, atol=1e-12)


@given(c=st.floats(0.01, 10.0), k=st.integers(0, 3))
@settings(max_examples=20, deadline=None)
def test_scaling_is_quadratic(c, k):
    env = dpss_env(N=32, NW=3, k=k)
    g = nyquist_grid(env, 257)
    ref = c**2 * amplitude_filter(env, g).values
    np.testing.assert_allclose(amplitude_filter(env.scaled(c), g).values, ref, rtol=1e-10,
                               atol=1e-12 * ref.max())


def test_time_shift_invariance():
    env = dpss_env(N=32, NW=3, k=2)
    shifted = ControlEnvelope(np.concatenate((np.zeros(9), env.samples)), env.dt, env.rabi_max)
    padded = ControlEnvelope(np.concatenate((env.samples, np.zeros(9))), env.dt, env.rabi_max)
    g = nyquist_grid(env, 513)
    np.testing.assert_allclose(amplitude_filter(shifted, g).values, amplitude_filter(padded, g).values,
                               rtol=1e-9, atol=1e-12 * amplitude_filter(env, g).values.max())


@pytest.mark.parametrize("k", [0, 1, 3])
def test_parseval(k):
    env = dpss_env(N=48, NW=3, k=k)
    two_sided = np.linspace(-np.pi / env.dt, np.pi / env.dt, 4097)
    F = np.abs(fourier_sum(env.rabi_rates, env.dt, two_sided)) ** 2
    lhs = np.trapezoid(F, two_sided) / (2 * np.pi)
    # one period of the dt-weighted DTFT: (1/2 pi) int |X|^2 = dt sum |Omega|^2
    assert lhs == pytest.approx(env.dt * np.sum(np.abs(env.rabi_rates) ** 2), rel=1e-6)


def test_filter_matches_wavefunction():
    p = DpssParams.from_nw(64, 4, dt=1e-5)
    seq = generate_dpss(p)
    env = envelope_from_sequence(seq, 1e6, mode="peak")
    wf = dpswf(seq, 16 * 64)
    pos = wf.grid >= 0
    F = amplitude_filter(env, wf.grid[pos])
    scale = (env.rabi_max / np.max(np.abs(seq.values)) * env.dt) ** 2
    np.testing.assert_allclose(F.values / scale, wf.values[pos] ** 2, rtol=1e-8,
                               atol=1e-8 * np.max(wf.values**2))


def test_filter_function_validation():
    with pytest.raises(InvalidParameterError):
        FilterFunction([0.0, 1.0], [1.0, -1.0])
    with pytest.raises(InvalidParameterError):
        FilterFunction([1.0, 0.0], [1.0, 1.0])
    with pytest.raises(InvalidParameterError):
        amplitude_filter(dpss_env(), [-1.0, 0.0])


def test_free_evolution_dephasing_limit():
    N, dt = 40, 1e-6
    env = ControlEnvelope(np.zeros(N), dt, 1e5)
    F = dephasing_filter(env, [0.0, 1.0])
    assert F.values[0] == pytest.approx((N * dt) ** 2, rel=1e-9)


def test_constant_drive_dephasing_peak():
    N, dt, rabi = 2000, 1e-6, 2 * np.pi * 1e4
    env = ControlEnvelope(np.ones(N), dt, rabi)
    grid = np.linspace(0.0, 3 * rabi, 61)
    F = dephasing_filter(env, grid)
    assert np.all(F.values >= 0)
    assert abs(grid[np.argmax(F.values)] - rabi) <= grid[1] - grid[0]


def test_dephasing_filter_monte_carlo():
    # a narrow dephasing line at the Rabi frequency, checked against simulation
    N, dt, rabi = 400, 1e-6, 2 * np.pi * 2e4
    env = ControlEnvelope(np.ones(N), dt, rabi)
    grid = np.linspace(0.0, np.pi / dt, 8192)
    F = dephasing_filter(env, grid, components=("x", "y"))
    lo, hi = 0.95 * rabi, 1.05 * rabi
    unit = PsdModel.comb([(lo, hi, 1.0)], "dephasing")
    psd = unit.scaled(0.05 / predict_fidelity(F, unit).overlap)
    pred = predict_fidelity(F, psd)
    ens = synthesize_ensemble(psd, N, dt, 11, 500, resolution=8)
    mean, se = simulate_fidelity(env, deph_noise=ens)
    assert abs(pred.f_av - mean) <= max(0.01, 3 * se)


def test_predict_fidelity_trivial_and_additive():
    env = dpss_env()
    g = nyquist_grid(env)
    Fa = amplitude_filter(env, g)
    Fz = dephasing_filter(env, g)
    assert predict_fidelity(Fa, PsdModel.zero()).f_av == 1.0
    sa = PsdModel.white(1e-8, 2e4)
    sz = PsdModel.white(10.0, 2e4, "dephasing")
    both = predict_fidelity([Fa, Fz], [sa, sz])
    oa = predict_fidelity(Fa, sa).overlap
    oz = predict_fidelity(Fz, sz).overlap
    assert both.overlap == pytest.approx(oa + oz, rel=1e-12)
    assert both.f_av == pytest.approx(np.exp(-oa - oz), rel=1e-12)
    assert set(both.per_quadrature) == {"amplitude", "dephasing"}


def test_predict_fidelity_grid_mismatch():
    env = dpss_env()
    Fa = amplitude_filter(env, nyquist_grid(env))
    with pytest.raises(GridMismatchError):
        predict_fidelity(Fa, PsdModel.white(1.0, 1e4, "dephasing"))
    with pytest.raises(GridMismatchError):
        predict_fidelity(Fa, PsdModel.white(1e-9, 10 * np.pi / env.dt))


@pytest.mark.parametrize("k", range(4))
def test_weak_noise_consistency(k):
    env = dpss_env(k=k)
    g = nyquist_grid(env, 4096)
    F = amplitude_filter(env, g)
    wB = env.omega_B
    unit = PsdModel.comb([(0.4 * wB, 0.6 * wB, 1.0)])
    psd = unit.scaled(0.05 / predict_fidelity(F, unit).overlap)
    pred = predict_fidelity(F, psd)
    mean, se = simulate_fidelity(env, synthesize_ensemble(psd, env.n, env.dt, [5, k], 500, 16))
    assert abs(pred.f_av - mean) <= max(0.01, 3 * se)


def test_sid_analytic_inverts_exactly():
    env = dpss_env(k=1)
    g = nyquist_grid(env, 200)
    est = reconstruct_filter_by_sid(env, 0.1, g, backend="analytic")
    exact = amplitude_filter(env, g).values
    ok = ~est.meta["saturated"]
    np.testing.assert_allclose(est.values[ok], exact[ok], rtol=1e-9, atol=1e-12 * exact.max())


def test_sid_backends_agree_in_band():
    env = dpss_env(k=1)
    g = np.linspace(0.0, 1.2 * env.omega_B, 25)
    a = reconstruct_filter_by_sid(env, 0.15, g, backend="analytic")
    s = reconstruct_filter_by_sid(env, 0.15, g, backend="simulated")
    assert np.max(a.meta["infidelity"]) <= 0.1
    assert np.max(np.abs(a.meta["infidelity"] - s.meta["infidelity"])) <= 0.01


def test_sid_simulated_with_shots_is_seeded():
    env = dpss_env(N=32, NW=2, k=1)
    g = np.linspace(0.0, env.omega_B, 4)
    a = reconstruct_filter_by_sid(env, 0.5, g, 4, "simulated", shots=100, seed=3)
    b = reconstruct_filter_by_sid(env, 0.5, g, 4, "simulated", shots=100, seed=3)
    np.testing.assert_array_equal(a.values, b.values)


def test_sid_arguments():
    env = dpss_env()
    with pytest.raises(InvalidParameterError):
        reconstruct_filter_by_sid(env, 1.0, [0.0, 1.0])
    with pytest.raises(InvalidParameterError):
        reconstruct_filter_by_sid(env, 0.5, [0.0, 1.0], phases=1)
    with pytest.raises(InvalidParameterError):
        reconstruct_filter_by_sid(env, 0.5, [0.0, 1.0], backend="hardware")


def sid_pair(k, NW, points=400):
    N, tau = 64, 1.1e-3
    dt = tau / N
    p = DpssParams.from_nw(N, NW, dt=dt, k=k)
    d = envelope_from_sequence(generate_dpss(p), 1e6, 2 * np.pi, "abs_area")
    f = envelope_from_sequence(flat_top_envelope(N, k, dt), 1e6, 2 * np.pi, "abs_area")
    g = np.linspace(0.0, np.pi / dt, points)
    return p.omega_B, g, d, f


def test_sid_dpss_out_of_band_at_floor():
    wB, g, d, _ = sid_pair(1, 2)
    est = reconstruct_filter_by_sid(d, 0.95, g)
    out = g > 1.5 * wB
    assert np.all(est.meta["below_floor"][out])
    assert not np.all(est.meta["below_floor"])


def test_sid_flat_top_harmonics():
    wB, g, _, f = sid_pair(1, 2)
    est = reconstruct_filter_by_sid(f, 0.95, g)
    out = g > 1.5 * wB
    assert count_peaks(np.where(out, est.meta["infidelity"], 0.0), 0.01) >= 3


def test_sid_main_lobe_broadens_with_nw():
    widths = []
    for NW in (2, 3, 4):
        wB, g, d, _ = sid_pair(1, NW, 2000)
        F = amplitude_filter(d, g)
        widths.append(peak_width(g, F.values))
    assert widths[0] < widths[1] < widths[2]


def test_peak_helpers():
    x = np.linspace(-10, 10, 20001)
    y = np.exp(-x**2 / 2)
    assert peak_width(x, y) == pytest.approx(2 * np.sqrt(2 * np.log(2)), rel=1e-6)
    assert count_peaks(np.sin(x) ** 2, 0.5) == 6
    assert count_peaks(np.zeros(10), 0.0) == 0
