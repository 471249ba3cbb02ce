import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.signal.windows import dpss as scipy_dpss

from slepian_qns.dpss import (
    DpssParams,
    dpss_family,
    dpswf,
    flat_top_envelope,
    generate_dpss,
    leakage_ratio,
    sinc_kernel,
    spectral_concentration,
)
from slepian_qns.errors import InvalidParameterError, LeakageRatioError


def dense_oracle(N, W):
    lam, vecs = np.linalg.eigh(sinc_kernel(N, W))
    return lam[::-1], vecs[:, ::-1]


def test_single_sample():
    seq = generate_dpss(DpssParams(N=1, W=0.25))
    np.testing.assert_allclose(seq.values, [1.0])
    assert seq.eigenvalue == pytest.approx(0.5)


def test_eigenvalue_matches_dense_solve():
    seq = generate_dpss(DpssParams(N=64, W=4 / 64))
    lam, _ = dense_oracle(64, 4 / 64)
    assert abs(seq.eigenvalue - lam[0]) < 1e-10


@pytest.mark.parametrize("N", [16, 64, 128, 256])
@pytest.mark.parametrize("W", [1 / 32, 1 / 16, 1 / 8])
def test_family_matches_dense_oracle(N, W):
    fam = dpss_family(N, W)
    lam, vecs = dense_oracle(N, W)
    ours = np.array([s.eigenvalue for s in fam])
    np.testing.assert_allclose(ours, lam, atol=1e-10, rtol=0)
    # eigenvectors are only determined where the spectrum is not clustered
    gaps = np.minimum(np.abs(np.diff(lam, prepend=np.inf)), np.abs(np.diff(lam, append=-np.inf)))
    for k in np.nonzero(gaps > 1e-4)[0]:
        v = vecs[:, k] * np.sign(vecs[:, k] @ fam[k].values)
        np.testing.assert_allclose(fam[k].values, v, atol=1e-8)


@pytest.mark.parametrize("N,NW", [(64, 2.5), (64, 4.0), (128, 7.0)])
def test_matches_scipy_windows(N, NW):
    K = int(2 * NW) - 1
    ref = scipy_dpss(N, NW, Kmax=K, norm=2, sym=True)
    for k, seq in enumerate(dpss_family(N, NW / N, kmax=K)):
        r = ref[k] * np.sign(ref[k] @ seq.values)
        np.testing.assert_allclose(seq.values, r, atol=1e-9)


def test_half_bandwidth_is_identity():
    fam = dpss_family(32, 0.5)
    np.testing.assert_allclose([s.eigenvalue for s in fam], 1.0, atol=1e-12)


@pytest.mark.parametrize("N", [64, 128])
@pytest.mark.parametrize("NW", range(2, 9))
def test_well_concentrated_orders(N, NW):
    K = 2 * int(np.floor(NW)) - 1
    lam = [s.eigenvalue for s in dpss_family(N, NW / N, kmax=K)]
    assert min(lam) >= 0.70
    # leading eigenvalues equal 1 to double precision at large NW
    assert np.all(np.diff(lam) <= 1e-14)
    assert np.all(np.diff(lam)[np.array(lam[1:]) < 1 - 1e-12] < 0)


def test_orthonormal_basis():
    fam = dpss_family(48, 3 / 48)
    V = np.stack([s.values for s in fam])
    np.testing.assert_allclose(V @ V.T, np.eye(48), atol=1e-8)


@given(N=st.integers(4, 96), NW=st.floats(1.0, 6.0), data=st.data())
@settings(max_examples=40, deadline=None)
def test_symmetry_and_sign(N, NW, data):
    W = min(NW / N, 0.5)
    k = data.draw(st.integers(0, min(N - 1, 6)))
    v = generate_dpss(DpssParams(N=N, W=W, k=k)).values
    if k % 2 == 0:
        np.testing.assert_allclose(v, v[::-1], atol=1e-8)
        assert v.sum() > 0
    else:
        np.testing.assert_allclose(v, -v[::-1], atol=1e-8)
        assert v[np.abs(v) > 1e-6 * np.abs(v).max()][0] > 0


@pytest.mark.parametrize("kw", [dict(N=8, W=0.0), dict(N=8, W=0.6), dict(N=8, W=0.1, k=8)])
def test_invalid_parameters(kw):
    with pytest.raises(InvalidParameterError):
        DpssParams(**kw)


def test_wavefunction_shape_and_parity():
    for k in range(4):
        wf = dpswf(generate_dpss(DpssParams.from_nw(32, 3, k=k)))
        assert wf.grid[0] == pytest.approx(-np.pi) and wf.grid[-1] == pytest.approx(np.pi)
        sign = 1 if k % 2 == 0 else -1
        np.testing.assert_allclose(wf.values, sign * wf.values[::-1], atol=1e-10)
    wf0 = dpswf(generate_dpss(DpssParams.from_nw(32, 3)), grid_size=1001)
    assert wf0.grid[np.argmax(np.abs(wf0.values))] == pytest.approx(0.0, abs=1e-12)


def test_wavefunction_grid_too_coarse():
    with pytest.raises(InvalidParameterError):
        dpswf(generate_dpss(DpssParams.from_nw(32, 3)), grid_size=63)


def test_wavefunction_matches_direct_dtft():
    seq = generate_dpss(DpssParams.from_nw(20, 2, k=1))
    wf = dpswf(seq, grid_size=321)
    n = np.arange(20) - 9.5
    direct = np.array([np.sum(seq.values * np.exp(-1j * w * n)) for w in wf.grid])
    np.testing.assert_allclose(np.abs(wf.values), np.abs(direct), atol=1e-12)


@pytest.mark.parametrize("k", [0, 1, 2])
def test_concentration_quadrature_equals_eigenvalue(k):
    p = DpssParams.from_nw(64, 4, k=k)
    seq = generate_dpss(p)
    wf = dpswf(seq, grid_size=16 * 64 + 1)
    assert spectral_concentration(wf, p.omega_B) == pytest.approx(seq.eigenvalue, abs=1e-6)


def test_concentration_limits():
    wf = dpswf(generate_dpss(DpssParams.from_nw(32, 3)))
    assert spectral_concentration(wf, np.pi) == pytest.approx(1.0)
    assert spectral_concentration(wf, 0.0) == 0.0
    assert spectral_concentration(wf, 1e-9) < 1e-6


def test_flat_top_shapes():
    np.testing.assert_array_equal(flat_top_envelope(5, 0).samples.real, np.ones(5))
    np.testing.assert_array_equal(flat_top_envelope(8, 1).samples.real, [1, 1, 1, 1, -1, -1, -1, -1])


@pytest.mark.parametrize("k", range(6))
def test_flat_top_crossings_match_dpss(k):
    ft = flat_top_envelope(64, k).samples.real
    v = generate_dpss(DpssParams.from_nw(64, 4, k=k)).values
    assert np.count_nonzero(np.diff(np.sign(ft))) == k
    big = v[np.abs(v) > 1e-3 * np.abs(v).max()]
    assert np.count_nonzero(np.diff(np.sign(big))) == k


def test_leakage_ratio_identity_and_scale_invariance():
    p = DpssParams.from_nw(64, 4, k=1)
    wf = dpswf(generate_dpss(p))
    flat = dpswf(flat_top_envelope(64, 1))
    assert leakage_ratio(wf, wf, p.omega_B) == pytest.approx(0.0)
    base = leakage_ratio(wf, flat, p.omega_B)
    scaled = type(wf)(wf.grid, 3.7 * wf.values, wf.dt)
    assert leakage_ratio(scaled, flat, p.omega_B) == pytest.approx(base, rel=1e-12)


@pytest.mark.parametrize("k", range(4))
def test_leakage_ratio_range(k):
    p = DpssParams.from_nw(64, 4, k=k)
    L = leakage_ratio(dpswf(generate_dpss(p), 16 * 64),
                      dpswf(flat_top_envelope(64, k), 16 * 64), p.omega_B)
    assert 30.0 <= L <= 80.0


def test_leakage_ratio_degenerate():
    wf = dpswf(generate_dpss(DpssParams.from_nw(16, 2)))
    with pytest.raises(LeakageRatioError):
        leakage_ratio(wf, wf, np.pi)
