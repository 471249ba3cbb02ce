import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slepian_qns import presets
from slepian_qns.errors import ConvergenceError, InvalidParameterError
from slepian_qns.filters import amplitude_filter, peak_width, predict_fidelity
from slepian_qns.noise import PsdModel
from slepian_qns.recon import (
    MeasurementBattery,
    SpectrumEstimate,
    band_truth,
    bayesian_estimate,
    build_battery,
    design_battery,
    effective_bands,
    eigenestimate,
    fwhm_ratio,
    locate_cutoff,
    multitaper_estimate,
)

KHZ = presets.KHZ
CENTERS = tuple(c * KHZ for c in presets.BATTERY_CENTERS_KHZ)
POINTS = 2048


@pytest.fixture(scope="module")
def design():
    return design_battery(centers=CENTERS)


def exact_battery(design, psd, rel_se=1e-3, points=POINTS):
    dummy = build_battery(design, np.ones(len(design.protocols)), np.ones(len(design.protocols)), points)
    fids = [predict_fidelity(e.filter, psd).f_av for e in dummy.entries]
    return build_battery(design, fids, [max(rel_se * (1 - f), 1e-12) for f in fids], points)


def single_band(design, index=3):
    c = design.centers[index]
    return dataclasses.replace(design, protocols=tuple(p for p in design.protocols if p.center == c),
                               centers=design.centers[index:index + 1])


def test_design_layout(design):
    assert design.meta["ks"] == (1, 3, 5, 7) and design.meta["NW"] == 7.0
    assert len(design.protocols) == 36
    assert design.spacing == pytest.approx((CENTERS[1] - CENTERS[0]) / 8)
    assert design.fwhm == pytest.approx(2 * design.spacing)
    for p in design.protocols:
        lo, hi = p.band
        assert lo > 0 and hi <= design.nyquist
        assert hi - lo == pytest.approx(design.omega_B)


def test_design_spacing_near_one_point_one_khz():
    spacing = (10.0 - 1.4) / 8
    assert spacing == pytest.approx(1.1, abs=0.05)
    # the lower-sideband band of the lowest centre would cross DC at this spacing
    with pytest.raises(InvalidParameterError, match="too low"):
        design_battery(centers=(1.4 * KHZ, 10.0 * KHZ))


def test_design_rejects_bad_input():
    with pytest.raises(InvalidParameterError):
        design_battery(centers=(2.0, 1.0))
    with pytest.raises(InvalidParameterError):
        design_battery()
    with pytest.raises(InvalidParameterError):
        design_battery(centers=CENTERS, n_centers=1)


def test_design_from_psd_hint():
    psd = PsdModel.comb([(2.0 * KHZ, 3.0 * KHZ, 1.0), (9.0 * KHZ, 9.5 * KHZ, 1.0)])
    d = design_battery(psd=psd)
    assert d.centers[0] == pytest.approx(2.0 * KHZ)
    assert d.centers[-1] == pytest.approx(9.5 * KHZ)


def test_adjacent_bands_overlap(design):
    grid = np.linspace(0.0, design.nyquist, 8192)
    spans = []
    for c in design.centers:
        total = np.zeros_like(grid)
        for p in design.protocols:
            if p.center == c:
                F = amplitude_filter(p.build_envelope(), grid).values
                total += F / F.max()
        half = grid[total >= total.max() / 2]
        spans.append((half[0], half[-1]))
        assert peak_width(grid, total) == pytest.approx(design.fwhm, rel=0.02)
    for (a0, a1), (b0, b1) in zip(spans, spans[1:]):
        assert (a1 - b0) / design.fwhm >= 0.4


def test_fwhm_ratio_is_cached_and_positive():
    r = fwhm_ratio(128, 7.0, (1, 3, 5, 7))
    assert 0 < r < 1
    assert fwhm_ratio(128, 7, [1, 3, 5, 7]) == r


def test_eigenestimate_trivial(design):
    bat = build_battery(design, np.ones(36), np.full(36, 1e-3), POINTS)
    assert eigenestimate(bat.entries[0]).value == 0.0


@pytest.mark.parametrize("k_index", range(4))
def test_eigenestimate_flat_band(design, k_index):
    d = single_band(design)
    lo, hi = d.protocols[0].band
    S0 = 2e-6
    bat = exact_battery(d, PsdModel.comb([(lo, hi, S0)]))
    assert eigenestimate(bat.entries[k_index]).value == pytest.approx(S0, rel=1e-6)
    # white noise: the estimate is inflated by the inverse in-band fraction of F
    e = exact_battery(d, PsdModel.white(S0, d.nyquist)).entries[k_index]
    ratio = e.filter.integral(0.0, d.nyquist) / e.filter.integral(lo, hi)
    assert eigenestimate(e).value == pytest.approx(S0 * ratio, rel=1e-6)
    assert 1.0 <= ratio <= 1.05


def test_eigenestimate_is_weighted_band_average(design):
    d = single_band(design)
    lo, hi = d.protocols[0].band
    psd = PsdModel.comb([(lo + 0.1 * (hi - lo), lo + 0.55 * (hi - lo), 3e-6)])
    bat = exact_battery(d, psd)
    for e in bat.entries:
        F = e.filter
        num = psd.integrate_against(F.grid, F.values)
        avg = num / F.integral(lo, hi)
        assert eigenestimate(e).value == pytest.approx(avg, rel=1e-6)


def test_eigenestimate_variance_delta_method(design):
    bat = build_battery(design, np.full(36, 0.9), np.full(36, 0.01), POINTS)
    e = bat.entries[0]
    g = eigenestimate(e)
    gain = np.pi / e.band_integral
    assert g.variance == pytest.approx((gain * 0.01 / 0.9) ** 2)


def test_saturated_entries_excluded(design):
    d = single_band(design)
    lo, hi = d.protocols[0].band
    bat = exact_battery(d, PsdModel.comb([(lo, hi, 2e-6)]))
    sat = dataclasses.replace(bat.entries[2], fidelity=0.001)
    broken = MeasurementBattery(bat.entries[:2] + (sat,) + bat.entries[3:])
    assert eigenestimate(sat).saturated
    mt = multitaper_estimate(broken)
    rest = multitaper_estimate(MeasurementBattery(bat.entries[:2] + bat.entries[3:]))
    assert mt.values[0] == pytest.approx(rest.values[0], rel=1e-12)
    assert mt.meta["excluded"] == [{"center": sat.center, "k": sat.k}]
    by = bayesian_estimate(broken, mt)
    assert by.meta["excluded"] == [{"center": sat.center, "k": sat.k}]


def test_multitaper_flat_fixed_point(design):
    d = single_band(design)
    lo, hi = d.protocols[0].band
    S0 = 1.5e-6
    mt = multitaper_estimate(exact_battery(d, PsdModel.comb([(lo, hi, S0)])))
    assert mt.values[0] == pytest.approx(S0, rel=1e-6)
    assert mt.meta["iterations"][d.centers[0]] <= 2
    w = np.array(list(mt.weights[d.centers[0]].values()))
    assert np.all((w >= 0) & (w <= 1))


def test_multitaper_nonconvergence_flag(design):
    psd = PsdModel.comb(presets.fig3d_teeth(), cutoff=presets.FIG3D_CUTOFF_KHZ * KHZ)
    bat = exact_battery(design, psd)
    mt = multitaper_estimate(bat, tol=0.0, max_iter=1)
    assert not all(mt.meta["converged"].values())
    with pytest.raises(ConvergenceError):
        multitaper_estimate(bat, tol=0.0, max_iter=1, strict=True)


def test_bayesian_collapses_to_prior(design):
    d = single_band(design)
    psd = PsdModel.white(1e-6, d.nyquist)
    bat = exact_battery(d, psd)
    prior = SpectrumEstimate(np.array([0.0, d.nyquist]), np.array([7e-7, 7e-7]), np.zeros(2), "multitaper")
    by = bayesian_estimate(bat, prior, prior_rel_sd=0.0, prior_floor=0.0)
    np.testing.assert_allclose(by.values, 7e-7, rtol=1e-12)


def test_bayesian_linear_round_trip(design):
    d = single_band(design)
    dummy = build_battery(d, np.ones(4), np.ones(4), POINTS)
    (_, (a, b)), = effective_bands(dummy)
    S0 = 2e-6
    bat = exact_battery(d, PsdModel.comb([(a, b, S0)]), rel_se=1e-9)
    prior = SpectrumEstimate(np.array([0.0, d.nyquist]), np.full(2, 1e-6), np.zeros(2), "multitaper")
    by = bayesian_estimate(bat, prior, prior_rel_sd=0.0, prior_floor=1.0, leakage_correction=False)
    assert by.values.size == 4
    np.testing.assert_allclose(by.values, S0, rtol=1e-6)


def test_bayesian_fusion_reduces_variance(design):
    psd = PsdModel.comb(presets.fig3d_teeth(), cutoff=presets.FIG3D_CUTOFF_KHZ * KHZ)
    bat = exact_battery(design, psd, rel_se=0.05)
    mt = multitaper_estimate(bat)
    by = bayesian_estimate(bat, mt)
    assert np.all(by.values >= 0) and np.all(mt.values >= 0)
    for band in by.meta["bands"]:
        edges = band["edges"]
        j = np.searchsorted(edges, by.grid, side="right") - 1
        inside = (j >= 0) & (j < edges.size - 1)
        assert np.all(by.variances[inside] <= 1.0 / band["fisher"][j[inside]] * (1 + 1e-12))


def test_bayesian_needs_segments(design):
    bat = build_battery(design, np.full(36, 0.9), np.full(36, 0.01), POINTS)
    with pytest.raises(InvalidParameterError):
        bayesian_estimate(bat, multitaper_estimate(bat), segments=1)


def test_band_truth_of_white_is_level(design):
    bat = build_battery(design, np.ones(36), np.ones(36), POINTS)
    np.testing.assert_allclose(band_truth(PsdModel.white(3.0, design.nyquist), bat), 3.0, rtol=1e-9)


@given(cut=st.floats(0.2, 0.8), level=st.floats(0.5, 5.0))
@settings(max_examples=25, deadline=None)
def test_locate_cutoff_on_step(cut, level):
    grid = np.linspace(0.0, 1.0, 1001)
    values = np.where(grid <= cut, level, 0.0)
    assert locate_cutoff(grid, values) == pytest.approx(cut, abs=1e-3)


def test_spectrum_estimate_validation():
    with pytest.raises(InvalidParameterError):
        SpectrumEstimate(np.array([0.0, 1.0]), np.array([1.0, -1.0]), np.zeros(2), "bayesian")
    with pytest.raises(InvalidParameterError):
        SpectrumEstimate(np.array([1.0, 0.0]), np.array([1.0, 1.0]), np.zeros(2), "bayesian")
