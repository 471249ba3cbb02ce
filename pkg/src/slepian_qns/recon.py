"""PSD reconstruction from a battery of band-shifted DPSS fidelity measurements.

Each battery entry is one order ``k`` band-shifted to one band.  Its
measured fidelity ``f`` gives the overlap ``o = -ln f`` with the unknown
spectrum, ``o = (1/pi) int F_k S``.  Two estimators turn the overlaps into a
spectrum: adaptive multitaper weighting of per-order band averages, and a
per-segment Gaussian MAP inversion fused across bands by Fisher information.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .control import envelope_from_sequence, ssb_shift
from .conventions import SATURATION_FLOOR
from .dpss import DpssParams, _band_integral, generate_dpss
from .errors import ConvergenceError, InvalidParameterError
from .filters import amplitude_filter, peak_width

__all__ = [
    "ProtocolSpec",
    "BatteryDesign",
    "BatteryEntry",
    "MeasurementBattery",
    "Eigenestimate",
    "SpectrumEstimate",
    "design_battery",
    "fwhm_ratio",
    "build_battery",
    "simulate_battery",
    "eigenestimate",
    "multitaper_estimate",
    "bayesian_estimate",
    "band_truth",
    "band_values",
    "effective_bands",
    "locate_cutoff",
    "edge_errors",
]


# -- battery design ------------------------------------------------------------


@dataclass(frozen=True)
class ProtocolSpec:
    """One lower-sideband SSB-shifted DPSS protocol."""

    k: int
    NW: float
    N: int
    dt: float
    omega_s: float
    center: float
    rabi_max: float

    @property
    def omega_B(self):
        return 2.0 * np.pi * self.NW / (self.N * self.dt)

    @property
    def band(self):
        return (self.omega_s - self.omega_B, self.omega_s)

    def build_envelope(self):
        seq = generate_dpss(DpssParams.from_nw(self.N, self.NW, dt=self.dt, k=self.k))
        env = envelope_from_sequence(seq, self.rabi_max, mode="peak")
        return ssb_shift(env, self.omega_s, "lower")


@dataclass(frozen=True)
class BatteryDesign:
    protocols: tuple
    centers: np.ndarray
    spacing: float
    omega_B: float
    fwhm: float
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def nyquist(self):
        return np.pi / self.protocols[0].dt


def _summed_profile(N, NW, ks, points=8192):
    """Order-summed lower-sideband filter at unit duration, each order peak-normalized."""
    dt = 1.0 / N
    omega_B = 2.0 * np.pi * NW
    omega_s = 2.0 * omega_B
    grid = np.linspace(omega_s - 1.5 * omega_B, omega_s + 0.5 * omega_B, points)
    total = np.zeros(points)
    for k in ks:
        env = ProtocolSpec(k, NW, N, dt, omega_s, 0.0, 1.0).build_envelope()
        F = amplitude_filter(env, grid).values
        total += F / F.max()
    return grid, total, omega_s, omega_B


@lru_cache(maxsize=32)
def _profile_shape(N, NW, ks):
    grid, total, omega_s, omega_B = _summed_profile(N, NW, ks)
    width = peak_width(grid, total)
    half = total >= total.max() / 2
    mid = 0.5 * (grid[half][0] + grid[half][-1])
    return width / omega_B, (omega_s - mid) / omega_B


def fwhm_ratio(N, NW, ks):
    """Half-maximum width of the order-summed battery filter in units of ``omega_B``."""
    return _profile_shape(int(N), float(NW), tuple(int(k) for k in ks))[0]


def design_battery(centers=None, psd=None, ks=(1, 3, 5, 7), NW=7.0, n_centers=9, N=128,
                   rabi_max=2.0 * np.pi * 1e3):
    """Lay out SSB-shifted DPSS protocols with overlapping bands.

    Band centres are spread uniformly over ``centers = (lo, hi)`` (rad/s),
    or over the support of ``psd`` when no range is given.  The spacing is
    half the half-maximum width of the order-summed filter, which fixes
    ``omega_B`` and therefore the protocol duration ``2 pi NW / omega_B``.
    Each protocol's ``omega_s`` puts the middle of that half-maximum region
    on its band centre.

    Raises
    ------
    InvalidParameterError
        If a band would cross DC or exceed the Nyquist frequency.
    """
    if int(n_centers) < 2:
        raise InvalidParameterError("n_centers must be at least 2")
    if centers is None:
        if psd is None:
            raise InvalidParameterError("give a centre range or a PSD hint")
        pts = psd.breakpoints()
        lo = float(pts[pts > 0][0]) if np.any(pts > 0) else 0.0
        centers = (lo, float(psd.support_max))
    lo, hi = map(float, centers)
    if not 0 < lo < hi:
        raise InvalidParameterError("centre range must satisfy 0 < lo < hi")
    ks = tuple(int(k) for k in ks)
    if not ks or any(k < 0 or k >= N for k in ks):
        raise InvalidParameterError("orders must lie in 0..N-1")
    ratio, offset = _profile_shape(int(N), float(NW), ks)
    spacing = (hi - lo) / (n_centers - 1)
    fwhm = 2.0 * spacing
    omega_B = fwhm / ratio
    dt = 2.0 * np.pi * NW / (omega_B * N)
    nyquist = np.pi / dt
    grid = np.linspace(lo, hi, int(n_centers))
    protocols = []
    for c in grid:
        omega_s = c + offset * omega_B
        if omega_s - omega_B < 0:
            raise InvalidParameterError(
                f"band centre {c:g} rad/s is too low: its band would cross DC "
                f"(lowest reachable centre {(1.0 - offset) * omega_B:g} rad/s)")
        if omega_s > nyquist:
            raise InvalidParameterError(f"band centre {c:g} rad/s exceeds the Nyquist limit")
        for k in ks:
            protocols.append(ProtocolSpec(k, float(NW), int(N), dt, float(omega_s), float(c),
                                          float(rabi_max)))
    return BatteryDesign(tuple(protocols), grid, spacing, omega_B, fwhm,
                         {"ks": ks, "NW": float(NW), "N": int(N), "sideband": "lower"})


# -- measurements ----------------------------------------------------------------


@dataclass(frozen=True)
class BatteryEntry:
    k: int
    NW: float
    omega_s: float
    center: float
    band: tuple
    filter: object
    fidelity: float
    std_err: float

    def __post_init__(self):
        if not self.std_err > 0:
            raise InvalidParameterError("std_err must be positive")

    @property
    def saturated(self):
        return self.fidelity <= SATURATION_FLOOR

    @property
    def overlap(self):
        return -np.log(self.fidelity)

    @property
    def overlap_var(self):
        return (self.std_err / self.fidelity) ** 2

    @property
    def band_integral(self):
        return self.filter.integral(*self.band)

    @property
    def concentration(self):
        total = self.filter.integral()
        return self.band_integral / total if total > 0 else 0.0


@dataclass(frozen=True)
class MeasurementBattery:
    entries: tuple

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        conv = {e.filter.norm_convention for e in self.entries}
        if len(conv) > 1:
            raise InvalidParameterError("battery entries mix filter normalizations")

    @property
    def centers(self):
        return np.array(sorted({e.center for e in self.entries}))

    def groups(self):
        """Entries per band centre, centres ascending, orders ascending."""
        out = {}
        for e in self.entries:
            out.setdefault(e.center, []).append(e)
        return [(c, sorted(out[c], key=lambda e: e.k)) for c in sorted(out)]


def _filter_grid(design, points):
    return np.linspace(0.0, design.nyquist, int(points))


def build_battery(design, fidelities, std_errs, grid_points=4096):
    """Attach analytic filters to externally measured fidelities (one per protocol)."""
    grid = _filter_grid(design, grid_points)
    entries = []
    for p, f, se in zip(design.protocols, fidelities, std_errs, strict=True):
        F = amplitude_filter(p.build_envelope(), grid)
        entries.append(BatteryEntry(p.k, p.NW, p.omega_s, p.center, p.band, F, float(f), float(se)))
    return MeasurementBattery(entries)


def simulate_battery(design, psd, realizations=400, shots=4000, seed=0, resolution=16,
                     grid_points=4096, executor=None):
    """Simulate the three-axis protocol for every battery entry.

    Each protocol sees ``realizations`` independent trajectories of the
    amplitude noise (synthesized ``resolution`` times finer in frequency
    than the protocol's own DFT) and ``shots`` readouts per axis.  The
    standard error combines projection noise with the spread over
    realizations.  ``executor`` (a ``concurrent.futures`` executor) may run
    protocols concurrently; results do not depend on it.
    """
    from .noise import synthesize_ensemble
    from .sensor import error_quaternions, run_three_axis

    grid = _filter_grid(design, grid_points)
    children = np.random.SeedSequence(np.atleast_1d(seed).tolist()).spawn(len(design.protocols))

    def one(i):
        p = design.protocols[i]
        env = p.build_envelope()
        noise_seed = int(children[i].generate_state(1)[0])
        ens = synthesize_ensemble(psd, env.n, env.dt, noise_seed, int(realizations), resolution)
        res = run_three_axis(env, amp_noises=ens, shots=int(shots), seed=children[i].spawn(1)[0])
        e = error_quaternions(env, amp_noise=ens)
        per = np.atleast_1d(e[..., 1] ** 2)
        var_r = np.var(per, ddof=1) / per.size if per.size > 1 else 0.0
        se = float(np.sqrt(res.std_err**2 + var_r))
        F = amplitude_filter(env, grid)
        return BatteryEntry(p.k, p.NW, p.omega_s, p.center, p.band, F, res.fidelity_estimate, se)

    idx = range(len(design.protocols))
    entries = list(executor.map(one, idx)) if executor is not None else [one(i) for i in idx]
    return MeasurementBattery(entries)


# -- estimators -------------------------------------------------------------------


@dataclass(frozen=True)
class Eigenestimate:
    center: float
    value: float
    variance: float
    concentration: float
    saturated: bool = False


@dataclass(frozen=True)
class SpectrumEstimate:
    grid: np.ndarray
    values: np.ndarray
    variances: np.ndarray
    method: str
    weights: dict = field(default_factory=dict, compare=False)
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if np.any(np.diff(grid) <= 0):
            raise InvalidParameterError("estimate grid must increase")
        if np.any(values < 0):
            raise InvalidParameterError("estimated spectrum must be non-negative")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "variances", np.asarray(self.variances, dtype=float))

    @property
    def std(self):
        return np.sqrt(self.variances)

    def __call__(self, omega):
        return np.interp(omega, self.grid, self.values)


def eigenestimate(entry):
    """Band-flat single-point inversion ``S = pi o / int_band F``.

    Dividing by the in-band integral rather than the full one applies the
    classical ``1 / lambda_k`` normalization.  Saturated entries return
    ``nan`` with the ``saturated`` flag set.
    """
    lam = entry.concentration
    if entry.saturated:
        return Eigenestimate(entry.center, float("nan"), float("nan"), lam, True)
    denom = entry.band_integral
    if denom <= 0:
        raise InvalidParameterError("filter has no weight in its band")
    gain = np.pi / denom
    return Eigenestimate(entry.center, float(gain * entry.overlap),
                         float(gain**2 * entry.overlap_var), lam)


def _adaptive(S, lam, broad, tol=1e-8, max_iter=100):
    """Thomson adaptive weights for one band; returns (estimate, d, iterations, converged)."""
    est = float(np.mean(S))
    d = np.ones_like(S)
    for it in range(1, max_iter + 1):
        num = lam * est
        den = num + (1.0 - lam) * broad
        d = np.where(den > 0, num / np.where(den > 0, den, 1.0), 1.0)
        w = d**2 * lam
        new = float(np.sum(w * S) / np.sum(w)) if np.sum(w) > 0 else est
        if abs(new - est) <= tol * max(abs(est), abs(new)) or new == est:
            return new, d, it, True
        est = new
    return est, d, max_iter, False


def multitaper_estimate(battery, tol=1e-8, max_iter=100, strict=False):
    """Adaptive multitaper combination of the per-order eigenestimates, per band.

    The broadband power proxy for a band is its equal-weight estimate times
    the summed leakage ``sum_k (1 - lambda_k)``.  Weights start equal and
    are iterated to a relative change below ``tol`` or ``max_iter`` steps.
    Non-convergence is flagged in ``meta`` (or raised with ``strict``).

    Returns
    -------
    SpectrumEstimate
        One value per band centre.  ``variances`` follow the effective
        degrees of freedom; the propagated measurement variance is kept in
        ``meta["measurement_var"]``.
    """
    centers, values, variances, mvars = [], [], [], []
    weights, iterations, converged, excluded = {}, {}, {}, []
    for c, entries in battery.groups():
        eig = [eigenestimate(e) for e in entries]
        keep = [(e, g) for e, g in zip(entries, eig) if not g.saturated]
        excluded += [{"center": c, "k": e.k} for e, g in zip(entries, eig) if g.saturated]
        centers.append(c)
        if not keep:
            values.append(0.0)
            variances.append(np.inf)
            mvars.append(np.inf)
            weights[c], iterations[c], converged[c] = {}, 0, True
            continue
        S = np.array([g.value for _, g in keep])
        lam = np.clip(np.array([g.concentration for _, g in keep]), 0.0, 1.0)
        var_k = np.array([g.variance for _, g in keep])
        broad = max(float(np.mean(S)), 0.0) * float(np.sum(1.0 - lam))
        est, d, it, ok = _adaptive(S, lam, broad, tol, max_iter)
        if not ok and strict:
            raise ConvergenceError(f"adaptive weights did not converge for band at {c:g} rad/s")
        w = d**2 * lam
        wn = w / np.sum(w)
        dof = 2.0 * np.sum(w) ** 2 / np.sum(w**2)
        est = max(est, 0.0)
        values.append(est)
        variances.append(2.0 * est**2 / dof)
        mvars.append(float(np.sum(wn**2 * var_k)))
        weights[c] = {e.k: float(x) for (e, _), x in zip(keep, d)}
        iterations[c], converged[c] = it, ok
    return SpectrumEstimate(np.array(centers), np.array(values), np.array(variances), "multitaper",
                            weights, {"iterations": iterations, "converged": converged,
                                      "excluded": excluded, "measurement_var": np.array(mvars),
                                      "lambda_normalized": True})


def _map_solve(A, o, sigma2, prior, prior_sd):
    """Gaussian MAP with diagonal covariances; zero prior sd pins a segment to its prior."""
    fixed = prior_sd <= 0
    s = prior.astype(float).copy()
    free = ~fixed
    if np.any(free):
        resid = o - A[:, fixed] @ prior[fixed]
        Af = A[:, free]
        Winv = 1.0 / sigma2
        H = Af.T @ (Winv[:, None] * Af) + np.diag(1.0 / prior_sd[free] ** 2)
        rhs = Af.T @ (Winv * resid) + prior[free] / prior_sd[free] ** 2
        s[free] = np.linalg.solve(H, rhs)
    return np.maximum(s, 0.0)


def bayesian_estimate(battery, prior, segments=4, prior_rel_sd=0.5, prior_floor=None,
                      leakage_correction=True, mass=0.99):
    """Per-segment MAP inversion, fused across overlapping bands.

    Within each band the overlaps obey ``o_k = sum_j A_kj s_j`` with
    ``A_kj = (1/pi) int_{segment j} F_k``.  The prior mean is ``prior``
    evaluated at segment centres and its standard deviation
    ``prior_rel_sd * prior + prior_floor`` (floor default: 5 % of the
    largest prior value).  With ``leakage_correction`` the overlap expected
    from outside the band under the prior is subtracted first.  Segment
    values are clipped at 0.

    Segments split the part of each band that holds the central ``mass``
    of the order-summed in-band filter weight, so none of them is left
    with almost no sensitivity.

    Bands are fused on the union of their segment edges: each cell takes
    the Fisher-weighted mean ``sum I s / sum I`` of the segments covering it,
    with ``I_j = sum_k A_kj**2 / var(o_k)`` and fused variance ``1 / sum I``.
    """
    if int(segments) < 2:
        raise InvalidParameterError("at least two segments per band")
    floor = 0.05 * float(np.max(prior.values)) if prior_floor is None else float(prior_floor)
    per_band = []
    excluded = []
    for c, entries in battery.groups():
        keep = [e for e in entries if not e.saturated]
        excluded += [{"center": c, "k": e.k} for e in entries if e.saturated]
        if not keep:
            continue
        lo, hi = keep[0].band
        a, b = _effective_band(keep, lo, hi, mass)
        edges = np.linspace(a, b, int(segments) + 1)
        A = np.array([[e.filter.integral(a, b) / np.pi for a, b in zip(edges[:-1], edges[1:])]
                      for e in keep])
        o = np.array([e.overlap for e in keep])
        sigma2 = np.array([e.overlap_var for e in keep])
        mids = 0.5 * (edges[1:] + edges[:-1])
        s_prior = np.maximum(prior(mids), 0.0)
        if leakage_correction:
            for i, e in enumerate(keep):
                o[i] -= _outside_overlap(e.filter, prior, lo, hi)
        sd = prior_rel_sd * s_prior + floor
        s = _map_solve(A, o, sigma2, s_prior, sd)
        fisher = np.sum(A**2 / sigma2[:, None], axis=0)
        per_band.append({"center": c, "edges": edges, "values": s, "fisher": fisher, "prior": s_prior})
    if not per_band:
        raise InvalidParameterError("no unsaturated measurements")
    cuts = np.unique(np.concatenate([b["edges"] for b in per_band]))
    mids = 0.5 * (cuts[1:] + cuts[:-1])
    num = np.zeros(mids.size)
    info = np.zeros(mids.size)
    cover = np.zeros(mids.size, dtype=int)
    for b in per_band:
        j = np.searchsorted(b["edges"], mids, side="right") - 1
        inside = (j >= 0) & (j < b["values"].size)
        num[inside] += b["fisher"][j[inside]] * b["values"][j[inside]]
        info[inside] += b["fisher"][j[inside]]
        cover[inside] += 1
    keep = cover > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        values = np.where(info > 0, num / np.where(info > 0, info, 1.0), 0.0)
        variances = np.where(info > 0, 1.0 / np.where(info > 0, info, 1.0), np.inf)
    return SpectrumEstimate(mids[keep], np.maximum(values[keep], 0.0), variances[keep], "bayesian",
                            {"fisher": info[keep]},
                            {"edges": cuts, "bands": per_band, "excluded": excluded,
                             "segments": int(segments), "prior_rel_sd": prior_rel_sd,
                             "prior_floor": floor, "leakage_correction": bool(leakage_correction),
                             "mass": mass})


def _effective_band(entries, lo, hi, mass):
    """Central ``mass`` quantile range of the summed filter within ``[lo, hi]``."""
    grid = entries[0].filter.grid
    F = sum(e.filter.values for e in entries)
    inside = (grid > lo) & (grid < hi)
    g = np.concatenate(([lo], grid[inside], [hi]))
    w = np.interp(g, grid, F)
    cum = np.concatenate(([0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(g))))
    if cum[-1] <= 0:
        return lo, hi
    tail = 0.5 * (1.0 - mass) * cum[-1]
    return float(np.interp(tail, cum, g)), float(np.interp(cum[-1] - tail, cum, g))


def _outside_overlap(filt, prior, lo, hi):
    """``(1/pi) int F * prior`` outside ``[lo, hi]``."""
    grid = filt.grid
    S = np.maximum(prior(grid), 0.0)
    prod = filt.values * S
    total = _band_integral(grid, prod, grid[0], grid[-1])
    inside = _band_integral(grid, prod, lo, hi)
    return (total - inside) / np.pi


# -- evaluation helpers ------------------------------------------------------------


def band_truth(psd, battery):
    """F-weighted in-band average of ``psd`` for every band, orders summed.

    This is the quantity the band estimators target when the spectrum is
    not flat across a band.
    """
    out = []
    for c, entries in battery.groups():
        lo, hi = entries[0].band
        grid = entries[0].filter.grid
        F = sum(e.filter.values for e in entries)
        mask = (grid >= lo) & (grid <= hi)
        g = np.concatenate(([lo], grid[mask], [hi]))
        w = np.interp(g, grid, F)
        num = psd.integrate_against(g, w) if psd.support_max <= g[-1] else _clip_integral(psd, g, w)
        out.append(num / np.trapezoid(w, g))
    return np.array(out)


def band_values(estimate, battery):
    """F-weighted in-band averages of an estimate, on the same footing as :func:`band_truth`.

    Bayesian estimates are read as piecewise constant on their cells;
    others are interpolated linearly between grid points.
    """
    out = []
    for c, entries in battery.groups():
        lo, hi = entries[0].band
        grid = entries[0].filter.grid
        F = sum(e.filter.values for e in entries)
        mask = (grid >= lo) & (grid <= hi)
        g = grid[mask]
        if estimate.method == "bayesian":
            edges = estimate.meta["edges"]
            j = np.clip(np.searchsorted(edges, g, side="right") - 1, 0, edges.size - 2)
            mids = 0.5 * (edges[j] + edges[j + 1])
            S = np.where((g >= edges[0]) & (g <= edges[-1]),
                         np.interp(mids, estimate.grid, estimate.values), 0.0)
        else:
            S = estimate(g)
        w = F[mask]
        out.append(float(np.trapezoid(w * S, g) / np.trapezoid(w, g)))
    return np.array(out)


def effective_bands(battery, mass=0.99):
    """Per band centre, the range holding the central ``mass`` of the summed filter weight."""
    return [(c, _effective_band(entries, *entries[0].band, mass)) for c, entries in battery.groups()]


def _clip_integral(psd, g, w):
    # integrate_against demands the grid cover the support; pad with zeros
    top = psd.support_max
    g2 = np.concatenate((g, [g[-1] * (1 + 1e-12), top]))
    w2 = np.concatenate((w, [0.0, 0.0]))
    return psd.integrate_against(g2, w2)


def locate_cutoff(grid, values, level=None, fraction=0.5):
    """Highest frequency where ``values`` fall through ``fraction * level``.

    ``level`` defaults to the median of the values above half their
    maximum.  The crossing is interpolated linearly.
    """
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    if level is None:
        top = values[values >= 0.5 * values.max()]
        level = float(np.median(top))
    thresh = fraction * level
    above = np.nonzero(values >= thresh)[0]
    if above.size == 0:
        return float(grid[0])
    i = above[-1]
    if i == values.size - 1:
        return float(grid[-1])
    return float(np.interp(thresh, [values[i + 1], values[i]], [grid[i + 1], grid[i]]))


def edge_errors(psd, bayes, multitaper, cutoff, halfwidth):
    """Integrated absolute errors of both estimates near the cutoff.

    Cells of the Bayesian estimate overlapping ``[cutoff - halfwidth,
    cutoff + halfwidth]`` are compared with the true cell averages; the
    multitaper estimate is interpolated linearly between band centres onto
    the same cells.

    Returns
    -------
    bayes_err, multitaper_err : float
    """
    edges = bayes.meta["edges"]
    lo, hi = edges[:-1], edges[1:]
    sel = (hi > cutoff - halfwidth) & (lo < cutoff + halfwidth)
    mids = 0.5 * (lo + hi)
    sel_mid = np.isin(mids, bayes.grid) & sel
    widths = (hi - lo)[sel_mid]
    truth = np.array([psd.cell_power(a, b) / (b - a) for a, b in zip(lo[sel_mid], hi[sel_mid])])
    b = bayes(mids[sel_mid])
    m = multitaper(mids[sel_mid])
    return float(np.sum(np.abs(b - truth) * widths)), float(np.sum(np.abs(m - truth) * widths))
