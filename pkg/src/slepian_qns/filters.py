"""Filter transfer functions and the overlap-integral fidelity.

Convention: ``F(omega) = |sum_n Omega_n dt exp(-i omega n dt)|**2`` in
rad**2, with ``omega`` in rad/s.  Paired with the noise power convention of
:mod:`slepian_qns.conventions`, ``(1/pi) int F S d omega`` is the
first-order infidelity of the protocol, so ``f_av = exp(-overlap)``.
"""

from dataclasses import dataclass, field

import numpy as np

from .control import sid_multipliers, uniform_phases
from .conventions import NORM_CONVENTION, SATURATION_FLOOR, SENSITIVITY_FLOOR
from .errors import GridMismatchError, InvalidParameterError

__all__ = [
    "FilterFunction",
    "FidelityPrediction",
    "fourier_sum",
    "amplitude_filter",
    "dephasing_filter",
    "toggling_vectors",
    "predict_fidelity",
    "reconstruct_filter_by_sid",
    "band_fraction",
    "peak_width",
    "count_peaks",
]

_CHUNK = 512


@dataclass(frozen=True)
class FilterFunction:
    grid: np.ndarray
    values: np.ndarray
    quadrature: str = "amplitude"
    norm_convention: str = NORM_CONVENTION
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.ndim != 1 or grid.shape != values.shape or grid.size < 2:
            raise InvalidParameterError("filter grid and values must be matching 1-d arrays")
        if grid[0] < 0 or np.any(np.diff(grid) <= 0):
            raise InvalidParameterError("filter grid must be non-negative and strictly increasing")
        if np.any(values < 0):
            raise InvalidParameterError("filter values must be non-negative")
        if self.quadrature not in ("amplitude", "dephasing"):
            raise InvalidParameterError(f"unknown quadrature {self.quadrature!r}")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    def __call__(self, omega):
        return np.interp(omega, self.grid, self.values)

    def integral(self, lo=None, hi=None):
        """``int F d omega`` over ``[lo, hi]`` (whole grid by default)."""
        from .dpss import _band_integral

        lo = self.grid[0] if lo is None else lo
        hi = self.grid[-1] if hi is None else hi
        return _band_integral(self.grid, self.values, lo, hi)


@dataclass(frozen=True)
class FidelityPrediction:
    f_av: float
    overlap: float
    per_quadrature: dict


def _check_grid(grid):
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or grid[0] < 0 or np.any(np.diff(grid) <= 0):
        raise InvalidParameterError("grid must be non-negative and strictly increasing")
    return grid


def fourier_sum(weights, dt, omega):
    """``sum_n w_n dt exp(-i omega n dt)`` at arbitrary ``omega``.

    ``weights`` may carry leading batch axes; the sum runs over the last
    one.  Evaluated directly in chunks of frequencies.
    """
    w = np.asarray(weights)
    omega = np.asarray(omega, dtype=float)
    n = np.arange(w.shape[-1]) * dt
    out = np.empty(w.shape[:-1] + omega.shape, dtype=complex)
    flat = omega.ravel()
    res = out.reshape(w.shape[:-1] + (flat.size,))
    for start in range(0, flat.size, _CHUNK):
        sl = slice(start, start + _CHUNK)
        res[..., sl] = (w * dt) @ np.exp(-1j * np.outer(n, flat[sl]))
    return out


def amplitude_filter(env, grid):
    """First-order filter for multiplicative drive noise."""
    grid = _check_grid(grid)
    values = np.abs(fourier_sum(env.rabi_rates, env.dt, grid)) ** 2
    return FilterFunction(grid, values, "amplitude",
                          meta={"band": env.band, "n": env.n, "dt": env.dt})


def _rotvec_integral(axis, w, dt, v):
    """``int_0^dt Rot(axis, -w s) v ds`` per segment (Rodrigues, exact)."""
    wdt = w * dt
    small = np.abs(wdt) < 1e-6
    safe = np.where(small, 1.0, w)
    c_int = np.where(small, dt - w**2 * dt**3 / 6, np.sin(wdt) / safe)
    s_int = np.where(small, w * dt**2 / 2, (1 - np.cos(wdt)) / safe)
    a_dot = np.sum(axis * v, axis=-1, keepdims=True)
    cross = np.cross(axis, v)
    return (c_int[:, None] * v - s_int[:, None] * cross
            + (dt - c_int)[:, None] * a_dot * axis)


def _rot_matrix(axis, angle):
    c, s = np.cos(angle), np.sin(angle)
    x, y, z = axis
    return np.array([
        [c + x * x * (1 - c), x * y * (1 - c) - z * s, x * z * (1 - c) + y * s],
        [y * x * (1 - c) + z * s, c + y * y * (1 - c), y * z * (1 - c) - x * s],
        [z * x * (1 - c) - y * s, z * y * (1 - c) + x * s, c + z * z * (1 - c)],
    ])


def toggling_vectors(env):
    """Segment integrals of the toggling-frame z axis, shape ``(n, 3)``.

    Row ``n`` is ``int R(t)^T z dt`` over segment ``n``, where ``R(t)`` is
    the control rotation accumulated up to time ``t``.
    """
    rates = env.rabi_rates
    mag = np.abs(rates)
    axes = np.zeros((env.n, 3))
    nz = mag > 0
    axes[nz, 0] = rates.real[nz] / mag[nz]
    axes[nz, 1] = rates.imag[nz] / mag[nz]
    axes[~nz, 0] = 1.0
    # R(t) = Rot(a, w s) R_<n, so R(t)^T z = R_<n^T Rot(a, -w s) z; rotate the
    # lab-frame segment integral back through R_<n
    lab = _rotvec_integral(axes, mag, env.dt, np.tile([0.0, 0.0, 1.0], (env.n, 1)))
    out = np.empty_like(lab)
    frame = np.eye(3)
    for i in range(env.n):
        out[i] = frame.T @ lab[i]
        frame = _rot_matrix(axes[i], mag[i] * env.dt) @ frame
    return out


def dephasing_filter(env, grid, components=("x", "y", "z")):
    """First-order filter for additive ``sigma_z`` noise.

    ``F_z = sum_a |sum_n U_{n,a} exp(-i omega n dt)|**2`` over the chosen
    toggling-frame components ``a``; the noise is treated as constant over
    each segment.  The x and y components alone govern the loss of a
    state prepared along z.
    """
    grid = _check_grid(grid)
    U = toggling_vectors(env)
    idx = ["xyz".index(c) for c in components]
    # U already carries the dt weight, so pass dt=1 to the sum
    spec = fourier_sum(U[:, idx].T, 1.0, grid * env.dt)
    values = np.sum(np.abs(spec) ** 2, axis=0)
    return FilterFunction(grid, values, "dephasing",
                          meta={"components": tuple(components), "n": env.n, "dt": env.dt})


def predict_fidelity(filters, psds):
    """``f_av = exp(-sum_i (1/pi) int F_i S_i d omega)``.

    Parameters
    ----------
    filters : FilterFunction or sequence of FilterFunction
    psds : PsdModel or sequence of PsdModel
        Matched to the filters by quadrature.  A quadrature with no filter
        raises :class:`GridMismatchError` unless its PSD is zero.
    """
    filters = [filters] if isinstance(filters, FilterFunction) else list(filters)
    psds = [psds] if hasattr(psds, "quadrature") else list(psds)
    by_quad = {}
    for f in filters:
        if f.quadrature in by_quad:
            raise InvalidParameterError(f"two filters for quadrature {f.quadrature!r}")
        by_quad[f.quadrature] = f
    per = {}
    for psd in psds:
        f = by_quad.get(psd.quadrature)
        if f is None:
            if psd.is_zero():
                continue
            raise GridMismatchError(f"no filter for the {psd.quadrature} quadrature")
        per[psd.quadrature] = per.get(psd.quadrature, 0.0) + psd.integrate_against(f.grid, f.values) / np.pi
    overlap = float(sum(per.values()))
    return FidelityPrediction(float(np.exp(-overlap)), overlap, per)


def reconstruct_filter_by_sid(env, alpha, omega_grid, phases=10, backend="analytic", shots=None,
                              seed=0):
    """Estimate ``F_Omega`` point by point from SID-modulated fidelities.

    A tone ``alpha cos(omega t + phi)`` on the drive acts as a line of power
    ``pi alpha**2 / 8``, whose overlap is ``alpha**2 F(omega) / 8``.  The
    phase-averaged fidelity ``f`` is therefore inverted as
    ``F = -8 ln(f) / alpha**2``.

    Parameters
    ----------
    backend : {"analytic", "simulated"}
        ``"analytic"`` evaluates ``exp(-overlap)`` from the exact filter;
        ``"simulated"`` propagates the modulated drive for each phase.
    shots : int, optional
        Shots per phase for the simulated backend; exact probabilities when
        omitted.

    Returns
    -------
    FilterFunction
        ``meta`` holds ``infidelity`` per point and boolean arrays
        ``below_floor`` (infidelity under the sensitivity floor) and
        ``saturated`` (fidelity at or under the saturation floor).
    """
    if not 0 < alpha < 1:
        raise InvalidParameterError("alpha must lie in (0, 1)")
    if int(phases) < 2:
        raise InvalidParameterError("at least two phases are needed")
    grid = _check_grid(omega_grid)
    phis = uniform_phases(int(phases))
    if backend == "analytic":
        F = amplitude_filter(env, grid).values
        fid = np.exp(-alpha**2 * F / 8.0)
    elif backend == "simulated":
        from .sensor import _seed_sequence, simulate_fidelity

        W, P = np.meshgrid(grid, phis, indexing="ij")
        mult = sid_multipliers(env.n, env.dt, np.full(W.size, alpha), W.ravel(), P.ravel())
        if shots is None:
            from .sensor import survival_probabilities

            surv = survival_probabilities(env, multipliers=mult)[:, 2]
            fid = surv.reshape(W.shape).mean(axis=1)
        else:
            seeds = _seed_sequence(seed).spawn(W.size)
            fid = np.empty(W.size)
            for i, s in enumerate(seeds):
                fid[i], _ = simulate_fidelity(env, multipliers=mult[i], shots=int(shots), seed=s)
            fid = fid.reshape(W.shape).mean(axis=1)
    else:
        raise InvalidParameterError(f"unknown backend {backend!r}")
    infid = 1.0 - fid
    saturated = fid <= SATURATION_FLOOR
    est = -8.0 * np.log(np.clip(fid, SATURATION_FLOOR, 1.0)) / alpha**2
    return FilterFunction(grid, np.maximum(est, 0.0), "amplitude",
                          meta={"infidelity": infid, "below_floor": infid <= SENSITIVITY_FLOOR,
                                "saturated": saturated, "alpha": alpha, "phases": int(phases),
                                "backend": backend})


def band_fraction(filt, lo, hi):
    """Share of ``int F`` that falls inside ``[lo, hi]``."""
    total = filt.integral()
    return 0.0 if total == 0 else filt.integral(lo, hi) / total


def peak_width(grid, values):
    """Full width at half maximum of the peak holding the global maximum.

    The half-maximum crossings are located by linear interpolation; a peak
    touching the grid edge is measured up to that edge.
    """
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    i = int(np.argmax(values))
    half = values[i] / 2.0
    lo = i
    while lo > 0 and values[lo - 1] >= half:
        lo -= 1
    hi = i
    while hi < values.size - 1 and values[hi + 1] >= half:
        hi += 1
    left = grid[lo] if lo == 0 else np.interp(half, [values[lo - 1], values[lo]], [grid[lo - 1], grid[lo]])
    right = grid[hi] if hi == values.size - 1 else np.interp(
        half, [values[hi + 1], values[hi]], [grid[hi + 1], grid[hi]])
    return float(right - left)


def count_peaks(values, threshold):
    """Number of local maxima strictly above ``threshold``."""
    from scipy.signal import find_peaks

    peaks, _ = find_peaks(np.asarray(values, dtype=float), height=threshold)
    return int(peaks.size)
