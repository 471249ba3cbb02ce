"""Discrete prolate spheroidal sequences and flat-top references.

The sequences are the eigenvectors of the ``N x N`` sinc kernel
``K[n, m] = sin(2 pi W (n - m)) / (pi (n - m))``.  Because the kernel's
leading eigenvalues crowd against 1, the vectors are taken from the
symmetric tridiagonal matrix that commutes with it, and each eigenvalue is
recovered afterwards as a Rayleigh quotient against the kernel.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal, toeplitz

from .envelope import ControlEnvelope
from .errors import InvalidParameterError, LeakageRatioError

__all__ = [
    "DpssParams",
    "DpssSequence",
    "Wavefunction",
    "sinc_kernel",
    "generate_dpss",
    "dpss_family",
    "dpswf",
    "spectral_concentration",
    "out_of_band_fraction",
    "flat_top_envelope",
    "leakage_ratio",
]


@dataclass(frozen=True)
class DpssParams:
    """Length ``N``, half-bandwidth ``W`` (cycles/sample), spacing ``dt``, order ``k``."""

    N: int
    W: float
    dt: float = 1.0
    k: int = 0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise InvalidParameterError(f"N must be a positive integer, got {self.N!r}")
        if not 0.0 < self.W <= 0.5:
            raise InvalidParameterError(f"W must lie in (0, 1/2], got {self.W!r}")
        if not self.dt > 0:
            raise InvalidParameterError(f"dt must be positive, got {self.dt!r}")
        if int(self.k) != self.k or not 0 <= self.k < self.N:
            raise InvalidParameterError(f"order k must lie in 0..N-1, got {self.k!r}")

    @classmethod
    def from_nw(cls, N, NW, dt=1.0, k=0):
        return cls(N=N, W=NW / N, dt=dt, k=k)

    @property
    def NW(self):
        return self.N * self.W

    @property
    def omega_B(self):
        """Target-band edge ``2 pi W / dt`` in rad/s."""
        return 2.0 * np.pi * self.W / self.dt

    @property
    def duration(self):
        return self.N * self.dt


@dataclass(frozen=True)
class DpssSequence:
    params: DpssParams
    values: np.ndarray
    eigenvalue: float

    @property
    def k(self):
        return self.params.k

    @property
    def dt(self):
        return self.params.dt


@dataclass(frozen=True)
class Wavefunction:
    """Real, phase-centred DTFT of a sequence on ``[-pi/dt, pi/dt]``."""

    grid: np.ndarray
    values: np.ndarray
    dt: float = 1.0

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        if grid.size < 2 or np.any(np.diff(grid) <= 0):
            raise InvalidParameterError("wavefunction grid must be strictly increasing")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))


def sinc_kernel(N, W):
    """Dense ``N x N`` sinc kernel with ``2W`` on the diagonal."""
    lag = np.arange(1, N)
    first = np.empty(N)
    first[0] = 2.0 * W
    first[1:] = np.sin(2.0 * np.pi * W * lag) / (np.pi * lag)
    return toeplitz(first)


def _tridiagonal(N, W):
    n = np.arange(N)
    diag = ((N - 1 - 2.0 * n) / 2.0) ** 2 * np.cos(2.0 * np.pi * W)
    off = n[1:] * (N - n[1:]) / 2.0
    return diag, off


def _fix_sign(vec, k):
    if k % 2 == 0:
        if vec.sum() < 0:
            vec = -vec
    else:
        # first sample clearly above round-off decides the sign
        thresh = 1e-6 * np.max(np.abs(vec))
        first = vec[np.abs(vec) > thresh][0]
        if first < 0:
            vec = -vec
    return vec


def dpss_family(N, W, dt=1.0, kmax=None):
    """Orders ``0..kmax-1`` for one ``(N, W)`` pair (all ``N`` by default)."""
    kmax = N if kmax is None else int(kmax)
    if not 1 <= kmax <= N:
        raise InvalidParameterError(f"kmax must lie in 1..N, got {kmax!r}")
    DpssParams(N=N, W=W, dt=dt, k=kmax - 1)  # validates
    if N == 1:
        vecs = np.ones((1, 1))
    else:
        diag, off = _tridiagonal(N, W)
        _, vecs = eigh_tridiagonal(diag, off, select="i", select_range=(N - kmax, N - 1))
        vecs = vecs[:, ::-1]
    kernel = sinc_kernel(N, W)
    out = []
    for k in range(kmax):
        v = _fix_sign(vecs[:, k] / np.linalg.norm(vecs[:, k]), k)
        lam = float(v @ kernel @ v)
        out.append(DpssSequence(DpssParams(N=N, W=W, dt=dt, k=k), v, lam))
    return out


def generate_dpss(params):
    """The ``k``-th order sequence and its concentration eigenvalue."""
    return dpss_family(params.N, params.W, params.dt, kmax=params.k + 1)[params.k]


def _values_and_parity(seq, dt, parity):
    if isinstance(seq, DpssSequence):
        return np.asarray(seq.values, float), seq.params.dt, seq.k % 2
    if isinstance(seq, ControlEnvelope):
        values = seq.samples.real
        dt = seq.dt
    else:
        values = np.asarray(seq, dtype=float)
    if parity is None:
        # (anti)symmetry about the centre index decides which part is kept
        parity = int(np.sum(values * values[::-1]) < 0)
    return values, dt, parity


def dpswf(seq, grid_size=None, dt=1.0, parity=None):
    """Discrete prolate spheroidal wavefunction of a sequence.

    Parameters
    ----------
    seq : DpssSequence, ControlEnvelope or array_like
        Sequence to transform.  For plain arrays ``dt`` and ``parity`` may be
        given; parity 0 keeps the cosine (even) part of the centred
        transform, parity 1 the sine (odd) part.
    grid_size : int, optional
        Number of uniformly spaced points on ``[-pi/dt, pi/dt]``, at least
        ``2N``.  Defaults to ``16N``.

    Returns
    -------
    Wavefunction
    """
    values, dt, parity = _values_and_parity(seq, dt, parity)
    N = values.size
    grid_size = 16 * N if grid_size is None else int(grid_size)
    if grid_size < 2 * N:
        raise InvalidParameterError(f"grid_size must be at least 2N = {2 * N}")
    grid = np.linspace(-np.pi / dt, np.pi / dt, grid_size)
    centred = np.arange(N) - (N - 1) / 2.0
    phase = np.outer(grid * dt, centred)
    if parity == 0:
        U = np.cos(phase) @ values
    else:
        U = np.sin(phase) @ values
    return Wavefunction(grid, U, dt)


def _band_integral(grid, power, lo, hi):
    """Trapezoid of ``power`` over ``[lo, hi]`` with linear end-cell interpolation."""
    lo = max(lo, grid[0])
    hi = min(hi, grid[-1])
    if hi <= lo:
        return 0.0
    inside = (grid > lo) & (grid < hi)
    x = np.concatenate(([lo], grid[inside], [hi]))
    y = np.concatenate(([np.interp(lo, grid, power)], power[inside], [np.interp(hi, grid, power)]))
    return float(np.trapezoid(y, x))


def spectral_concentration(wf, omega_B):
    """Fraction of ``U**2`` inside ``[-omega_B, omega_B]`` (trapezoidal quadrature)."""
    grid = wf.grid
    if grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise InvalidParameterError("grid must be non-empty and strictly increasing")
    if omega_B < 0:
        raise InvalidParameterError("omega_B must be non-negative")
    power = wf.values**2
    total = float(np.trapezoid(power, grid))
    if total == 0:
        return 0.0
    inside = _band_integral(grid, power, -omega_B, omega_B)
    return min(max(inside / total, 0.0), 1.0)


def out_of_band_fraction(wf, omega_B):
    """``1 - lambda`` on the positive axis, integrated directly over ``[omega_B, pi/dt]``.

    Integrating the tail itself keeps precision when the concentration is
    within round-off of 1.
    """
    grid = wf.grid
    power = wf.values**2
    total = _band_integral(grid, power, 0.0, grid[-1])
    if total == 0:
        raise InvalidParameterError("wavefunction has no power")
    return _band_integral(grid, power, omega_B, grid[-1]) / total


def flat_top_envelope(N, k, dt=1.0):
    """Unit square wave with ``k`` sign changes at equally spaced boundaries.

    ``k = 0`` is a constant pulse and ``k = 1`` a rotary spin echo.  The
    boundaries are mirrored about the centre so that the envelope is even
    for even ``k`` and odd for odd ``k``.
    """
    if int(k) != k or not 0 <= k < N:
        raise InvalidParameterError(f"k must lie in 0..N-1, got {k!r}")
    def boundary(j):
        return int(np.floor(N * j / (k + 1) + 0.5))

    bounds = []
    for j in range(1, k + 1):
        mirror = k + 1 - j
        bounds.append(boundary(j) if j <= mirror else N - boundary(mirror))
    samples = np.ones(N)
    for b in bounds:
        samples[b:] *= -1.0
    return ControlEnvelope(samples, dt, rabi_max=1.0, meta={"kind": "flat_top", "k": int(k)})


def leakage_ratio(dpss_wf, flat_wf, omega_B):
    """Out-of-band power of the flat-top relative to the DPSS, in dB.

    Both concentrations are taken on the positive half-axis, ``[0, omega_B]``
    against ``[0, pi/dt]``.
    """
    leak_dpss = out_of_band_fraction(dpss_wf, omega_B)
    leak_flat = out_of_band_fraction(flat_wf, omega_B)
    if leak_dpss <= 0:
        raise LeakageRatioError("DPSS reference has no out-of-band power; ratio is infinite")
    if leak_flat <= 0:
        raise LeakageRatioError("flat-top reference has no out-of-band power")
    return float(10.0 * np.log10(leak_flat / leak_dpss))
