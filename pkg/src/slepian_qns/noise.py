"""One-sided PSD models and random-phase harmonic noise synthesis."""

from dataclasses import dataclass, field

import numpy as np

from .conventions import NOISE_POWER_FACTOR, line_amplitude
from .errors import GridMismatchError, InvalidParameterError

__all__ = [
    "PsdModel",
    "NoiseTrajectory",
    "synthesize",
    "synthesize_ensemble",
    "periodogram",
    "fig3d_target_spectrum",
]

KINDS = ("white", "comb", "single_line", "tabulated")
QUADRATURES = ("amplitude", "dephasing")


@dataclass(frozen=True)
class PsdModel:
    """One-sided power spectral density on ``omega >= 0`` (rad/s).

    Only the fields relevant to ``kind`` are used:

    * ``white``: ``level`` up to ``cutoff``.
    * ``comb``: ``teeth``, a sequence of ``(lo, hi, height)`` rectangles.
    * ``single_line``: ``omega0`` and the integrated ``power``.
    * ``tabulated``: ``grid`` and ``values``, linearly interpolated.

    ``cutoff`` zeroes the spectrum above it for every kind.
    """

    kind: str
    quadrature: str = "amplitude"
    level: float = 0.0
    teeth: tuple = ()
    omega0: float = 0.0
    power: float = 0.0
    grid: np.ndarray = field(default=None, compare=False)
    values: np.ndarray = field(default=None, compare=False)
    cutoff: float = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParameterError(f"unknown PSD kind {self.kind!r}")
        if self.quadrature not in QUADRATURES:
            raise InvalidParameterError(f"unknown quadrature {self.quadrature!r}")
        if self.cutoff is not None and self.cutoff < 0:
            raise InvalidParameterError("cutoff must be non-negative")
        if self.kind == "white" and self.level < 0:
            raise InvalidParameterError("white level must be non-negative")
        if self.kind == "comb":
            teeth = tuple(sorted(tuple(float(x) for x in t) for t in self.teeth))
            for lo, hi, h in teeth:
                if not 0 <= lo < hi or h < 0:
                    raise InvalidParameterError(f"invalid comb tooth {(lo, hi, h)}")
            for (_, hi, _), (lo, _, _) in zip(teeth, teeth[1:]):
                if lo < hi:
                    raise InvalidParameterError("comb teeth overlap")
            object.__setattr__(self, "teeth", teeth)
        if self.kind == "single_line" and (self.omega0 < 0 or self.power < 0):
            raise InvalidParameterError("single line needs omega0 >= 0 and power >= 0")
        if self.kind == "tabulated":
            grid = np.asarray(self.grid, dtype=float)
            values = np.asarray(self.values, dtype=float)
            if grid.ndim != 1 or grid.shape != values.shape or grid.size < 2:
                raise InvalidParameterError("tabulated PSD needs matching 1-d grid and values")
            if np.any(np.diff(grid) <= 0) or grid[0] < 0 or np.any(values < 0):
                raise InvalidParameterError("tabulated PSD grid must increase from >= 0 with values >= 0")
            object.__setattr__(self, "grid", grid)
            object.__setattr__(self, "values", values)

    # construction helpers -------------------------------------------------

    @classmethod
    def white(cls, level, cutoff, quadrature="amplitude"):
        return cls("white", quadrature, level=float(level), cutoff=float(cutoff))

    @classmethod
    def comb(cls, teeth, quadrature="amplitude", cutoff=None):
        return cls("comb", quadrature, teeth=tuple(teeth), cutoff=cutoff)

    @classmethod
    def single_line(cls, omega0, power, quadrature="amplitude"):
        return cls("single_line", quadrature, omega0=float(omega0), power=float(power))

    @classmethod
    def tabulated(cls, grid, values, quadrature="amplitude", cutoff=None):
        return cls("tabulated", quadrature, grid=grid, values=values, cutoff=cutoff)

    @classmethod
    def zero(cls, quadrature="amplitude"):
        return cls("white", quadrature, level=0.0, cutoff=0.0)

    # queries ---------------------------------------------------------------

    @property
    def support_max(self):
        """Highest frequency carrying non-zero power (``inf`` if unbounded)."""
        if self.kind == "white":
            top = np.inf if self.level > 0 else 0.0
        elif self.kind == "comb":
            live = [hi for lo, hi, h in self.teeth if h > 0]
            top = max(live) if live else 0.0
        elif self.kind == "single_line":
            top = self.omega0 if self.power > 0 else 0.0
        else:
            nz = np.nonzero(self.values)[0]
            top = self.grid[min(nz[-1] + 1, self.grid.size - 1)] if nz.size else 0.0
        if self.cutoff is not None:
            top = min(top, self.cutoff)
        return float(top)

    def is_zero(self):
        return self.support_max == 0.0 or self.total_power() == 0.0

    def evaluate(self, omega):
        """Density at ``omega`` (a single line has no finite density and returns 0)."""
        omega = np.asarray(omega, dtype=float)
        out = np.zeros_like(omega)
        if self.kind == "white":
            out[:] = self.level
        elif self.kind == "comb":
            for lo, hi, h in self.teeth:
                out[(omega >= lo) & (omega < hi)] += h
        elif self.kind == "tabulated":
            out = np.interp(omega, self.grid, self.values, left=0.0, right=0.0)
        out = np.where(omega < 0, 0.0, out)
        if self.cutoff is not None:
            out = np.where(omega > self.cutoff, 0.0, out)
        return out

    def cell_power(self, lo, hi):
        """Integrated power over each interval ``[lo_j, hi_j)``."""
        lo = np.maximum(np.asarray(lo, dtype=float), 0.0)
        hi = np.asarray(hi, dtype=float)
        if self.cutoff is not None:
            hi = np.minimum(hi, self.cutoff)
        width = np.clip(hi - lo, 0.0, None)
        if self.kind == "white":
            return self.level * width
        if self.kind == "comb":
            out = np.zeros_like(width)
            for a, b, h in self.teeth:
                out += h * np.clip(np.minimum(hi, b) - np.maximum(lo, a), 0.0, None)
            return out
        if self.kind == "single_line":
            inside = (self.omega0 >= lo) & (self.omega0 < hi)
            return np.where(inside & (width > 0), self.power, 0.0)
        # tabulated: exact integral of the piecewise-linear interpolant
        knots = self.grid
        cum = np.concatenate(([0.0], np.cumsum(np.diff(knots) * (self.values[1:] + self.values[:-1]) / 2)))

        def primitive(x):
            x = np.clip(x, knots[0], knots[-1])
            idx = np.clip(np.searchsorted(knots, x, side="right") - 1, 0, knots.size - 2)
            x0 = knots[idx]
            y0 = self.values[idx]
            slope = (self.values[idx + 1] - y0) / (knots[idx + 1] - x0)
            dx = x - x0
            return cum[idx] + y0 * dx + 0.5 * slope * dx**2

        return np.where(width > 0, primitive(np.maximum(hi, lo)) - primitive(lo), 0.0)

    def total_power(self, upper=None):
        upper = self.support_max if upper is None else upper
        if not np.isfinite(upper):
            return np.inf
        return float(self.cell_power(np.array([0.0]), np.array([upper * (1 + 1e-12) + 1e-300]))[0])

    def breakpoints(self):
        """Frequencies where the density is discontinuous."""
        pts = []
        if self.kind == "comb":
            for lo, hi, _ in self.teeth:
                pts += [lo, hi]
        if self.cutoff is not None:
            pts.append(self.cutoff)
        return np.unique(np.asarray(pts, dtype=float))

    def integrate_against(self, grid, F):
        """``int F(w) S(w) dw`` with ``F`` sampled on ``grid`` (linear in between).

        Discontinuities of ``S`` are inserted as extra nodes so rectangular
        teeth are integrated without staircase error.  A single line
        contributes ``F(omega0) * power``.
        """
        grid = np.asarray(grid, dtype=float)
        F = np.asarray(F, dtype=float)
        if self.is_zero():
            return 0.0
        top = self.support_max
        if self.kind == "single_line":
            if not grid[0] <= self.omega0 <= grid[-1]:
                raise GridMismatchError(f"line at {self.omega0:g} rad/s lies outside the filter grid")
            return float(np.interp(self.omega0, grid, F) * self.power)
        if self.kind == "tabulated":
            if grid[0] > self.grid[0] or grid[-1] < min(top, self.grid[-1]):
                raise GridMismatchError("filter grid does not cover the tabulated PSD support")
        elif grid[-1] < top:
            raise GridMismatchError(f"filter grid stops at {grid[-1]:g} rad/s below PSD support {top:g}")
        extra = self.breakpoints()
        extra = extra[(extra > grid[0]) & (extra < grid[-1])]
        if self.kind == "tabulated":
            extra = np.concatenate((extra, self.grid[(self.grid > grid[0]) & (self.grid < grid[-1])]))
        nodes = np.unique(np.concatenate((grid, extra)))
        Fn = np.interp(nodes, grid, F)
        if self.kind == "tabulated":
            return float(np.trapezoid(Fn * self.evaluate(nodes), nodes))
        # piecewise-constant density: take it at each cell midpoint
        S = self.evaluate(0.5 * (nodes[1:] + nodes[:-1]))
        return float(np.sum((nodes[1:] - nodes[:-1]) * S * (Fn[:-1] + Fn[1:]) / 2))

    def scaled(self, factor):
        """Copy with every density (or line power) multiplied by ``factor``."""
        if self.kind == "white":
            return PsdModel.white(self.level * factor, self.cutoff, self.quadrature)
        if self.kind == "comb":
            teeth = [(lo, hi, h * factor) for lo, hi, h in self.teeth]
            return PsdModel.comb(teeth, self.quadrature, self.cutoff)
        if self.kind == "single_line":
            return PsdModel.single_line(self.omega0, self.power * factor, self.quadrature)
        return PsdModel.tabulated(self.grid, self.values * factor, self.quadrature, self.cutoff)

    def to_dict(self):
        d = {"kind": self.kind, "quadrature": self.quadrature}
        if self.kind == "white":
            d["level"] = self.level
        elif self.kind == "comb":
            d["teeth"] = [list(t) for t in self.teeth]
        elif self.kind == "single_line":
            d["omega0"] = self.omega0
            d["power"] = self.power
        else:
            d["grid"] = self.grid.tolist()
            d["values"] = self.values.tolist()
        if self.cutoff is not None:
            d["cutoff"] = self.cutoff
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kind = d.pop("kind")
        if kind == "comb":
            d["teeth"] = tuple(tuple(t) for t in d.get("teeth", ()))
        return cls(kind, **d)


@dataclass(frozen=True)
class NoiseTrajectory:
    """Noise samples ``x(n * dt)``; dimensionless for amplitude noise, rad/s for dephasing."""

    samples: np.ndarray
    dt: float
    seed: object = None

    @property
    def n(self):
        return self.samples.size


def _line_set(psd, n, dt, resolution):
    nyquist = np.pi / dt
    if psd.support_max > nyquist * (1 + 1e-12):
        raise InvalidParameterError(
            f"PSD support {psd.support_max:g} rad/s exceeds the Nyquist frequency {nyquist:g} rad/s"
        )
    if psd.kind == "single_line":
        if psd.power == 0:
            return np.zeros(0), np.zeros(0)
        return np.array([psd.omega0]), np.array([line_amplitude(psd.power)])
    L = resolution * n
    dw = 2 * np.pi / (L * dt)
    j = np.arange(1, (L + 1) // 2)
    omega = j * dw
    power = psd.cell_power(omega - dw / 2, omega + dw / 2)
    amps = np.sqrt(2.0 * NOISE_POWER_FACTOR * power / np.pi)
    return omega, amps


def synthesize(psd, n, dt, seed, resolution=1):
    """One stationary realization as a sum of random-phase cosines.

    The lines sit on ``omega_j = 2 pi j / (resolution * n * dt)`` strictly
    between DC and Nyquist, each carrying the PSD power of its cell.
    ``resolution > 1`` refines the line spacing below the trajectory's own
    Fourier resolution (the trajectory is then one window of a longer
    periodic record).  A ``single_line`` PSD is realized as one cosine at
    exactly ``omega0``.

    Parameters
    ----------
    seed : int or sequence of int
        Passed to :func:`numpy.random.default_rng`; ``(seed, index)`` tuples
        give independent per-realization streams.
    """
    n = int(n)
    if n < 2:
        raise InvalidParameterError("trajectory length must be at least 2")
    if not dt > 0:
        raise InvalidParameterError("dt must be positive")
    if int(resolution) != resolution or resolution < 1:
        raise InvalidParameterError("resolution must be a positive integer")
    omega, amps = _line_set(psd, n, dt, int(resolution))
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=omega.size)
    if psd.kind == "single_line" or omega.size == 0:
        t = np.arange(n) * dt
        x = np.zeros(n)
        for w, a, p in zip(omega, amps, phases):
            x += a * np.cos(w * t + p)
        return NoiseTrajectory(x, dt, seed)
    L = int(resolution) * n
    spec = np.zeros(L // 2 + 1, dtype=complex)
    spec[1 : 1 + omega.size] = 0.5 * L * amps * np.exp(1j * phases)
    x = np.fft.irfft(spec, L)[:n]
    return NoiseTrajectory(x, dt, seed)


def synthesize_ensemble(psd, n, dt, seed, realizations, resolution=1):
    """Stack of realizations, row ``r`` seeded with ``(seed, r)``."""
    if psd is None or psd.is_zero():
        return np.zeros((realizations, n))
    seed = tuple(np.atleast_1d(seed).tolist())
    return np.stack(
        [synthesize(psd, n, dt, seed + (r,), resolution).samples for r in range(realizations)]
    )


def periodogram(traj):
    """One-sided periodogram in the same convention as :func:`synthesize`.

    DC and Nyquist bins are omitted.  A cosine of amplitude ``a`` sitting on
    a Fourier bin integrates to ``pi * a**2 / (2 * NOISE_POWER_FACTOR)``.
    """
    x = np.asarray(traj.samples, dtype=float)
    n = x.size
    if n < 2:
        raise InvalidParameterError("trajectory length must be at least 2")
    dw = 2 * np.pi / (n * traj.dt)
    X = np.fft.rfft(x)
    j = np.arange(1, (n + 1) // 2)
    amp2 = 4.0 * np.abs(X[j]) ** 2 / n**2
    S = np.pi * amp2 / (2.0 * NOISE_POWER_FACTOR * dw)
    if j.size < 2:
        return PsdModel.tabulated(np.array([0.0, dw]), np.array([0.0, S[0] if S.size else 0.0]), "amplitude")
    return PsdModel.tabulated(j * dw, S, "amplitude")


def fig3d_target_spectrum(scale=None):
    """Engineered amplitude-noise comb with a hard high-frequency cutoff.

    Tooth positions, widths, relative heights and the cutoff are the
    constants in :mod:`slepian_qns.presets`; ``scale`` multiplies the
    heights (default :data:`slepian_qns.presets.FIG3D_COMB_SCALE`).
    """
    from . import presets

    return PsdModel.comb(presets.fig3d_teeth(scale), "amplitude",
                         cutoff=presets.FIG3D_CUTOFF_KHZ * presets.KHZ)
