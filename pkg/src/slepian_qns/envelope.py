"""Piecewise-constant drive envelopes."""

from dataclasses import dataclass, field, replace

import numpy as np


@dataclass(frozen=True)
class ControlEnvelope:
    """Piecewise-constant drive on a uniform time grid.

    Parameters
    ----------
    samples : ndarray of complex
        Dimensionless drive per segment.  The real part multiplies a
        rotation about x, the imaginary part a rotation about y.
    dt : float
        Segment duration in seconds.
    rabi_max : float
        Rabi rate (rad/s) corresponding to a sample of unit magnitude.
    target_area : float
        Intended signed rotation angle before any modulation (radians).
    meta : dict
        Bookkeeping: target-band edges, flags raised by modulation, areas
        before and after band shifting.
    """

    samples: np.ndarray
    dt: float
    rabi_max: float = 1.0
    target_area: float = float("nan")
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=complex)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("envelope samples must be a non-empty 1-d array")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def n(self):
        return self.samples.size

    @property
    def duration(self):
        return self.n * self.dt

    @property
    def times(self):
        """Segment start times ``n * dt``."""
        return np.arange(self.n) * self.dt

    @property
    def rabi_rates(self):
        """Complex Rabi rate per segment in rad/s."""
        return self.rabi_max * self.samples

    @property
    def signed_area(self):
        """Net rotation angle of the in-phase drive."""
        return float(np.sum(self.rabi_rates.real) * self.dt)

    @property
    def abs_area(self):
        return float(np.sum(np.abs(self.rabi_rates)) * self.dt)

    @property
    def is_real(self):
        return not np.any(self.samples.imag)

    @property
    def band(self):
        """Positive-frequency target band ``(lo, hi)`` in rad/s, if known."""
        return self.meta.get("band")

    @property
    def omega_B(self):
        return self.meta.get("omega_B")

    def with_samples(self, samples, **meta):
        """Copy with new samples; extra keywords are merged into ``meta``."""
        merged = dict(self.meta)
        merged.update(meta)
        samples = np.asarray(samples, dtype=complex)
        if np.max(np.abs(samples)) > 1.0 + 1e-12:
            merged["exceeds_unit"] = True
        return replace(self, samples=samples, meta=merged)

    def scaled(self, factor):
        return replace(self, samples=self.samples * factor, meta=dict(self.meta))
