"""Drive envelopes from sequences, SID modulation and band shifting."""

from dataclasses import dataclass

import numpy as np

from .dpss import DpssSequence
from .envelope import ControlEnvelope
from .errors import AreaNormalizationError, InvalidParameterError

__all__ = [
    "SidParams",
    "envelope_from_sequence",
    "apply_sid_modulation",
    "sid_multipliers",
    "uniform_phases",
    "cos_shift",
    "hilbert",
    "ssb_shift",
]

_ZERO_AREA_RTOL = 1e-9


@dataclass(frozen=True)
class SidParams:
    """System-identification tone ``alpha * cos(omega_sid * t + phi)``."""

    alpha: float
    omega_sid: float
    phi: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise InvalidParameterError(f"modulation depth must lie in [0, 1), got {self.alpha!r}")


def envelope_from_sequence(seq, rabi_max, target_area=np.pi, mode="area", dt=None):
    """Scale a DPSS or flat-top sequence into a drive envelope.

    Parameters
    ----------
    seq : DpssSequence, ControlEnvelope or array_like
    rabi_max : float
        Largest Rabi rate (rad/s) the drive may use.
    target_area : float
        Rotation angle to reach.  Ignored in ``"peak"`` mode.
    mode : {"area", "abs_area", "peak"}
        ``"area"`` matches the signed area, ``"abs_area"`` the area of
        ``|Omega|``, and ``"peak"`` maps the largest sample to ``rabi_max``.

    Notes
    -----
    In the area modes the envelope's ``rabi_max`` is set to the peak rate
    actually needed, which is recorded along with the requested limit.  If
    that peak exceeds the limit the drive is clamped to the limit and the
    shortfall in area is flagged as ``area_clamped``.
    """
    if not rabi_max > 0:
        raise InvalidParameterError("rabi_max must be positive")
    meta = {}
    if isinstance(seq, DpssSequence):
        values = np.asarray(seq.values, dtype=float)
        dt = seq.params.dt
        meta.update(kind="dpss", k=seq.k, NW=seq.params.NW, eigenvalue=seq.eigenvalue,
                    omega_B=seq.params.omega_B, band=(0.0, seq.params.omega_B))
    elif isinstance(seq, ControlEnvelope):
        values = seq.samples.real.copy()
        dt = seq.dt
        meta.update(seq.meta)
    else:
        values = np.asarray(seq, dtype=float)
        if dt is None:
            raise InvalidParameterError("dt is required for plain arrays")
    peak = np.max(np.abs(values))
    if peak == 0:
        raise AreaNormalizationError("sequence is identically zero")
    meta["rabi_max_requested"] = float(rabi_max)

    if mode == "peak":
        samples = values / peak
        area = float(np.sum(samples) * rabi_max * dt)
        return ControlEnvelope(samples, dt, float(rabi_max), area, meta)

    if mode == "area":
        area = np.sum(values) * dt
        if abs(area) <= _ZERO_AREA_RTOL * np.sum(np.abs(values)) * dt:
            if target_area == 0:
                return envelope_from_sequence(values, rabi_max, 0.0, "peak", dt)
            raise AreaNormalizationError(
                "sequence has zero signed area; use mode='peak' or mode='abs_area'"
            )
    elif mode == "abs_area":
        area = np.sum(np.abs(values)) * dt
    else:
        raise InvalidParameterError(f"unknown normalization mode {mode!r}")

    rates = target_area * values / area
    needed = float(np.max(np.abs(rates)))
    if needed > rabi_max * (1 + 1e-12):
        meta["area_clamped"] = True
        needed = float(rabi_max)
    samples = rates / np.max(np.abs(rates))
    return ControlEnvelope(samples, dt, rabi_max=needed, target_area=float(target_area), meta=meta)


def sid_multipliers(n, dt, alpha, omega_sid, phi):
    """``1 + alpha cos(omega_sid t_n + phi)``, broadcasting over leading axes.

    ``alpha``, ``omega_sid`` and ``phi`` may be arrays of a common shape
    ``B``; the result has shape ``B + (n,)``.
    """
    alpha = np.asarray(alpha, dtype=float)[..., None]
    omega = np.asarray(omega_sid, dtype=float)[..., None]
    phi = np.asarray(phi, dtype=float)[..., None]
    t = np.arange(n) * dt
    return 1.0 + alpha * np.cos(omega * t + phi)


def uniform_phases(count):
    """``count`` phases evenly spaced on ``[0, 2 pi)``."""
    return 2.0 * np.pi * np.arange(count) / count


def apply_sid_modulation(env, p):
    """Multiply the envelope by ``1 + alpha cos(omega_sid t + phi)``."""
    mult = sid_multipliers(env.n, env.dt, p.alpha, p.omega_sid, p.phi)
    return env.with_samples(env.samples * mult, sid=(p.alpha, p.omega_sid, p.phi))


def _band_edge(env, omega_B):
    if omega_B is None:
        omega_B = env.omega_B
    return 0.0 if omega_B is None else float(omega_B)


def cos_shift(env, omega_s, omega_B=None):
    """Cosinusoidal band shift: ``samples[n] * cos(n omega_s dt)``.

    Both sidebands are kept, so the positive-axis band becomes
    ``[omega_s - omega_B, omega_s + omega_B]``.
    """
    omega_B = _band_edge(env, omega_B)
    nyquist = np.pi / env.dt
    if not 0.0 <= omega_s <= nyquist - omega_B + 1e-9 * nyquist:
        raise InvalidParameterError(
            f"omega_s={omega_s:g} must lie in [0, pi/dt - omega_B] = [0, {nyquist - omega_B:g}]"
        )
    carrier = np.cos(omega_s * env.times)
    band = (max(omega_s - omega_B, 0.0), omega_s + omega_B)
    shifted = env.with_samples(env.samples * carrier, shift="cos", omega_s=float(omega_s),
                               band=band, area_pre=env.signed_area)
    return shifted.with_samples(shifted.samples, area_post=shifted.signed_area)


def hilbert(values):
    """Discrete Hilbert transform by DFT bin masking.

    Negative-frequency bins are zeroed and positive ones doubled (DC and,
    for even length, Nyquist left unchanged); the imaginary part of the
    inverse transform is returned.
    """
    x = np.asarray(values, dtype=float)
    n = x.size
    if n < 2:
        raise InvalidParameterError("hilbert needs at least two samples")
    X = np.fft.fft(x)
    h = np.zeros(n)
    h[0] = 1.0
    if n % 2 == 0:
        h[n // 2] = 1.0
        h[1 : n // 2] = 2.0
    else:
        h[1 : (n + 1) // 2] = 2.0
    return np.fft.ifft(X * h).imag


def ssb_shift(env, omega_s, sideband="upper", omega_B=None):
    """Single-sideband band shift ``v cos(n omega_s dt) -/+ H[v] sin(n omega_s dt)``.

    The upper sideband (minus sign) keeps ``[omega_s, omega_s + omega_B]``
    on the positive axis and the lower one ``[omega_s - omega_B, omega_s]``,
    half the width of a cosinusoidal shift.  The envelope is not
    renormalized; areas before and after are recorded in ``meta``.
    """
    if not env.is_real:
        raise InvalidParameterError("ssb_shift expects a real (single-quadrature) envelope")
    if sideband not in ("upper", "lower"):
        raise InvalidParameterError(f"sideband must be 'upper' or 'lower', got {sideband!r}")
    omega_B = _band_edge(env, omega_B)
    nyquist = np.pi / env.dt
    if omega_s < omega_B or omega_s + omega_B > nyquist * (1 + 1e-12):
        raise InvalidParameterError(
            f"omega_s={omega_s:g} must satisfy omega_B <= omega_s <= pi/dt - omega_B"
        )
    v = env.samples.real
    h = hilbert(v)
    t = env.times
    sign = -1.0 if sideband == "upper" else 1.0
    out = v * np.cos(omega_s * t) + sign * h * np.sin(omega_s * t)
    band = (omega_s, omega_s + omega_B) if sideband == "upper" else (omega_s - omega_B, omega_s)
    shifted = env.with_samples(out, shift="ssb", sideband=sideband, omega_s=float(omega_s),
                               band=band, area_pre=env.signed_area)
    return shifted.with_samples(shifted.samples, area_post=shifted.signed_area)
