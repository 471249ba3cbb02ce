"""Piecewise-exact two-level-system simulator with projective readout.

Each segment ``n`` applies the rotation generated by

    H_n = 1/2 [Re(Omega_n)(1 + beta_n) sigma_x + Im(Omega_n)(1 + beta_n) sigma_y + b_n sigma_z]

for ``dt`` seconds.  Rotations are composed as unit quaternions, batched
over noise realizations.  A quaternion ``(w, x, y, z)`` rotates Bloch
vectors by ``2 arccos(w)`` about ``(x, y, z)``; ``H = Omega sigma_x / 2``
turns ``+z`` towards ``-y``.
"""

from dataclasses import dataclass, field

import numpy as np

from .control import sid_multipliers, uniform_phases
from .errors import InvalidParameterError

__all__ = [
    "QubitState",
    "MeasurementRecord",
    "ProtocolResult",
    "CalibrationResult",
    "propagate",
    "error_quaternions",
    "survival_probabilities",
    "evolve",
    "measure",
    "simulate_fidelity",
    "run_three_axis",
    "calibrate_sensitivity",
]

AXES = {"x": 0, "y": 1, "z": 2}
_UNIT = np.eye(3)


@dataclass(frozen=True)
class QubitState:
    bloch: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bloch, dtype=float)
        if b.shape != (3,):
            raise InvalidParameterError("Bloch vector must have three components")
        if np.linalg.norm(b) > 1 + 1e-9:
            raise InvalidParameterError("Bloch vector longer than 1")
        object.__setattr__(self, "bloch", b)

    @classmethod
    def up(cls, axis="z"):
        return cls(_UNIT[AXES[axis]])

    @property
    def purity_radius(self):
        return float(np.linalg.norm(self.bloch))


@dataclass(frozen=True)
class MeasurementRecord:
    axis: str
    shots: int
    up_count: int

    def __post_init__(self):
        if not 0 <= self.up_count <= self.shots:
            raise InvalidParameterError("up_count must lie in 0..shots")

    @property
    def p_up(self):
        return self.up_count / self.shots

    @property
    def std_err(self):
        p = self.p_up
        return float(np.sqrt(max(p * (1 - p), 0.25 / self.shots) / self.shots))


@dataclass(frozen=True)
class ProtocolResult:
    """Three-axis survival records and their tomographic combination.

    ``s_value = (1 + p_x - p_y - p_z) / 2`` where each ``p`` is the
    probability of finding the ideal final state for the matching
    preparation.  It isolates the x-quadrature error, so the
    amplitude-noise fidelity estimate is ``1 - s_value``.
    """

    records: dict
    s_value: float
    fidelity_estimate: float
    std_err: float
    z_fidelity: float
    z_std_err: float

    def to_row(self):
        return {
            "p_x": self.records["x"].p_up,
            "p_y": self.records["y"].p_up,
            "p_z": self.records["z"].p_up,
            "s_value": self.s_value,
            "fidelity": self.fidelity_estimate,
            "std_err": self.std_err,
            "z_fidelity": self.z_fidelity,
            "z_std_err": self.z_std_err,
        }


# -- propagation ---------------------------------------------------------------


def _as_batch(noise, n, name):
    if noise is None:
        return None
    arr = np.asarray(getattr(noise, "samples", noise), dtype=float)
    if arr.shape[-1] != n:
        raise InvalidParameterError(f"{name} noise has length {arr.shape[-1]}, envelope has {n}")
    return arr


def _qmul(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + bw * ax + ay * bz - az * by,
        aw * by + bw * ay + az * bx - ax * bz,
        aw * bz + bw * az + ax * by - ay * bx,
    )


def propagate(env, amp_noise=None, deph_noise=None, multipliers=None):
    """Total rotation of the protocol as quaternions.

    Parameters
    ----------
    env : ControlEnvelope
    amp_noise : array_like or NoiseTrajectory, optional
        Multiplicative drive noise ``beta`` of shape ``(n,)`` or ``(B, n)``.
    deph_noise : array_like or NoiseTrajectory, optional
        Additive ``sigma_z`` noise ``b`` (rad/s), shape ``(n,)`` or ``(B, n)``.
    multipliers : array_like, optional
        Extra drive multipliers (e.g. SID modulation), shape ``(n,)`` or
        ``(B, n)``; combined with ``1 + beta``.

    Returns
    -------
    ndarray
        Shape ``(B, 4)``, or ``(4,)`` when every input is one-dimensional.
    """
    n = env.n
    amp = _as_batch(amp_noise, n, "amplitude")
    deph = _as_batch(deph_noise, n, "dephasing")
    mult = _as_batch(multipliers, n, "multiplier")
    scalar = all(a is None or a.ndim == 1 for a in (amp, deph, mult))
    drive = np.ones((1, n))
    if amp is not None:
        drive = drive * (1.0 + np.atleast_2d(amp))
    if mult is not None:
        drive = drive * np.atleast_2d(mult)
    bz = np.zeros((1, n)) if deph is None else np.atleast_2d(deph)
    batch = np.broadcast_shapes(drive.shape, bz.shape)
    rates = env.rabi_rates
    rx = np.broadcast_to(rates.real * drive * env.dt, batch)
    ry = np.broadcast_to(rates.imag * drive * env.dt, batch)
    rz = np.broadcast_to(bz * env.dt, batch)
    angle = np.sqrt(rx**2 + ry**2 + rz**2)
    half = 0.5 * angle
    # sin(a/2)/a with its a -> 0 limit
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(angle > 1e-8, np.sin(half) / np.where(angle > 0, angle, 1.0), 0.5 - angle**2 / 48)
    qw = np.cos(half)
    qx, qy, qz = rx * scale, ry * scale, rz * scale
    q = (np.ones(batch[0]), np.zeros(batch[0]), np.zeros(batch[0]), np.zeros(batch[0]))
    for i in range(n):
        q = _qmul((qw[:, i], qx[:, i], qy[:, i], qz[:, i]), q)
    out = np.stack(q, axis=-1)
    out /= np.linalg.norm(out, axis=-1, keepdims=True)
    return out[0] if scalar else out


def rotation_matrix(q):
    w, x, y, z = np.moveaxis(np.asarray(q, dtype=float), -1, 0)
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
            np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
            np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
        ],
        -2,
    )


def error_quaternions(env, amp_noise=None, deph_noise=None, multipliers=None):
    """Noisy rotation expressed in the frame of the ideal one: ``q_ideal^-1 q``."""
    ideal = propagate(env)
    q = propagate(env, amp_noise, deph_noise, multipliers)
    conj = ideal * np.array([1.0, -1.0, -1.0, -1.0])
    return np.stack(_qmul(tuple(np.moveaxis(np.broadcast_to(conj, q.shape), -1, 0)),
                          tuple(np.moveaxis(q, -1, 0))), axis=-1)


def survival_probabilities(env, amp_noise=None, deph_noise=None, multipliers=None):
    """Probability of ending in the ideal final state for ``+x, +y, +z`` preparations.

    Returns an array of shape ``(..., 3)``.
    """
    e = error_quaternions(env, amp_noise, deph_noise, multipliers)
    e2 = e[..., 1:] ** 2
    return np.stack([1 - e2[..., 1] - e2[..., 2], 1 - e2[..., 0] - e2[..., 2], 1 - e2[..., 0] - e2[..., 1]], -1)


def evolve(state, env, amp_noise=None, deph_noise=None):
    """Final state after the protocol for one noise realization."""
    q = propagate(env, amp_noise, deph_noise)
    if q.ndim != 1:
        raise InvalidParameterError("evolve takes a single realization; use propagate for batches")
    return QubitState(rotation_matrix(q) @ state.bloch)


# -- readout -------------------------------------------------------------------


def _axis_vector(axis):
    if isinstance(axis, str):
        return _UNIT[AXES[axis]]
    v = np.asarray(axis, dtype=float)
    return v / np.linalg.norm(v)


def _flip(p, readout_error):
    return p * (1 - readout_error) + (1 - p) * readout_error


def measure(state, axis, shots, seed, readout_error=0.0):
    """Projective measurement repeated ``shots`` times.

    The outcome probability is ``(1 + bloch . axis) / 2``; counts are drawn
    binomially from ``numpy.random.default_rng(seed)``.  ``readout_error``
    flips each outcome with that probability.
    """
    if shots < 1:
        raise InvalidParameterError("shots must be at least 1")
    p = 0.5 * (1 + float(state.bloch @ _axis_vector(axis)))
    p = min(max(_flip(p, readout_error), 0.0), 1.0)
    count = int(np.random.default_rng(seed).binomial(shots, p))
    return MeasurementRecord(axis if isinstance(axis, str) else "custom", int(shots), count)


def _seed_sequence(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(np.atleast_1d(seed).tolist())


def _shot_counts(probs, shots, rng):
    """Binomial counts when shot ``s`` sees realization ``s mod R``."""
    probs = np.clip(np.asarray(probs, dtype=float), 0.0, 1.0)
    R = probs.size
    per = np.full(R, shots // R)
    per[: shots % R] += 1
    return int(rng.binomial(per, probs).sum())


def simulate_fidelity(env, amp_noise=None, deph_noise=None, multipliers=None, shots=None, seed=None,
                      axis="z"):
    """Ensemble survival of one preparation, with optional shot noise.

    Without ``shots`` the exact ensemble mean is returned with the standard
    error of the realization average.  With ``shots`` every shot draws the
    next realization in turn, so the binomial error covers both noise and
    projection.

    Returns
    -------
    mean, std_err : float
    """
    probs = survival_probabilities(env, amp_noise, deph_noise, multipliers)[..., AXES[axis]]
    probs = np.atleast_1d(probs)
    if shots is None:
        se = float(np.std(probs, ddof=1) / np.sqrt(probs.size)) if probs.size > 1 else 0.0
        return float(np.mean(probs)), se
    rng = np.random.default_rng(seed)
    count = _shot_counts(probs, int(shots), rng)
    rec = MeasurementRecord(axis, int(shots), count)
    return rec.p_up, rec.std_err


def run_three_axis(env, amp_noises=None, deph_noises=None, shots=1000, seed=0, multipliers=None):
    """Prepare ``+x, +y, +z``, run the protocol and read out against the ideal result.

    The noise arrays are ensembles of shape ``(R, n)``; shot ``s`` on each
    axis uses realization ``s mod R``.  Preparation and readout rotations
    are ideal.
    """
    probs = survival_probabilities(env, amp_noises, deph_noises, multipliers)
    probs = probs.reshape(-1, 3)
    seq = _seed_sequence(seed)
    records = {}
    for (axis, idx), child in zip(AXES.items(), seq.spawn(3)):
        rng = np.random.default_rng(child)
        records[axis] = MeasurementRecord(axis, int(shots), _shot_counts(probs[:, idx], int(shots), rng))
    px, py, pz = (records[a].p_up for a in "xyz")
    s_value = 0.5 * (1 + px - py - pz)
    se = 0.5 * np.sqrt(sum(records[a].std_err ** 2 for a in "xyz"))
    return ProtocolResult(records, s_value, 1.0 - s_value, float(se), pz, records["z"].std_err)


# -- sensitivity calibration ------------------------------------------------------


@dataclass(frozen=True)
class CalibrationResult:
    alphas: np.ndarray
    signal: np.ndarray
    baseline: np.ndarray
    combined_se: np.ndarray
    detected: np.ndarray
    threshold_alpha: float
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def threshold_db(self):
        return modulation_db(self.threshold_alpha)


def modulation_db(alpha):
    """Modulation depth in dB, ``20 log10(1 + alpha)``."""
    return float(20.0 * np.log10(1.0 + alpha))


def _scan_threshold(alphas, detected):
    threshold = np.nan
    for i in range(alphas.size - 1, -1, -1):
        if not detected[i]:
            break
        threshold = alphas[i]
    return float(threshold)


def calibrate_sensitivity(env, alpha_grid, omega_sid, phases=10, shots=100, repetitions=200, seed=0,
                          readout_error=0.005, trials=1):
    """Smallest SID depth whose signal stands one standard error above baseline.

    For each ``alpha`` the protocol is run with ``alpha cos(omega_sid t +
    phi)`` over ``phases`` uniform phases, ``repetitions x shots`` times per
    phase, interleaved with as many noiseless baseline runs.  The signal is
    the mean measured infidelity.  ``alpha`` counts as detected when
    ``signal - baseline >= sqrt(se_signal**2 + se_baseline**2)``; the
    threshold is the smallest ``alpha`` from which every larger grid value
    is detected, so isolated one-sigma fluctuations below it are ignored.

    A single threshold at SNR ~ 1 scatters by a grid factor of about
    ``sqrt(2)``.  With ``trials > 1`` the whole calibration is repeated
    independently and the median threshold is reported; the per-alpha
    arrays then hold the first trial.

    Returns
    -------
    CalibrationResult
        ``threshold_alpha`` is ``nan`` when nothing is detected.
    """
    alphas = np.asarray(alpha_grid, dtype=float)
    if np.any(np.diff(alphas) <= 0):
        raise InvalidParameterError("alpha_grid must be sorted ascending")
    if int(trials) < 1:
        raise InvalidParameterError("trials must be at least 1")
    phis = uniform_phases(int(phases))
    A, P = np.meshgrid(alphas, phis, indexing="ij")
    mult = sid_multipliers(env.n, env.dt, A.ravel(), np.full(A.size, omega_sid), P.ravel())
    p_ok = survival_probabilities(env, multipliers=mult)[:, AXES["z"]].reshape(A.shape)
    p_err = _flip(1.0 - np.clip(p_ok, 0.0, 1.0), readout_error)
    per_phase = int(repetitions) * int(shots)
    total = per_phase * int(phases)
    runs = []
    for trial_seed in _seed_sequence(seed).spawn(int(trials)):
        rng_sig, rng_base = (np.random.default_rng(s) for s in trial_seed.spawn(2))
        sig_counts = rng_sig.binomial(per_phase, p_err).sum(axis=1)
        base_counts = rng_base.binomial(per_phase, np.full(A.shape, _flip(0.0, readout_error))).sum(axis=1)
        signal = sig_counts / total
        baseline = base_counts / total
        se = np.sqrt((signal * (1 - signal) + baseline * (1 - baseline)) / total)
        detected = (signal - baseline >= se) & (signal > baseline)
        runs.append((signal, baseline, se, detected, _scan_threshold(alphas, detected)))
    thresholds = np.array([r[4] for r in runs])
    finite = thresholds[np.isfinite(thresholds)]
    # undetected trials count as above every grid value
    ranked = np.sort(np.where(np.isfinite(thresholds), thresholds, np.inf))
    threshold = ranked[(ranked.size - 1) // 2] if finite.size else np.nan
    threshold = float(threshold) if np.isfinite(threshold) else float("nan")
    signal, baseline, se, detected, _ = runs[0]
    return CalibrationResult(alphas, signal, baseline, se, detected, threshold,
                             {"phases": int(phases), "shots": int(shots), "repetitions": int(repetitions),
                              "readout_error": readout_error, "omega_sid": float(omega_sid),
                              "trials": int(trials), "trial_thresholds": thresholds})
