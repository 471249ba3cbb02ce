"""Normalization constants shared by every module.

The noise power convention is pinned so that the filter overlap
``(1/pi) * int F(w) S(w) dw`` equals, to first order, the infidelity of a
z-basis survival measurement.  With that choice a random-phase cosine
``a * cos(w t + phi)`` carries integrated one-sided power
``pi * a**2 / (2 * NOISE_POWER_FACTOR)``.
"""

import math

#: Multiplier in the line amplitudes ``a_j**2 = 2 * FACTOR * S_j * dw / pi``.
NOISE_POWER_FACTOR = 4.0

#: Tag stored on every filter function produced by :mod:`slepian_qns.filters`.
NORM_CONVENTION = "dt-weighted DTFT, rad/s Rabi units, overlap=(1/pi)*int(F*S), power factor 4"

#: Smallest infidelity the simulated readout is taken to resolve.
SENSITIVITY_FLOOR = 0.005

#: Fidelities at or below this value are treated as saturated.
SATURATION_FLOOR = 0.005


def line_power(amplitude):
    """Integrated one-sided PSD power of a random-phase cosine of given amplitude."""
    return math.pi * amplitude**2 / (2.0 * NOISE_POWER_FACTOR)


def line_amplitude(power):
    """Inverse of :func:`line_power`."""
    return (2.0 * NOISE_POWER_FACTOR * power / math.pi) ** 0.5
