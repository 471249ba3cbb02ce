"""Named parameter sets for the reconstruction round trip and scenario tests."""

import numpy as np

KHZ = 2.0 * np.pi * 1e3

# Engineered amplitude-noise comb: rectangular teeth with gently varying heights,
# truncated at a sharp high-frequency cutoff.  Frequencies in kHz.
FIG3D_TOOTH_STARTS_KHZ = (1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0)
FIG3D_TOOTH_WIDTH_KHZ = 0.7
FIG3D_TOOTH_HEIGHTS = (0.80, 1.00, 0.90, 1.10, 1.00, 0.85, 0.95, 1.05)
FIG3D_CUTOFF_KHZ = 8.5
# PSD units per unit height; the strongest tooth gives overlap 0.05 under k = 1
FIG3D_COMB_SCALE = 3.3e-6

# Battery: odd orders, NW = 7, nine band centres 1.075 kHz apart
BATTERY_ORDERS = (1, 3, 5, 7)
BATTERY_NW = 7.0
BATTERY_N = 128
BATTERY_CENTERS_KHZ = (1.9, 10.5)
BATTERY_N_CENTERS = 9
BATTERY_RABI_MAX = 2.0 * np.pi * 1e3
BATTERY_SEGMENTS = 4


def fig3d_teeth(scale=None):
    """Comb teeth ``(lo, hi, height)`` in rad/s and PSD units."""
    scale = FIG3D_COMB_SCALE if scale is None else scale
    cutoff = FIG3D_CUTOFF_KHZ * KHZ
    teeth = []
    for start, h in zip(FIG3D_TOOTH_STARTS_KHZ, FIG3D_TOOTH_HEIGHTS):
        lo = start * KHZ
        hi = min((start + FIG3D_TOOTH_WIDTH_KHZ) * KHZ, cutoff)
        if hi > lo:
            teeth.append((lo, hi, h * scale))
    return teeth
