"""Plain-text tables, envelope files and run manifests.

Every writer is deterministic: floats are printed with 17 significant
digits, JSON keys are sorted and nothing time-dependent is recorded.
"""

import hashlib
import json
from pathlib import Path

import numpy as np

from .envelope import ControlEnvelope
from .errors import InvalidParameterError

__all__ = [
    "format_float",
    "write_table",
    "read_table",
    "write_envelope",
    "read_envelope",
    "write_json",
    "file_sha256",
    "filter_table",
]


def format_float(x):
    x = float(x)
    if np.isnan(x):
        return "nan"
    if np.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def _cell(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format_float(x)


def write_table(path, columns, units=None, comments=()):
    """Tab-separated table with ``#`` header lines giving each column's unit.

    Parameters
    ----------
    columns : dict
        Column name to 1-d sequence; all the same length.
    units : dict, optional
        Column name to unit string (``"1"`` when absent).
    comments : sequence of str
        Extra ``#`` lines written before the unit lines.
    """
    units = units or {}
    names = list(columns)
    arrays = [np.asarray(columns[n]) for n in names]
    lengths = {a.shape[0] for a in arrays}
    if len(lengths) > 1:
        raise InvalidParameterError("table columns differ in length")
    lines = [f"# {c}" for c in comments]
    lines += [f"# {n} [{units.get(n, '1')}]" for n in names]
    lines.append("\t".join(names))
    for row in zip(*arrays):
        lines.append("\t".join(_cell(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_table(path):
    """Inverse of :func:`write_table`; returns column name to float array."""
    rows = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    names = rows[0].split("\t")
    data = np.array([[float(v) for v in r.split("\t")] for r in rows[1:]], dtype=float)
    data = data.reshape(-1, len(names))
    return {n: data[:, i] for i, n in enumerate(names)}


def write_envelope(path, env):
    """Envelope file: ``dt``, ``rabi_max`` and ``target_area`` header, then samples."""
    comments = [f"dt {format_float(env.dt)} s",
                f"rabi_max {format_float(env.rabi_max)} rad/s",
                f"target_area {format_float(env.target_area)} rad"]
    write_table(path, {"index": np.arange(env.n), "real": env.samples.real, "imag": env.samples.imag},
                {"index": "segment", "real": "rabi_max", "imag": "rabi_max"}, comments)


def read_envelope(path):
    header = {}
    for ln in Path(path).read_text().splitlines():
        if not ln.startswith("#"):
            break
        parts = ln[1:].split()
        if len(parts) == 3 and parts[0] in ("dt", "rabi_max", "target_area"):
            header[parts[0]] = float(parts[1])
    cols = read_table(path)
    return ControlEnvelope(cols["real"] + 1j * cols["imag"], header["dt"], header["rabi_max"],
                           header["target_area"])


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else format_float(x)
    return obj


def write_json(path, obj):
    Path(path).write_text(json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n")


def file_sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def filter_table(path, filt, extra=None):
    """Two-column filter export (``omega_rad_per_s``, ``value``) plus optional columns."""
    cols = {"omega_rad_per_s": filt.grid, "value": filt.values}
    units = {"omega_rad_per_s": "rad/s", "value": "rad^2"}
    for name, (arr, unit) in (extra or {}).items():
        cols[name] = arr
        units[name] = unit
    write_table(path, cols, units, [f"quadrature {filt.quadrature}",
                                    f"norm_convention {filt.norm_convention}"])
