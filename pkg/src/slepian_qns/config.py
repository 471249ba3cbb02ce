"""YAML experiment configuration with strict, line-referenced validation.

A config has four optional sections: ``protocol``, ``noise``, ``run`` and
``output``.  Unknown keys and out-of-range values raise
:class:`~slepian_qns.errors.ConfigError` naming the offending line.  All
frequencies are angular (rad/s), times are in seconds.
"""

import hashlib
import re
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import yaml

from .errors import ConfigError
from .noise import PsdModel, fig3d_target_spectrum

__all__ = [
    "ProtocolConfig",
    "NoiseConfig",
    "RunConfig",
    "OutputConfig",
    "ExperimentConfig",
    "load_config",
    "parse_config",
]


# -- field checkers -------------------------------------------------------------


def _num(lo=None, hi=None, lo_open=False, hi_open=False):
    def check(v):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ValueError(f"expected a number, got {v!r}")
        v = float(v)
        if not np.isfinite(v):
            raise ValueError("must be finite")
        if lo is not None and (v < lo or (lo_open and v == lo)):
            raise ValueError(f"must be {'>' if lo_open else '>='} {lo:g}")
        if hi is not None and (v > hi or (hi_open and v == hi)):
            raise ValueError(f"must be {'<' if hi_open else '<='} {hi:g}")
        return v
    return check


def _int(lo=None):
    def check(v):
        if isinstance(v, bool) or not isinstance(v, int):
            raise ValueError(f"expected an integer, got {v!r}")
        if lo is not None and v < lo:
            raise ValueError(f"must be >= {lo}")
        return int(v)
    return check


def _choice(*options):
    def check(v):
        if v not in options:
            raise ValueError(f"must be one of {', '.join(options)}; got {v!r}")
        return v
    return check


def _int_list(lo=0):
    one = _int(lo)

    def check(v):
        items = v if isinstance(v, list) else [v]
        if not items:
            raise ValueError("must not be empty")
        return tuple(one(x) for x in items)
    return check


def _pair(lo=0.0):
    one = _num(lo)

    def check(v):
        if v is None:
            return None
        if not isinstance(v, list) or len(v) != 2:
            raise ValueError("expected a two-element list [lo, hi]")
        a, b = one(v[0]), one(v[1])
        if not a < b:
            raise ValueError("needs lo < hi")
        return (a, b)
    return check


def _grid(lo=0.0):
    """``{start, stop, num, spacing}`` mapping or an explicit list."""
    one = _num(lo)

    def check(v):
        if isinstance(v, list):
            vals = tuple(one(x) for x in v)
            if len(vals) < 1 or any(b <= a for a, b in zip(vals, vals[1:])):
                raise ValueError("explicit grid must be non-empty and strictly increasing")
            return vals
        if not isinstance(v, dict):
            raise ValueError("expected a list or a mapping with start, stop, num")
        extra = set(v) - {"start", "stop", "num", "spacing"}
        if extra:
            raise ValueError(f"unknown grid keys: {', '.join(sorted(extra))}")
        try:
            start, stop, num = one(v["start"]), one(v["stop"]), _int(1)(v["num"])
        except KeyError as exc:
            raise ValueError(f"grid needs {exc.args[0]!r}") from None
        spacing = _choice("linear", "log")(v.get("spacing", "linear"))
        if num > 1 and not stop > start:
            raise ValueError("grid needs stop > start")
        if spacing == "log":
            if start <= 0:
                raise ValueError("log grid needs start > 0")
            return tuple(np.geomspace(start, stop, num).tolist())
        return tuple(np.linspace(start, stop, num).tolist())
    return check


def _optional(check):
    def wrapped(v):
        return None if v is None else check(v)
    return wrapped


def _psd_spec(v):
    if v is None:
        return None
    if not isinstance(v, dict):
        raise ValueError("expected a mapping describing a PSD")
    allowed = {"kind", "level", "cutoff", "teeth", "omega0", "power", "scale"}
    extra = set(v) - allowed
    if extra:
        raise ValueError(f"unknown PSD keys: {', '.join(sorted(extra))}")
    kind = _choice("white", "comb", "single_line", "fig3d", "zero")(v.get("kind"))
    out = {"kind": kind}
    num = _num(0.0)
    for key in ("level", "cutoff", "omega0", "power", "scale"):
        if key in v:
            out[key] = num(v[key])
    if "teeth" in v:
        teeth = v["teeth"]
        if not isinstance(teeth, list) or not all(isinstance(t, list) and len(t) == 3 for t in teeth):
            raise ValueError("teeth must be a list of [lo, hi, height]")
        out["teeth"] = tuple(tuple(num(x) for x in t) for t in teeth)
    needs = {"white": ("level", "cutoff"), "comb": ("teeth",), "single_line": ("omega0", "power")}
    for key in needs.get(kind, ()):
        if key not in out:
            raise ValueError(f"{kind} PSD needs {key!r}")
    return out


# -- sections -------------------------------------------------------------------


@dataclass(frozen=True)
class ProtocolConfig:
    kind: str = "dpss"
    k: tuple = (0,)
    NW: float = 4.0
    N: int = 64
    dt: float = 1e-5
    rabi_max: float = 2.0 * np.pi * 1e4
    target_area: float = float(np.pi)
    area_mode: str = "area"
    shift: str = "none"
    omega_s: float = 0.0
    sideband: str = "upper"


@dataclass(frozen=True)
class NoiseConfig:
    amplitude: dict = None
    dephasing: dict = None


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    shots: int = 1000
    repetitions: int = 200
    phases: int = 10
    alpha: float = 0.1
    alpha_grid: tuple = None
    omega_grid: tuple = None
    backend: str = "analytic"
    realizations: int = 400
    resolution: int = 16
    readout_error: float = 0.005
    trials: int = 1
    segments: int = 4
    centers: tuple = None
    n_centers: int = 9
    orders: tuple = (1, 3, 5, 7)
    grid_points: int = 4096
    prior_rel_sd: float = 0.5
    wavefunction_points: int = None


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "out"


_CHECKS = {
    "protocol": {
        "kind": _choice("dpss", "flat_top"),
        "k": _int_list(0),
        "NW": _num(0.0, lo_open=True),
        "N": _int(1),
        "dt": _num(0.0, lo_open=True),
        "rabi_max": _num(0.0, lo_open=True),
        "target_area": _num(),
        "area_mode": _choice("area", "abs_area", "peak"),
        "shift": _choice("none", "cos", "ssb"),
        "omega_s": _num(0.0),
        "sideband": _choice("upper", "lower"),
    },
    "noise": {"amplitude": _psd_spec, "dephasing": _psd_spec},
    "run": {
        "seed": _int(0),
        "shots": _int(1),
        "repetitions": _int(1),
        "phases": _int(2),
        "alpha": _num(0.0, 1.0, hi_open=True),
        "alpha_grid": _optional(_grid(0.0)),
        "omega_grid": _optional(_grid(0.0)),
        "backend": _choice("analytic", "simulated"),
        "realizations": _int(1),
        "resolution": _int(1),
        "readout_error": _num(0.0, 0.5, hi_open=True),
        "trials": _int(1),
        "segments": _int(2),
        "centers": _pair(0.0),
        "n_centers": _int(2),
        "orders": _int_list(0),
        "grid_points": _int(16),
        "prior_rel_sd": _num(0.0),
        "wavefunction_points": _optional(_int(2)),
    },
    "output": {"dir": lambda v: str(v)},
}
_SECTIONS = {"protocol": ProtocolConfig, "noise": NoiseConfig, "run": RunConfig, "output": OutputConfig}


@dataclass(frozen=True)
class ExperimentConfig:
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    run: RunConfig = field(default_factory=RunConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    sha256: str = ""
    lines: dict = field(default_factory=dict, compare=False, repr=False)

    def to_dict(self):
        return {name: asdict(getattr(self, name)) for name in _SECTIONS}

    def psd(self, quadrature):
        spec = getattr(self.noise, quadrature)
        return build_psd(spec, quadrature)

    def where(self, section, key=None):
        line = self.lines.get((section, key)) or self.lines.get((section, None))
        return f"line {line}" if line else f"{section}.{key}" if key else section


def build_psd(spec, quadrature):
    if spec is None or spec["kind"] == "zero":
        return PsdModel.zero(quadrature)
    kind = spec["kind"]
    if kind == "white":
        return PsdModel.white(spec["level"], spec["cutoff"], quadrature)
    if kind == "comb":
        return PsdModel.comb(list(spec["teeth"]), quadrature, spec.get("cutoff"))
    if kind == "single_line":
        return PsdModel.single_line(spec["omega0"], spec["power"], quadrature)
    psd = fig3d_target_spectrum(spec.get("scale"))
    if quadrature != "amplitude":
        psd = PsdModel.comb(list(psd.teeth), quadrature, psd.cutoff)
    return psd


# -- loading --------------------------------------------------------------------


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads exponents without a sign (``1.0e6``) as floats."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
                  |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
                  |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
                  |[-+]?\.(?:inf|Inf|INF)
                  |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."),
)


def _line_map(node, path=(), out=None):
    """``(section, key) -> 1-based line`` for the top two mapping levels."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = path + (k.value,)
            if len(key) <= 2:
                out[key if len(key) == 2 else (key[0], None)] = k.start_mark.line + 1
                _line_map(v, key, out)
    return out


def parse_config(text):
    """Validate YAML text and return an :class:`ExperimentConfig`."""
    try:
        node = yaml.compose(text, Loader=_Loader)
        data = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}: " if mark else ""
        raise ConfigError(f"{where}invalid YAML ({getattr(exc, 'problem', exc)})") from None
    lines = _line_map(node) if node is not None else {}
    data = {} if data is None else data
    if not isinstance(data, dict):
        raise ConfigError("line 1: top level must be a mapping of sections")
    sections = {}
    for name, body in data.items():
        if name not in _SECTIONS:
            raise ConfigError(f"line {lines.get((name, None), '?')}: unknown section {name!r}")
        body = {} if body is None else body
        if not isinstance(body, dict):
            raise ConfigError(f"line {lines.get((name, None), '?')}: section {name!r} must be a mapping")
        values = {}
        for key, raw in body.items():
            line = lines.get((name, key), lines.get((name, None), "?"))
            check = _CHECKS[name].get(key)
            if check is None:
                known = ", ".join(f.name for f in fields(_SECTIONS[name]))
                raise ConfigError(f"line {line}: unknown key {name}.{key} (known: {known})")
            try:
                values[key] = check(raw)
            except ValueError as exc:
                raise ConfigError(f"line {line}: {name}.{key}: {exc}") from None
        sections[name] = _SECTIONS[name](**values)
    cfg = ExperimentConfig(**sections, sha256=hashlib.sha256(text.encode()).hexdigest(), lines=lines)
    _cross_check(cfg)
    return cfg


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)


def _fail(cfg, section, key, msg):
    raise ConfigError(f"{cfg.where(section, key)}: {section}.{key}: {msg}")


def _cross_check(cfg):
    """Module preconditions that involve more than one field."""
    p = cfg.protocol
    for k in p.k:
        if k >= p.N:
            _fail(cfg, "protocol", "k", f"order {k} must be below N = {p.N}")
    if p.kind == "dpss" and not p.NW / p.N <= 0.5:
        _fail(cfg, "protocol", "NW", f"NW / N must not exceed 1/2 (got {p.NW / p.N:g})")
    omega_B = 2.0 * np.pi * p.NW / (p.N * p.dt)
    nyquist = np.pi / p.dt
    if p.shift == "cos" and p.omega_s > nyquist - omega_B:
        _fail(cfg, "protocol", "omega_s", f"cos shift needs omega_s <= pi/dt - omega_B = {nyquist - omega_B:g}")
    if p.shift == "ssb" and not omega_B <= p.omega_s <= nyquist - omega_B:
        _fail(cfg, "protocol", "omega_s",
              f"ssb shift needs omega_B <= omega_s <= pi/dt - omega_B, i.e. [{omega_B:g}, {nyquist - omega_B:g}]")
    for quad in ("amplitude", "dephasing"):
        spec = getattr(cfg.noise, quad)
        try:
            psd = build_psd(spec, quad)
        except ValueError as exc:
            _fail(cfg, "noise", quad, str(exc))
        if psd.support_max > nyquist:
            _fail(cfg, "noise", quad, f"PSD support {psd.support_max:g} rad/s exceeds pi/dt = {nyquist:g}")
    r = cfg.run
    if r.omega_grid is not None and max(r.omega_grid) > nyquist:
        _fail(cfg, "run", "omega_grid", f"frequencies must not exceed pi/dt = {nyquist:g}")
    if r.alpha_grid is not None and max(r.alpha_grid) >= 1.0:
        _fail(cfg, "run", "alpha_grid", "modulation depths must lie below 1")
