"""Command-line entry point: ``slepian-qns {dpss,sysid,reconstruct,calibrate}``.

Exit status: 0 on success, 2 for configuration errors, 3 for numerical
failures.
"""

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config
from .control import cos_shift, envelope_from_sequence, ssb_shift
from .dpss import (DpssParams, dpss_family, dpswf, flat_top_envelope, leakage_ratio,
                   out_of_band_fraction)
from .errors import ConfigError, ConvergenceError, InvalidParameterError, SlepianError
from .export import file_sha256, filter_table, format_float, write_envelope, write_json, write_table
from .filters import amplitude_filter, reconstruct_filter_by_sid

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def build_envelope(cfg, k):
    """Drive envelope for order ``k`` as described by the protocol section."""
    p = cfg.protocol
    if p.kind == "dpss":
        seq = dpss_family(p.N, p.NW / p.N, p.dt, kmax=k + 1)[k]
        env = envelope_from_sequence(seq, p.rabi_max, p.target_area, p.area_mode)
    else:
        base = flat_top_envelope(p.N, k, p.dt)
        env = envelope_from_sequence(base, p.rabi_max, p.target_area, p.area_mode)
        env = env.with_samples(env.samples, omega_B=2 * np.pi * p.NW / (p.N * p.dt),
                               band=(0.0, 2 * np.pi * p.NW / (p.N * p.dt)))
    if p.shift == "cos":
        env = cos_shift(env, p.omega_s)
    elif p.shift == "ssb":
        env = ssb_shift(env, p.omega_s, p.sideband)
    return env


def _default_omega_grid(cfg, points=400):
    nyquist = np.pi / cfg.protocol.dt
    return np.linspace(0.0, nyquist, points)


# -- subcommands ----------------------------------------------------------------


def cmd_dpss(cfg, out, executor):
    p = cfg.protocol
    ks = sorted(set(p.k))
    family = dpss_family(p.N, p.NW / p.N, p.dt, kmax=max(ks) + 1)
    seqs = [family[k] for k in ks]
    files = []
    cols = {"index": np.arange(p.N), "time_s": np.arange(p.N) * p.dt}
    cols.update({f"v{k}": s.values for k, s in zip(ks, seqs)})
    write_table(out / "dpss_values.tsv", cols, {"index": "segment", "time_s": "s"},
                [f"N {p.N}", f"NW {p.NW!r}"])
    files.append("dpss_values.tsv")

    points = cfg.run.wavefunction_points
    wfs = list(executor.map(lambda s: dpswf(s, grid_size=points), seqs))
    omega_B = DpssParams.from_nw(p.N, p.NW, p.dt).omega_B
    leak = []
    for k, wf in zip(ks, wfs):
        flat = dpswf(flat_top_envelope(p.N, k, p.dt), grid_size=points, parity=k % 2)
        try:
            leak.append(leakage_ratio(wf, flat, omega_B))
        except ArithmeticError:
            leak.append(float("inf"))
    write_table(out / "eigenvalues.tsv",
                {"k": ks, "lambda": [s.eigenvalue for s in seqs],
                 "out_of_band": [out_of_band_fraction(w, omega_B) for w in wfs],
                 "leakage_ratio_db": leak},
                {"k": "order", "leakage_ratio_db": "dB"}, [f"omega_B {omega_B!r} rad/s"])
    files.append("eigenvalues.tsv")

    cols = {"omega_rad_per_s": wfs[0].grid}
    cols.update({f"U{k}": w.values for k, w in zip(ks, wfs)})
    write_table(out / "wavefunctions.tsv", cols, {"omega_rad_per_s": "rad/s"})
    files.append("wavefunctions.tsv")
    for k in ks:
        name = f"envelope_k{k}.txt"
        write_envelope(out / name, build_envelope(cfg, k))
        files.append(name)
    return files, {}


def cmd_sysid(cfg, out, executor):
    r = cfg.run
    grid = np.asarray(r.omega_grid) if r.omega_grid is not None else _default_omega_grid(cfg)
    if grid.size < 2:
        raise ConfigError(f"{cfg.where('run', 'omega_grid')}: run.omega_grid needs at least two points")
    files = []
    for k in sorted(set(cfg.protocol.k)):
        env = build_envelope(cfg, k)
        exact = amplitude_filter(env, grid)
        if r.alpha == 0:
            est = np.zeros(grid.size)
            fid = np.ones(grid.size)
            floor = np.ones(grid.size, dtype=bool)
            sat = np.zeros(grid.size, dtype=bool)
        else:
            chunks = np.array_split(np.arange(grid.size), max(1, min(grid.size // 2, 16)))
            seeds = np.random.SeedSequence([r.seed, k]).spawn(len(chunks))

            def one(args):
                idx, s = args
                f = reconstruct_filter_by_sid(env, r.alpha, grid[idx], r.phases, r.backend,
                                              shots=r.shots if r.backend == "simulated" else None,
                                              seed=s)
                return f.values, 1 - f.meta["infidelity"], f.meta["below_floor"], f.meta["saturated"]

            parts = list(executor.map(one, zip(chunks, seeds)))
            est, fid, floor, sat = (np.concatenate([p[i] for p in parts]) for i in range(4))
        name = f"sysid_k{k}.tsv"
        filter_table(out / name, exact, {
            "estimate": (est, "rad^2"), "fidelity": (fid, "1"),
            "below_floor": (floor, "flag"), "saturated": (sat, "flag")})
        files.append(name)
    return files, {}


def cmd_reconstruct(cfg, out, executor):
    from .recon import (band_truth, bayesian_estimate, design_battery, locate_cutoff,
                        multitaper_estimate, simulate_battery)

    r = cfg.run
    psd = cfg.psd("amplitude")
    if r.centers is None and psd.is_zero():
        raise ConfigError("run.centers is required when the amplitude noise is zero")
    design = design_battery(centers=r.centers, psd=None if r.centers else psd, ks=r.orders,
                            NW=cfg.protocol.NW, n_centers=r.n_centers, N=cfg.protocol.N,
                            rabi_max=cfg.protocol.rabi_max)
    if psd.support_max > design.nyquist:
        raise ConfigError(f"amplitude PSD extends past the battery Nyquist limit {design.nyquist:g} rad/s")
    battery = simulate_battery(design, psd, r.realizations, r.shots, r.seed, r.resolution,
                               r.grid_points, executor)
    mt = multitaper_estimate(battery)
    by = bayesian_estimate(battery, mt, segments=r.segments, prior_rel_sd=r.prior_rel_sd)
    write_table(out / "battery.tsv", {
        "k": [e.k for e in battery.entries], "omega_s": [e.omega_s for e in battery.entries],
        "center": [e.center for e in battery.entries], "fidelity": [e.fidelity for e in battery.entries],
        "std_err": [e.std_err for e in battery.entries],
        "saturated": [e.saturated for e in battery.entries]},
        {"k": "order", "omega_s": "rad/s", "center": "rad/s"})
    truth = band_truth(psd, battery)
    write_table(out / "multitaper.tsv", {"omega_rad_per_s": mt.grid, "S": mt.values, "std": mt.std,
                                        "truth_band_average": truth},
                {"omega_rad_per_s": "rad/s", "S": "PSD", "std": "PSD", "truth_band_average": "PSD"})
    write_table(out / "bayesian.tsv", {"omega_rad_per_s": by.grid, "S": by.values, "std": by.std},
                {"omega_rad_per_s": "rad/s", "S": "PSD", "std": "PSD"})
    report = {
        "spacing_rad_per_s": design.spacing,
        "omega_B_rad_per_s": design.omega_B,
        "dt_s": design.protocols[0].dt,
        "multitaper": {"weights": {format_float(c): w for c, w in mt.weights.items()},
                       "iterations": {format_float(c): v for c, v in mt.meta["iterations"].items()},
                       "converged": {format_float(c): v for c, v in mt.meta["converged"].items()},
                       "lambda_normalized": True},
        "bayesian": {"segments": by.meta["segments"], "prior_rel_sd": by.meta["prior_rel_sd"],
                     "prior_floor": by.meta["prior_floor"]},
        "excluded": mt.meta["excluded"],
    }
    if not psd.is_zero() and np.any(mt.values > 0):
        report["cutoff_estimate"] = {"multitaper": locate_cutoff(mt.grid, mt.values),
                                     "bayesian": locate_cutoff(by.grid, by.values)}
    write_json(out / "report.json", report)
    if not all(mt.meta["converged"].values()):
        raise ConvergenceError("adaptive multitaper weights did not converge for every band")
    return ["battery.tsv", "multitaper.tsv", "bayesian.tsv", "report.json"], {}


def cmd_calibrate(cfg, out, executor):
    from .sensor import calibrate_sensitivity

    r = cfg.run
    p = cfg.protocol
    alphas = np.asarray(r.alpha_grid) if r.alpha_grid is not None else np.geomspace(1e-5, 1e-1, 41)
    files = []
    summary = {}
    ks = sorted(set(p.k))
    seeds = np.random.SeedSequence(r.seed).spawn(len(ks))

    def one(args):
        k, s = args
        env = build_envelope(cfg, k)
        return k, calibrate_sensitivity(env, alphas, p.omega_s, r.phases, r.shots, r.repetitions, s,
                                        r.readout_error, r.trials)

    for k, res in executor.map(one, zip(ks, seeds)):
        name = f"calibration_k{k}.tsv"
        write_table(out / name, {"alpha": res.alphas,
                                 "depth_db": 20 * np.log10(1 + res.alphas),
                                 "signal": res.signal, "baseline": res.baseline,
                                 "combined_se": res.combined_se, "detected": res.detected},
                    {"depth_db": "dB"})
        files.append(name)
        summary[f"k{k}"] = {"threshold_alpha": res.threshold_alpha,
                            "trial_thresholds": res.meta["trial_thresholds"],
                            "threshold_db": res.threshold_db if np.isfinite(res.threshold_alpha) else None}
    write_json(out / "calibration.json", summary)
    files.append("calibration.json")
    return files, {}


COMMANDS = {"dpss": cmd_dpss, "sysid": cmd_sysid, "reconstruct": cmd_reconstruct,
            "calibrate": cmd_calibrate}


class _Serial:
    def map(self, fn, items):
        return map(fn, items)


def build_parser():
    parser = argparse.ArgumentParser(prog="slepian-qns", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="YAML experiment config")
        sp.add_argument("--seed", type=int, help="overrides run.seed")
        sp.add_argument("--out", help="output directory (overrides output.dir)")
        sp.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    return parser


def run(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, run=replace(cfg.run, seed=args.seed))
        out = Path(args.out if args.out is not None else cfg.output.dir)
        out.mkdir(parents=True, exist_ok=True)
        if args.threads > 1:
            with ThreadPoolExecutor(args.threads) as pool:
                files, extra = COMMANDS[args.command](cfg, out, pool)
        else:
            files, extra = COMMANDS[args.command](cfg, out, _Serial())
        manifest = {
            "command": args.command,
            "version": __version__,
            "config_sha256": cfg.sha256,
            "seed": cfg.run.seed,
            "config": cfg.to_dict(),
            "outputs": {f: file_sha256(out / f) for f in sorted(files)},
        }
        manifest.update(extra)
        write_json(out / "manifest.json", manifest)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvalidParameterError as exc:
        print(f"invalid parameters: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except SlepianError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
