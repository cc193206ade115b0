"""Command-line interface.

Subcommands: simulate, invariant, average, converge, audit.
Common flags: --config PATH, --seed N, --out DIR, --workers K (the flag wins
over the MULTISCALE_WORKERS environment variable, which wins over the config).
Exit codes: 0 success, 2 config/hypothesis rejection, 3 explosion censoring
above 20%.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from .config import ExperimentConfig, parse_config
from .errors import ConfigurationRejectedError
from .harness import (ResultTable, emit_results, pooled_fbar_estimate,
                      pooled_invariant_rows, run_convergence_study,
                      run_holder_stats, run_khasminskii_study, run_moment_audit,
                      run_theta_stability, simulate_ensemble, write_csv)

EXIT_OK = 0
EXIT_CONFIG_REJECTED = 2
EXIT_EXPLOSION = 3

CENSOR_LIMIT = 0.20


def _common_flags(sub):
    sub.add_argument("--config", required=True, help="JSON experiment config")
    sub.add_argument("--seed", type=int, default=None,
                     help="override the config's master_seed")
    sub.add_argument("--out", default=None, help="output directory")
    sub.add_argument("--workers", type=int, default=None,
                     help="worker processes (overrides MULTISCALE_WORKERS)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slowfast",
        description="slow-fast stochastic reaction-diffusion experiments")
    subs = parser.add_subparsers(dest="command", required=True)
    sim = subs.add_parser("simulate", help="coupled trajectories at one epsilon")
    sim.add_argument("--eps", type=float, default=None,
                     help="override the model epsilon")
    _common_flags(sim)
    _common_flags(subs.add_parser(
        "invariant", help="stationary averages of the frozen fast field"))
    _common_flags(subs.add_parser(
        "average", help="averaged-drift estimate at the initial slow state"))
    _common_flags(subs.add_parser(
        "converge", help="weak error and drift-discrepancy study over the epsilon grid"))
    _common_flags(subs.add_parser(
        "audit", help="moment, increment-modulus and truncation-stability audits"))
    return parser


def _load(args) -> ExperimentConfig:
    cfg = parse_config(args.config)
    updates = {}
    if args.seed is not None:
        updates["master_seed"] = int(args.seed)
    if args.out is not None:
        updates["output_dir"] = args.out
    if args.workers is not None:
        updates["worker_count"] = int(args.workers)
    elif os.environ.get("MULTISCALE_WORKERS"):
        updates["worker_count"] = int(os.environ["MULTISCALE_WORKERS"])
    if updates:
        cfg = dataclasses.replace(cfg, **updates)
        # master_seed is part of the experiment definition; keep the sidecar
        # hash in sync with the effective seed.
        cfg.canonical["experiment"]["master_seed"] = cfg.master_seed
    return cfg


def _cmd_simulate(args) -> int:
    cfg = _load(args)
    results = simulate_ensemble(cfg, epsilon=args.eps)
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    k = cfg.dump_modes
    summary_rows = []
    censored = 0
    for i, res in enumerate(results):
        if res["censored"]:
            censored += 1
            summary_rows.append((i, 1, res["t_explosion"], None, None, None, None))
            continue
        header = (["t"] + [f"u_{j + 1}" for j in range(res["u_dump"].shape[1])]
                  + [f"v_{j + 1}" for j in range(res["v_dump"].shape[1])])
        rows = [(res["times"][m], *res["u_dump"][m], *res["v_dump"][m])
                for m in range(res["times"].size)]
        write_csv(os.path.join(out, f"trajectory_{i:05d}.csv"), header, rows)
        obs_vals = [ob(res["terminal_u"]) for ob in cfg.observables]
        summary_rows.append((i, 0, None, res["v_integral"], res["sup_norm_u"],
                             res["sup_norm_v"], *obs_vals))
    header = ["trajectory_id", "censored", "t_explosion", "v_integral",
              "sup_norm_u", "sup_norm_v"] + [ob.label for ob in cfg.observables]
    # Pad censored rows to the full width.
    width = len(header)
    summary_rows = [tuple(row) + (None,) * (width - len(row))
                    for row in summary_rows]
    write_csv(os.path.join(out, "summary.csv"), header, summary_rows)
    _write_meta(cfg, out, "summary")
    frac = censored / max(1, len(results))
    print(f"simulate: {len(results)} trajectories, censored {censored} "
          f"({100 * frac:.1f}%)")
    return EXIT_EXPLOSION if frac > CENSOR_LIMIT else EXIT_OK


def _write_meta(cfg: ExperimentConfig, out_dir: str, name: str) -> None:
    import json

    from . import __version__
    from .config import config_hash
    meta = {"seed": cfg.master_seed, "version": __version__,
            "config_sha256": config_hash(cfg)}
    with open(os.path.join(out_dir, f"{name}.meta.json"), "w",
              encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _cmd_invariant(args) -> int:
    cfg = _load(args)
    rows = pooled_invariant_rows(cfg)
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    inv = cfg.invariant
    write_csv(os.path.join(out, "invariant.csv"),
              ["observable_id", "mean", "std_error", "t_burn", "t_avg",
               "n_replicas", "seed"],
              [(label, mean, se, inv.t_burn, inv.t_avg, inv.n_replicas,
                cfg.master_seed) for label, mean, se in rows])
    _write_meta(cfg, out, "invariant")
    print(f"invariant: {len(rows)} observables -> {out}/invariant.csv")
    return EXIT_OK


def _cmd_average(args) -> int:
    cfg = _load(args)
    mean, se, analytic = pooled_fbar_estimate(cfg)
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    rows = []
    for k in range(mean.size):
        rows.append((k + 1, float(mean[k]), float(se[k]),
                     float(analytic[k]) if analytic is not None else None))
    write_csv(os.path.join(out, "average.csv"),
              ["mode_k", "Fbar_estimate", "std_error", "analytic_value_or_blank"],
              rows)
    _write_meta(cfg, out, "average")
    print(f"average: {mean.size} modes -> {out}/average.csv")
    return EXIT_OK


def _emit_and_report(table: ResultTable, cfg: ExperimentConfig,
                     name: str) -> int:
    path = emit_results(table, cfg.output_dir, name, cfg)
    frac = table.max_censored_fraction
    print(f"{name}: {len(table.rows)} rows -> {path} "
          f"(max censored fraction {100 * frac:.1f}%)")
    return EXIT_EXPLOSION if frac > CENSOR_LIMIT else EXIT_OK


def _cmd_converge(args) -> int:
    cfg = _load(args)
    return _emit_and_report(run_convergence_study(cfg), cfg, "converge")


def _cmd_audit(args) -> int:
    cfg = _load(args)
    table = ResultTable(rows=[])
    table.rows.extend(run_moment_audit(cfg).rows)
    table.rows.extend(run_holder_stats(cfg).rows)
    table.rows.extend(run_theta_stability(cfg).rows)
    table.rows.extend(run_khasminskii_study(cfg).rows)
    return _emit_and_report(table, cfg, "audit")


_COMMANDS = {
    "simulate": _cmd_simulate,
    "invariant": _cmd_invariant,
    "average": _cmd_average,
    "converge": _cmd_converge,
    "audit": _cmd_audit,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigurationRejectedError as exc:
        print(f"configuration rejected: {exc}", file=sys.stderr)
        return EXIT_CONFIG_REJECTED


if __name__ == "__main__":
    sys.exit(main())
