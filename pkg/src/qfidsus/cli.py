"""Command-line experiment runner.

    qfidsus reduce --L 4
    qfidsus sweep --config run.cfg --jobs 2 --out results
    qfidsus mitigate --set L=6
    qfidsus --print-config

Settings are read from defaults, then ``--config``, then ``QFIDSUS_<KEY>``
environment variables, then ``--set key=value`` and the dedicated flags.
Every CSV row carries the master seed and the config hash.  Exit status is
0 on success, 2 on a configuration error and 3 if any cell failed.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import oracle, pipeline
from .config import ConfigError, RunConfig, load
from .core import NoiseModel
from .overlap import noise_sensitivity_report
from .pipeline import EstimatorSpec
from .tfim import pauli_decompose, reduce
from .zne import MitigationPlan, absolute_mitigation_error

log = logging.getLogger("qfidsus")

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 2, 3
QUANTITIES = ("energy", "d2E_dr2", "fidelity_susceptibility")

SUMMARY_COLUMNS = (
    "r", "quantity", "method", "scale_factors", "folding", "mean", "std", "n_trials",
    "condition_number_max", "seed", "config_hash", "exact", "mean_per_site", "std_per_site",
    "exact_per_site", "abs_err_per_trial_mean", "abs_err_of_mean", "n_failed", "flags",
)
TRIAL_COLUMNS = (
    "r", "trial", "quantity", "method", "scale_factors", "folding", "value", "variance",
    "condition_number", "seed", "config_hash", "flags",
)
PLAN_COLUMNS = (
    "method", "scale_factors", "folding", "quantity", "mean_std", "mean_abs_err_per_trial",
    "mean_abs_err_of_mean", "n_r", "seed", "config_hash",
)


def fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[dict]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(row[c]) for c in columns])
    return path


# --------------------------------------------------------------------------
# sweep rows
# --------------------------------------------------------------------------


def _method(spec: EstimatorSpec) -> tuple[str, str, str]:
    if spec.plan is None:
        return spec.kind, "1", "none"
    return spec.kind, ";".join(str(s) for s in spec.plan.scale_factors), spec.plan.folding


def cell_rows(cfg: RunConfig, spec: EstimatorSpec, cell: pipeline.CellResult, exact: dict):
    """Summary rows and per-trial rows for one cell."""
    method, scales, folding = _method(spec)
    common = dict(method=method, scale_factors=scales, folding=folding, seed=cfg.master_seed, config_hash=cfg.hash)
    summary, trials = [], []
    for q in QUANTITIES:
        vals = [getattr(p, q).value for p in cell.trials]
        s = pipeline.summarize(vals)
        flags = sorted({f for p in cell.trials for f in p.flags})
        if cell.error:
            flags.append("failed")
        err = absolute_mitigation_error(vals, exact[q]) if vals else None
        summary.append(dict(
            common,
            r=cell.r,
            quantity=q,
            mean=s.mean,
            std=s.std,
            n_trials=s.n,
            condition_number_max=max((p.condition_number for p in cell.trials), default=math.nan),
            exact=exact[q],
            mean_per_site=s.mean / cfg.L,
            std_per_site=s.std / cfg.L,
            exact_per_site=exact[q] / cfg.L,
            abs_err_per_trial_mean=err.per_trial_mean if err else math.nan,
            abs_err_of_mean=err.of_mean if err else math.nan,
            n_failed=int(bool(cell.error)),
            flags=";".join(flags),
        ))
        for p in cell.trials:
            est = getattr(p, q)
            trials.append(dict(
                common,
                r=cell.r,
                trial=p.trial,
                quantity=q,
                value=est.value,
                variance=est.variance,
                condition_number=p.condition_number,
                flags=";".join(p.flags),
            ))
    return summary, trials


def run_specs(cfg: RunConfig, specs: Sequence[EstimatorSpec], trials: int, jobs: int):
    """Every (spec, r) cell through one worker pool; rows in (spec, r, trial) order."""
    tasks = [
        (cfg.L, k, r, spec, trials, cfg.master_seed)
        for spec in specs
        for k, r in enumerate(cfg.r_values)
    ]
    cells = pipeline.run_tasks(tasks, jobs)
    exact = {r: pipeline.exact_reference(cfg.L, r) for r in cfg.r_values}
    summary, long = [], []
    failed = 0
    n_r = len(cfg.r_values)
    for i, spec in enumerate(specs):
        for cell in cells[i * n_r : (i + 1) * n_r]:
            s, t = cell_rows(cfg, spec, cell, exact[cell.r])
            summary += s
            long += t
            failed += bool(cell.error)
    return summary, long, failed


def plan_rows(cfg: RunConfig, summary: list[dict]) -> list[dict]:
    """Per-plan averages over the r grid."""
    groups: dict[tuple, list[dict]] = {}
    for row in summary:
        groups.setdefault((row["method"], row["scale_factors"], row["folding"], row["quantity"]), []).append(row)
    out = []
    for (method, scales, folding, q), rows in groups.items():
        ok = [r for r in rows if r["n_trials"] > 0]
        out.append(dict(
            method=method,
            scale_factors=scales,
            folding=folding,
            quantity=q,
            mean_std=float(np.mean([r["std"] for r in ok])) if ok else math.nan,
            mean_abs_err_per_trial=float(np.mean([r["abs_err_per_trial_mean"] for r in ok])) if ok else math.nan,
            mean_abs_err_of_mean=float(np.mean([r["abs_err_of_mean"] for r in ok])) if ok else math.nan,
            n_r=len(ok),
            seed=cfg.master_seed,
            config_hash=cfg.hash,
        ))
    return out


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def _resolved(cfg: RunConfig, name: str) -> Path:
    path = Path(cfg.out) / f"resolved_config_{name}.txt"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(cfg.to_text(), encoding="utf-8")
    return path


def cmd_reduce(cfg: RunConfig, L: int) -> int:
    red = reduce(L)
    print(f"L = {L}: {len(red.basis)} composite states")
    for k, orb in enumerate(red.basis.orbits):
        print(f"  |c{k}> = 1/sqrt({orb.size}) ( {' + '.join(orb.labels())} )")
    with np.printoptions(precision=6, suppress=True, linewidth=120):
        print("H0 =")
        print(red.H0)
        print("H1 =")
        print(red.H1)
    rows = []
    for part, mat in zip(("H0", "H1"), red.padded()):
        for t in pauli_decompose(mat, part).terms:
            rows.append(dict(part=part, pauli=t.pauli.ops, coefficient=float(t.coeff)))
    print("Pauli decomposition (H = H0 + r H1):")
    for row in rows:
        print(f"  {row['part']}  {row['coefficient']:+.6f} {row['pauli']}")
    path = write_csv(Path(cfg.out) / f"reduce_L{L}.csv", ("part", "pauli", "coefficient"), rows)
    log.info("wrote %s", path)
    return EXIT_OK


def cmd_oracle(cfg: RunConfig) -> int:
    rows = []
    for r in cfg.r_values:
        rows.append(dict(
            r=r,
            energy=oracle.ground_energy(cfg.L, r),
            full_energy=oracle.full_ground_energy(cfg.L, r),
            dE_dr=oracle.dE_finite_difference(cfg.L, r),
            d2E_dr2=oracle.d2E_finite_difference(cfg.L, r),
            fs_spectral=oracle.fs_spectral(cfg.L, r),
            fs_finite_difference=oracle.fs_finite_difference(cfg.L, r),
        ))
    cols = ("r", "energy", "full_energy", "dE_dr", "d2E_dr2", "fs_spectral", "fs_finite_difference")
    for row in rows:
        print("  ".join(f"{c}={row[c]:.8g}" for c in cols))
    write_csv(Path(cfg.out) / f"oracle_L{cfg.L}.csv", cols + ("seed", "config_hash"),
              [dict(row, seed=cfg.master_seed, config_hash=cfg.hash) for row in rows])
    return EXIT_OK


def cmd_vqe(cfg: RunConfig) -> int:
    rows = []
    for r in cfg.r_values:
        res = pipeline.ground_state_angles(cfg.L, r)
        e0 = oracle.ground_energy(cfg.L, r)
        rows.append(dict(
            r=r,
            energy=res.energy,
            exact=e0,
            abs_err=abs(res.energy - e0),
            iterations=res.iterations,
            converged=res.converged,
            theta=";".join(repr(float(t)) for t in res.theta_opt),
        ))
        print(f"r={r:.2f}  E={res.energy:.10f}  |dE|={abs(res.energy - e0):.2e}  iters={res.iterations}")
    cols = ("r", "energy", "exact", "abs_err", "iterations", "converged", "theta")
    write_csv(Path(cfg.out) / f"vqe_L{cfg.L}.csv", cols + ("seed", "config_hash"),
              [dict(row, seed=cfg.master_seed, config_hash=cfg.hash) for row in rows])
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, jobs: int) -> int:
    _resolved(cfg, "sweep")
    summary, long, failed = run_specs(cfg, [cfg.estimator_spec()], cfg.n_trials, jobs)
    stem = f"sweep_L{cfg.L}_{cfg.estimator}"
    write_csv(Path(cfg.out) / f"{stem}.csv", SUMMARY_COLUMNS, summary)
    write_csv(Path(cfg.out) / f"{stem}_trials.csv", TRIAL_COLUMNS, long)
    for row in summary:
        log.info("r=%.2f %-24s mean=%.6g std=%.3g exact=%.6g", row["r"], row["quantity"], row["mean"], row["std"], row["exact"])
    return EXIT_PARTIAL if failed else EXIT_OK


def study_specs(cfg: RunConfig) -> list[EstimatorSpec]:
    """Plan (1) once as the unmitigated noisy run, then orders 1..n_max per folding."""
    specs = [EstimatorSpec("noisy", cfg.shots, cfg.noise)]
    for folding in cfg.foldings:
        for n in range(1, cfg.n_max + 1):
            specs.append(EstimatorSpec("mitigated", cfg.shots, cfg.noise, MitigationPlan.of_order(n, folding, cfg.shots)))
    return specs


def cmd_mitigate(cfg: RunConfig, jobs: int) -> int:
    _resolved(cfg, "mitigate")
    summary, long, failed = run_specs(cfg, study_specs(cfg), cfg.trials or 100, jobs)
    stem = f"mitigation_L{cfg.L}"
    write_csv(Path(cfg.out) / f"{stem}.csv", SUMMARY_COLUMNS, summary)
    write_csv(Path(cfg.out) / f"{stem}_trials.csv", TRIAL_COLUMNS, long)
    plans = plan_rows(cfg, summary)
    write_csv(Path(cfg.out) / f"{stem}_plans.csv", PLAN_COLUMNS, plans)
    for row in plans:
        print(f"{row['scale_factors']:>10} {row['folding']:>8} {row['quantity']:<24} "
              f"std={row['mean_std']:.4g} err/trial={row['mean_abs_err_per_trial']:.4g} "
              f"err(mean)={row['mean_abs_err_of_mean']:.4g}")
    return EXIT_PARTIAL if failed else EXIT_OK


OVERLAP_COLUMNS = (
    "r", "method", "p1", "p2", "fs_mean", "fs_std", "fs_exact", "mean_abs_deviation",
    "n_trials", "cnot_count", "status", "seed", "config_hash",
)


def cmd_overlap_bench(cfg: RunConfig) -> int:
    _resolved(cfg, "overlap_bench")
    n = cfg.noise
    levels = (NoiseModel(0.0, 0.0), n, NoiseModel(min(1.0, 2 * n.p1), min(1.0, 2 * n.p2)))
    rows = noise_sensitivity_report(
        cfg.L, cfg.r_values, cfg.overlap_methods, levels, cfg.trials or 20, cfg.shots, cfg.master_seed
    )
    out = [dict(vars(row), seed=cfg.master_seed, config_hash=cfg.hash) for row in rows]
    write_csv(Path(cfg.out) / f"overlap_bench_L{cfg.L}.csv", OVERLAP_COLUMNS, out)
    for row in rows:
        if row.status == "ok":
            print(f"r={row.r:.2f} {row.method:<18} p2={row.p2:<7g} S={row.fs_mean:.5f}+-{row.fs_std:.5f} "
                  f"|dS|={row.mean_abs_deviation:.5f} cnots={row.cnot_count}")
    return EXIT_OK


# --------------------------------------------------------------------------
# argument handling
# --------------------------------------------------------------------------

COMMANDS = ("reduce", "vqe", "sweep", "mitigate", "overlap-bench", "oracle")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one key")
    common.add_argument("--jobs", type=int, default=None, metavar="N", help="worker processes (default 1)")
    common.add_argument("--seed", type=int, default=None, metavar="N", help="master seed")
    common.add_argument("--out", default=None, metavar="DIR", help="output directory")
    common.add_argument("--L", type=int, default=None, help="chain length")
    common.add_argument("--estimator", default=None, help="exact, sampled, noisy or mitigated")
    common.add_argument("--trials", type=int, default=None)
    common.add_argument("--print-config", action="store_true", help="print the resolved config and exit")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="qfidsus", description=__doc__.split("\n")[0], parents=[common])
    sub = parser.add_subparsers(dest="command")
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def _overrides(args) -> dict[str, str]:
    out = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    for key, value in (("master_seed", args.seed), ("out", args.out), ("estimator", args.estimator), ("trials", args.trials)):
        if value is not None:
            out[key] = str(value)
    if args.L is not None and args.command != "reduce":
        out["L"] = str(args.L)
    return out


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = load(args.config, _overrides(args))
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.print_config:
        sys.stdout.write(cfg.to_text())
        return EXIT_OK
    if args.command is None:
        parser.print_help()
        return EXIT_CONFIG
    jobs = args.jobs if args.jobs is not None else 1
    if jobs < 1:
        print("config error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    log.info("config hash %s", cfg.hash)

    if args.command == "reduce":
        L = args.L if args.L is not None else cfg.L
        try:
            reduce(L)
        except ValueError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return cmd_reduce(cfg, L)
    if args.command == "oracle":
        return cmd_oracle(cfg)
    if args.command == "vqe":
        return cmd_vqe(cfg)
    if args.command == "sweep":
        return cmd_sweep(cfg, jobs)
    if args.command == "mitigate":
        return cmd_mitigate(cfg, jobs)
    return cmd_overlap_bench(cfg)


if __name__ == "__main__":
    sys.exit(main())
