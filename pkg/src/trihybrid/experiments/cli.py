"""``isac`` command line: ``run``, ``pattern`` and ``gradcheck``.

Each mode prints one PASS/FAIL line per check it owns and exits 0 only if
all of them pass.  ``ISAC_LOG`` sets the log level (default WARNING).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from ..gradients import check_all
from ..metrics import Problem, sensing_gain, compose
from ..model import Direction, SystemConfig, TriHybridBeamformer
from ..optimizer import initial_beamformer
from ..scenario import random_scenario
from .io import ParseError, ValidationError, load_experiment
from .runner import beam_pattern_grid, pattern_csv, rate_tradeoff_sweep, run_comparison

log = logging.getLogger("trihybrid")

GRADIENT_TOL = 1e-6


def _report(checks: list[tuple[str, bool, str]]) -> int:
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return 0 if all(ok for _, ok, _ in checks) else 1


def cmd_run(args) -> int:
    spec = load_experiment(args.config)
    out = Path(args.out) if args.out else Path(spec.output_dir)
    if spec.sweep.variable == "R_th":
        report = rate_tradeoff_sweep(spec, out_dir=out, workers=args.workers,
                                     seed_offset=args.seed_offset)
    else:
        report = run_comparison(spec, out_dir=out, workers=args.workers,
                                seed_offset=args.seed_offset)
    errors = [r for r in report.records if r.get("error")]
    bad_rate = [r for r in report.records if r.get("error") is None and r["converged"]
                and not r["final"]["min_rate"] > r["config"]["rate_threshold"]]
    files_ok = all(p.exists() for p in report.run_files) and report.aggregate_path.exists()
    n_conv = sum(bool(r["converged"]) for r in report.records)
    print(f"wrote {len(report.run_files)} run files and {report.aggregate_path}")
    return _report([
        ("cells-completed", not errors, f"{len(report.records) - len(errors)}/{len(report.records)} without error"),
        ("rate-requirement", not bad_rate, f"{n_conv - len(bad_rate)}/{n_conv} converged runs meet R_th"),
        ("outputs-written", files_ok, str(out)),
    ])


def cmd_pattern(args) -> int:
    spec = load_experiment(args.config)
    record = json.loads(Path(args.checkpoint).read_text())
    if record.get("error") or "beamformer" not in record:
        print(f"FAIL checkpoint: run has no beamformer ({record.get('error')})")
        return 1
    cfg = SystemConfig.from_dict(record["config"])
    bf = TriHybridBeamformer.from_dict(record["beamformer"])
    scheme = record.get("scheme", "TriHybrid")
    grid = None
    if scheme.startswith("PaHybrid"):
        from ..baselines import Scheme
        grid = Scheme.parse(scheme).grid
    table = beam_pattern_grid(bf, cfg, args.res, grid)
    out = Path(args.out) if args.out else Path(spec.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / (Path(args.checkpoint).stem + "__pattern.csv")
    path.write_text(pattern_csv(table))
    print(f"wrote {path}")
    n_expected = (int(round(90 / args.res)) + 1) * int(round(360 / args.res))
    checks = [("grid-size", table.shape[0] == n_expected, f"{table.shape[0]} rows, expected {n_expected}")]
    if grid is None:
        rng = np.random.default_rng(0)
        eb = compose(bf)
        worst = 0.0
        for k in rng.choice(table.shape[0], size=min(10, table.shape[0]), replace=False):
            t, p, g, _ = table[k]
            ref = sensing_gain(eb, Direction(np.deg2rad(t), np.deg2rad(p)), cfg)
            worst = max(worst, abs(g - ref) / max(abs(ref), 1e-300))
        checks.append(("spot-check", worst <= 1e-9, f"max relative deviation {worst:.2e}"))
    return _report(checks)


def gradcheck_errors(dims: tuple[int, int, int, int], seeds: int, mu: float = 5.0,
                     rate_threshold: float = 6.0) -> dict[str, float]:
    """Worst finite-difference error of each analytic gradient over random
    feasible points; the default threshold keeps the rate penalty active."""
    M, N, L, P = dims
    cfg = SystemConfig(num_users=M, ps_per_chain=N, elements_per_rhs=L, num_sense_dirs=P,
                       rate_threshold=rate_threshold).with_snr_db(10)
    worst = {"digital": 0.0, "analog": 0.0, "amplitude": 0.0}
    for seed in range(seeds):
        rng = np.random.default_rng(seed)
        scn = random_scenario(cfg, seed, desired_gains=rng.uniform(0.0, 0.05, P))
        bf = initial_beamformer(cfg, rng)
        bf = bf.replace(rhs_amplitudes=rng.uniform(0.05, 0.95, bf.rhs_amplitudes.shape))
        for k, v in check_all(bf, Problem.build(scn, cfg), mu).items():
            worst[k] = max(worst[k], v)
    return worst


def cmd_gradcheck(args) -> int:
    try:
        dims = tuple(int(v) for v in args.dims.split(","))
        if len(dims) != 4:
            raise ValueError
    except ValueError:
        print("FAIL dims: expected M,N,L,P")
        return 2
    worst = gradcheck_errors(dims, args.seeds, args.mu, args.rate_threshold)
    return _report([(f"gradient-{k}", v <= GRADIENT_TOL, f"max relative error {v:.2e} over {args.seeds} seeds")
                    for k, v in worst.items()])


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="isac", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="mode", required=True)

    r = sub.add_parser("run", help="run an experiment file")
    r.add_argument("--config", required=True)
    r.add_argument("--seed-offset", type=int, default=0)
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--out", default=None)
    r.set_defaults(func=cmd_run)

    t = sub.add_parser("pattern", help="beam-pattern grid of a stored run")
    t.add_argument("--config", required=True)
    t.add_argument("--checkpoint", required=True)
    t.add_argument("--res", type=float, default=1.0)
    t.add_argument("--out", default=None)
    t.set_defaults(func=cmd_pattern)

    g = sub.add_parser("gradcheck", help="finite-difference check of the analytic gradients")
    g.add_argument("--dims", default="2,2,4,2", help="M,N,L,P")
    g.add_argument("--seeds", type=int, default=20)
    g.add_argument("--mu", type=float, default=5.0)
    g.add_argument("--rate-threshold", type=float, default=6.0)
    g.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("ISAC_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValidationError) as exc:
        print(f"FAIL config: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
