"""Seed sweeps, scheme comparisons and beam-pattern grids."""
from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..array import ChannelParams, steering_stack
from ..baselines import Scheme, build, final_metrics, pa_steering
from ..metrics import to_db
from ..model import Direction, Scenario, SystemConfig, TriHybridBeamformer
from ..scenario import default_desired_gains, random_scenario
from .io import VERSION, ExperimentSpec, content_hash, write_json

log = logging.getLogger(__name__)

AGGREGATE_COLUMNS = ("scheme", "sweep_variable", "sweep_value", "runs", "converged", "failed",
                     "mean_sensing_error", "std_sensing_error", "mean_min_rate", "std_min_rate",
                     "spec_hash", "version")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return "nan" if math.isnan(x) else format(x, ".12g")
    return str(x)


def build_scenario(spec: ExperimentSpec, cfg: SystemConfig, seed: int) -> Scenario:
    """Scenario of one cell; desired gains come from the unswept base system."""
    sc = spec.scenario
    if sc.desired_gains is not None:
        b = np.asarray(sc.desired_gains, dtype=float)
    else:
        base = spec.base_config()
        b = default_desired_gains(base, base.num_sense_dirs - sc.num_suppress,
                                  sc.num_suppress, sc.kappa)
    return random_scenario(cfg, seed, num_suppress=sc.num_suppress, desired_gains=b,
                           channel=ChannelParams(sc.num_paths), sense_dirs=spec.target_dirs(),
                           user_dirs=spec.user_dirs())


def scenario_summary(scn: Scenario) -> dict:
    """Compact scenario record; the hash covers the full channel data."""
    return {
        "sense_dirs_deg": [list(d.degrees()) for d in scn.sense_dirs],
        "user_dirs_deg": None if scn.user_dirs is None else [list(d.degrees()) for d in scn.user_dirs],
        "desired_gains": scn.desired_gains.tolist(),
        "hash": content_hash(scn.to_dict()),
    }


@dataclass(frozen=True)
class Cell:
    scheme: str
    value: float | None
    seed: int

    def file_name(self, variable: str) -> str:
        label = Scheme.parse(self.scheme).label
        point = "base" if self.value is None else f"{variable}={self.value:g}"
        return f"{label}__{point}__seed{self.seed}.json"


def cells(spec: ExperimentSpec, seed_offset: int = 0) -> list[Cell]:
    """Deterministic cell order: sweep value, then scheme, then seed."""
    return [Cell(s, v, seed + seed_offset)
            for v in spec.sweep.points() for s in spec.schemes for seed in spec.seeds]


def run_cell(spec: ExperimentSpec, cell: Cell) -> dict:
    """Run one (scheme, sweep value, seed) cell and return its JSON record."""
    cfg = spec.config_at(cell.value)
    params = spec.optimizer_params()
    record = {
        "version": VERSION,
        "scheme": cell.scheme,
        "seed": cell.seed,
        "sweep": {"variable": spec.sweep.variable, "value": cell.value},
        "config": cfg.to_dict(),
        "config_hash": content_hash(cfg.to_dict()),
        "optimizer": params.to_dict(),
        "artifact_params": {"kappa": spec.scenario.kappa,
                            "num_suppress": spec.scenario.num_suppress},
    }
    try:
        scn = build_scenario(spec, cfg, cell.seed)
        record["scenario"] = scenario_summary(scn)
        record["scenario_hash"] = record["scenario"]["hash"]
        variant = build(cell.scheme, cfg)
        result = variant.run(scn, cfg, params)
        record.update({
            "converged": result.converged,
            "iterations": result.iterations,
            "trace": [r.to_dict() for r in result.trace],
            "mu_trajectory": [r.mu for r in result.trace],
            "final": final_metrics(variant, result, scn, cfg),
            "beamformer": result.beamformer.to_dict(),
            "error": None,
        })
    except Exception as exc:  # recorded, the sweep goes on
        log.warning("cell %s failed: %s", cell, exc)
        record.update({"converged": False, "error": f"{type(exc).__name__}: {exc}"})
    return record


def _work(args) -> dict:
    spec_json, cell, out_dir = args
    spec = ExperimentSpec.model_validate_json(spec_json)
    record = run_cell(spec, cell)
    if out_dir is not None:
        write_json(Path(out_dir) / "runs" / cell.file_name(spec.sweep.variable), record)
    return record


@dataclass(frozen=True)
class ComparisonReport:
    records: tuple[dict, ...]
    run_files: tuple[Path, ...]
    aggregate_path: Path | None
    aggregate_rows: tuple[dict, ...]


def aggregate(spec: ExperimentSpec, records) -> list[dict]:
    """Mean/std over converged runs per (sweep value, scheme), in cell order."""
    spec_hash = content_hash(spec.model_dump())
    rows = []
    for v in spec.sweep.points():
        for s in spec.schemes:
            mine = [r for r in records if r["scheme"] == s and r["sweep"]["value"] == v]
            ok = [r for r in mine if r.get("error") is None and r["converged"]]
            err = np.array([r["final"]["sensing_error"] for r in ok], dtype=float)
            rate = np.array([r["final"]["min_rate"] for r in ok], dtype=float)
            rows.append({
                "scheme": s,
                "sweep_variable": spec.sweep.variable,
                "sweep_value": v,
                "runs": len(mine),
                "converged": len(ok),
                "failed": sum(r.get("error") is not None for r in mine),
                "mean_sensing_error": float(err.mean()) if ok else float("nan"),
                "std_sensing_error": float(err.std()) if ok else float("nan"),
                "mean_min_rate": float(rate.mean()) if ok else float("nan"),
                "std_min_rate": float(rate.std()) if ok else float("nan"),
                "spec_hash": spec_hash,
                "version": VERSION,
            })
    return rows


def rows_to_csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def run_comparison(spec: ExperimentSpec, *, out_dir: str | Path | None = None,
                   workers: int = 1, seed_offset: int = 0) -> ComparisonReport:
    """Run every cell, write per-run JSON files and ``aggregate.csv``."""
    out = Path(out_dir if out_dir is not None else spec.output_dir)
    todo = cells(spec, seed_offset)
    spec_json = spec.model_dump_json()
    args = [(spec_json, c, str(out)) for c in todo]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_work, args))
    else:
        records = [_work(a) for a in args]
    rows = aggregate(spec, records)
    out.mkdir(parents=True, exist_ok=True)
    agg = out / "aggregate.csv"
    agg.write_text(rows_to_csv(rows, AGGREGATE_COLUMNS))
    files = tuple(out / "runs" / c.file_name(spec.sweep.variable) for c in todo)
    return ComparisonReport(tuple(records), files, agg, tuple(rows))


TRADEOFF_COLUMNS = ("scheme", "rate_threshold", "converged", "runs", "mean_sensing_error",
                    "mean_min_rate")
TRADEOFF_RUN_COLUMNS = ("scheme", "rate_threshold", "seed", "converged", "sensing_error",
                        "min_rate", "mu_trajectory")


def rate_tradeoff_sweep(spec: ExperimentSpec, *, out_dir: str | Path | None = None,
                        workers: int = 1, seed_offset: int = 0) -> ComparisonReport:
    """Sensing error against the rate requirement; writes ``tradeoff.csv`` and
    ``tradeoff_runs.csv`` (with the penalty trajectory of every run)."""
    if spec.sweep.variable != "R_th":
        raise ValueError("rate_tradeoff_sweep needs a sweep over R_th")
    report = run_comparison(spec, out_dir=out_dir, workers=workers, seed_offset=seed_offset)
    out = report.aggregate_path.parent
    summary = [{"scheme": r["scheme"], "rate_threshold": r["sweep_value"],
                "converged": r["converged"], "runs": r["runs"],
                "mean_sensing_error": r["mean_sensing_error"],
                "mean_min_rate": r["mean_min_rate"]} for r in report.aggregate_rows]
    (out / "tradeoff.csv").write_text(rows_to_csv(summary, TRADEOFF_COLUMNS))
    per_run = []
    for rec in report.records:
        ok = rec.get("error") is None
        per_run.append({
            "scheme": rec["scheme"], "rate_threshold": rec["sweep"]["value"],
            "seed": rec["seed"], "converged": rec["converged"],
            "sensing_error": rec["final"]["sensing_error"] if ok else float("nan"),
            "min_rate": rec["final"]["min_rate"] if ok else float("nan"),
            "mu_trajectory": ";".join(_fmt(m) for m in rec.get("mu_trajectory", [])),
        })
    (out / "tradeoff_runs.csv").write_text(rows_to_csv(per_run, TRADEOFF_RUN_COLUMNS))
    return report


# -- beam patterns --------------------------------------------------------------

PATTERN_COLUMNS = ("theta_deg", "phi_deg", "gain_linear", "gain_db")


def _grid_axes(resolution: float) -> tuple[np.ndarray, np.ndarray]:
    n_t, n_p = 90.0 / resolution, 360.0 / resolution
    if not (resolution > 0 and abs(n_t - round(n_t)) < 1e-9 and abs(n_p - round(n_p)) < 1e-9):
        raise ValueError(f"resolution {resolution} must divide both 90 and 360 degrees")
    theta = np.arange(int(round(n_t)) + 1) * resolution
    phi = np.arange(int(round(n_p))) * resolution
    return theta, phi


def beam_pattern_grid(bf: TriHybridBeamformer, cfg: SystemConfig, resolution: float = 1.0,
                      grid: tuple[int, int] | None = None) -> np.ndarray:
    """Sensing-beam gain on the elevation x azimuth grid.

    Returns an array with columns (theta_deg, phi_deg, gain, gain_dB) in
    theta-major order.  ``grid`` selects the phased-array geometry.
    """
    theta, phi = _grid_axes(resolution)
    s_sum = bf.analog_matrix @ bf.digital.sum(axis=1)
    w = (bf.element_weights * s_sum[:, None])                      # (NM, L)
    rows = []
    for t in theta:
        dirs = [Direction(np.deg2rad(t), np.deg2rad(p)) for p in phi]
        if grid is None:
            a = steering_stack(dirs, cfg)
        else:
            a = pa_steering(dirs, grid[0], grid[1], cfg)
        g = np.abs(np.einsum("pil,il->p", a.conj(), w)) ** 2
        rows.append(np.column_stack([np.full(phi.size, t), phi, g, to_db(g)]))
    return np.vstack(rows)


def pattern_csv(table: np.ndarray) -> str:
    buf = io.StringIO()
    buf.write(",".join(PATTERN_COLUMNS) + "\n")
    for t, p, g, db in table:
        buf.write(f"{t:g},{p:g},{format(g, '.12g')},{format(db, '.12g')}\n")
    return buf.getvalue()
