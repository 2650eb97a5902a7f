"""Replicate runner, CSV emission and sweeps."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Sequence

import numpy as np

from .config import RunConfig, SweepConfig
from .daisee import CellSource, DaiseeState, SyntheticArms, run
from .hidaisee import ProposalTree, hidaisee_run
from .metrics import Trajectory, total_variation
from .oracle import oracle_table
from .partition import make_equal_partition, resolve_tau
from .targets import target_from_json

__all__ = [
    "CSV_COLUMNS",
    "ReplicateResult",
    "build",
    "run_replicate",
    "run_replicates",
    "run_experiment",
    "run_sweep",
    "format_value",
    "trajectory_rows",
    "aggregate_rows",
]

CSV_COLUMNS = ("t", "arm", "x", "y", "z_hat_total", "instant_regret", "cum_regret", "partition_count")
AGG_FIELDS = ("y", "z_hat_total", "instant_regret", "cum_regret", "partition_count")


def format_value(v, fmt: str = "%.12g") -> str:
    """``fmt`` (default ``%.12g``) with NaN as an empty field and infinities as ``inf``."""
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return ""
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return fmt % v


def _parse(s: str) -> float:
    return math.nan if s == "" else float(s)


@dataclass
class ReplicateResult:
    """A finished replicate: its trace plus end-of-run summaries."""

    seed: int
    trajectory: Trajectory
    summary: dict = field(default_factory=dict)


def build(config: RunConfig, seed: int):
    """Construct the engine for one replicate.

    Returns ``(engine, pi, alpha_masses)``; the oracle quantities are
    ``None`` when regret tracking is off or not applicable.
    """
    pi = masses = None
    if config.mode == "synthetic-arms":
        src = SyntheticArms(config.K, config.p)
        from .partition import Arm

        taus = resolve_tau(config.tau, src.cells)
        arms = [Arm(c, tau) for c, tau in zip(src.cells, taus)]
        state = DaiseeState(arms, src, config.boost, seed, 1.0, config.on_degenerate)
        if config.regret_tracking:
            pi = src.pi
        return state, pi, masses
    target = target_from_json(config.target)
    if config.mode == "hidaisee":
        tree = ProposalTree(
            target, config.split, config.boost, config.tau, config.tau_rule, seed,
            lazy=config.lazy, oracle=config.regret_tracking,
        )
        return tree, None, None
    alpha = config.effective_alpha
    arms = make_equal_partition(target.domain, config.K, config.tau, target)
    cells = [a.cell for a in arms]
    state = DaiseeState(arms, CellSource(target, cells), config.boost, seed, alpha, config.on_degenerate)
    if config.regret_tracking:
        table = oracle_table(target, cells, alpha if alpha != 1.0 else None)
        pi = table.pi_a
        masses = table.alpha_masses
    return state, pi, masses


def run_replicate(config: RunConfig, seed: int) -> ReplicateResult:
    engine, pi, masses = build(config, seed)
    if isinstance(engine, ProposalTree):
        traj = hidaisee_run(engine, config.T, track_kl=config.regret_tracking,
                            snapshots=config.snapshots, keep_x=config.keep_x)
        summary = {
            "final_partition_count": engine.num_leaves,
            "splits": len(engine.splits),
            "last_split_t": engine.splits[-1] if engine.splits else None,
            "depth": engine.depth,
            "max_visited": engine.max_visited,
        }
        if config.regret_tracking:
            summary["final_full_kl"] = engine.full_kl()
    else:
        traj = run(engine, config.T, pi=pi, alpha_masses=masses, keep_x=config.keep_x)
        summary = {"final_q": engine.q.tolist(), "held": engine.held}
        if pi is not None:
            summary["pi"] = [float(v) for v in pi]
            summary["final_tv"] = total_variation(engine.q, pi)
    summary["final_z_hat_total"] = float(traj.z_hat_total[-1])
    summary["final_cum_regret"] = float(traj.cum_regret[-1])
    summary["final_instant_regret"] = float(traj.instant_regret[-1])
    return ReplicateResult(seed, traj, summary)


def _run_one(args) -> ReplicateResult:
    config, seed = args
    return run_replicate(config, seed)


def run_replicates(config: RunConfig, jobs: int = 1, seed_offset: int = 0) -> list[ReplicateResult]:
    """Run every seed of ``config``; results come back in seed order."""
    seeds = [s + seed_offset for s in config.seeds]
    tasks = [(config, s) for s in seeds]
    if jobs <= 1 or len(tasks) == 1:
        return [_run_one(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_one, tasks))


def trajectory_rows(traj: Trajectory, with_alpha: bool = False) -> list[list[str]]:
    rows = []
    for i in range(len(traj)):
        row = [
            format_value(traj.t[i]),
            format_value(traj.arm[i]),
            ";".join(format_value(v) for v in traj.x[i]),
            format_value(traj.y[i]),
            format_value(traj.z_hat_total[i]),
            format_value(traj.instant_regret[i]),
            format_value(traj.cum_regret[i]),
            format_value(traj.partition_count[i]),
        ]
        if with_alpha:
            row.append(format_value(traj.alpha_regret[i]))
        rows.append(row)
    return rows


def aggregate_rows(per_seed: Sequence[list[list[str]]], header: Sequence[str]) -> tuple[list[str], list[list[str]]]:
    """Per-``t`` mean and population std of every numeric column.

    The statistics are computed from the values as written, so they agree
    with a reader that averages the per-seed files.  They are emitted at full
    precision (``%.17g``) so that agreement holds to 1e-12.
    """
    fields = [h for h in header if h not in ("t", "arm", "x")]
    idx = [header.index(h) for h in fields]
    out_header = ["t", "n_seeds"] + [f"{h}_{s}" for h in fields for s in ("mean", "std")]
    T = len(per_seed[0])
    rows = []
    for i in range(T):
        vals = np.array([[_parse(rows_[i][j]) for j in idx] for rows_ in per_seed])
        row = [per_seed[0][i][0], str(len(per_seed))]
        for c in range(len(fields)):
            col = vals[:, c]
            if np.all(np.isnan(col)):
                row += ["", ""]
            else:
                with np.errstate(invalid="ignore"):
                    row += [format_value(math.fsum(col) / len(col), "%.17g"), format_value(float(np.std(col)), "%.17g")]
        rows.append(row)
    return out_header, rows


def _write_csv(path: str, header: Sequence[str], rows: Sequence[Sequence[str]]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def run_experiment(config: RunConfig, out_dir: str, jobs: int = 1, seed_offset: int = 0) -> dict:
    """Run every seed and write ``seed-<s>.csv``, ``aggregate.csv`` and
    ``summary.json`` under ``out_dir/<name>``.  Returns the summary."""
    results = run_replicates(config, jobs, seed_offset)
    folder = os.path.join(out_dir, config.name)
    os.makedirs(folder, exist_ok=True)
    with_alpha = config.mode == "alpha" and config.effective_alpha != 1.0 and config.regret_tracking
    header = list(CSV_COLUMNS) + (["alpha_regret"] if with_alpha else [])
    per_seed = []
    for res in results:
        rows = trajectory_rows(res.trajectory, with_alpha)
        _write_csv(os.path.join(folder, f"seed-{res.seed}.csv"), header, rows)
        per_seed.append(rows)
    agg_header, agg = aggregate_rows(per_seed, header)
    _write_csv(os.path.join(folder, "aggregate.csv"), agg_header, agg)
    summary = {
        "config": config.to_json(),
        "seeds": [r.seed for r in results],
        "replicates": [r.summary for r in results],
    }
    if config.mode == "hidaisee" and config.snapshots:
        summary["snapshots"] = {str(r.seed): r.trajectory.snapshots for r in results}
    with open(os.path.join(folder, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return summary


SWEEP_HEADER = ("value", "mean_final_cum_regret", "std_final_cum_regret", "mean_final_instant_regret",
                "ratio", "max_tau", "mean_final_partition_count", "mean_final_z_hat_total")


def _ratio_and_tau(config: RunConfig) -> tuple[float, float]:
    if config.mode == "synthetic-arms":
        src = SyntheticArms(config.K, config.p)
        z = np.array(src.payout) * src.p
        return float(z.max() / z.min()), max(resolve_tau(config.tau, src.cells))
    if config.mode == "hidaisee":
        return math.nan, math.nan
    target = target_from_json(config.target)
    arms = make_equal_partition(target.domain, config.K, config.tau, target)
    table = oracle_table(target, [a.cell for a in arms])
    z = table.z_a
    ratio = float(z.max() / z.min()) if z.min() > 0 else math.inf
    return ratio, max(a.tau for a in arms)


def run_sweep(sweep: SweepConfig, out_dir: str | None = None, jobs: int = 1, seed_offset: int = 0) -> list[dict]:
    """One summary row per swept value: mean and std (over seeds) of the final
    cumulative regret, mean final instantaneous regret, and context columns.

    Rows follow the given value order, except the ``ratio`` axis, whose rows
    are sorted by the oracle ratio ``Z_max / Z_min``.
    """
    rows = []
    for value in sweep.values:
        cfg = replace(sweep.config_for(value), keep_x=False, snapshots=False)
        results = run_replicates(cfg, jobs, seed_offset)
        cum = np.array([r.summary["final_cum_regret"] for r in results])
        inst = np.array([r.summary["final_instant_regret"] for r in results])
        counts = np.array([r.trajectory.partition_count[-1] for r in results], dtype=float)
        zt = np.array([r.summary["final_z_hat_total"] for r in results])
        ratio, max_tau = _ratio_and_tau(cfg)
        rows.append({
            "value": value,
            "mean_final_cum_regret": float(np.mean(cum)),
            "std_final_cum_regret": float(np.std(cum, ddof=1)) if len(cum) > 1 else 0.0,
            "mean_final_instant_regret": float(np.mean(inst)),
            "ratio": ratio,
            "max_tau": max_tau,
            "mean_final_partition_count": float(np.mean(counts)),
            "mean_final_z_hat_total": float(np.mean(zt)),
            "per_seed_cum_regret": cum.tolist(),
        })
    if sweep.axis == "ratio":
        rows.sort(key=lambda r: r["ratio"])
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        name = f"sweep-{sweep.base.name}-{sweep.axis}.csv"
        body = [[format_value(r[h]) if h != "value" else str(r[h]) for h in SWEEP_HEADER] for r in rows]
        _write_csv(os.path.join(out_dir, name), SWEEP_HEADER, body)
    return rows
