"""Shared helpers: a per-session cache of replicate runs.

Long statistical runs are needed by both module tests and the acceptance
suite; each (config, seed) pair is executed at most once per session and only
a light trace (every ``STRIDE``-th iteration plus the last) is kept.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from ais.config import RunConfig
from ais.experiment import run_replicate

STRIDE = 100


@dataclass(frozen=True)
class LightRun:
    seed: int
    summary: dict
    t: np.ndarray
    cum_regret: np.ndarray
    instant_regret: np.ndarray
    z_hat_total: np.ndarray
    partition_count: np.ndarray
    final_q: np.ndarray
    last_snapshot: dict | None

    def at(self, t: int, column: str) -> float:
        i = int(np.searchsorted(self.t, t))
        if i >= len(self.t) or self.t[i] != t:
            raise KeyError(f"t={t} is not on the stored grid")
        return float(getattr(self, column)[i])


@lru_cache(maxsize=None)
def _run(config_json: str, seed: int) -> LightRun:
    cfg = RunConfig.from_json(json.loads(config_json))
    res = run_replicate(cfg, seed)
    tr = res.trajectory
    idx = np.unique(np.concatenate([np.arange(STRIDE - 1, len(tr), STRIDE), [len(tr) - 1]]))
    return LightRun(
        seed=seed,
        summary=res.summary,
        t=tr.t[idx].copy(),
        cum_regret=tr.cum_regret[idx].copy(),
        instant_regret=tr.instant_regret[idx].copy(),
        z_hat_total=tr.z_hat_total[idx].copy(),
        partition_count=tr.partition_count[idx].copy(),
        final_q=tr.final_q.copy(),
        last_snapshot=tr.snapshots[-1] if tr.snapshots else None,
    )


def replicates(config: RunConfig) -> list[LightRun]:
    """Run (or fetch) every seed of ``config``, in seed order."""
    cfg = replace(config, keep_x=False, snapshots=config.mode == "hidaisee")
    key = json.dumps(cfg.to_json(), sort_keys=True)
    return [_run(key, s) for s in cfg.seeds]


def final(runs: list[LightRun], key: str) -> np.ndarray:
    return np.array([r.summary[key] for r in runs], dtype=float)
