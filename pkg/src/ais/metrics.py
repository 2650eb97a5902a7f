"""Importance sampling estimators, KL regret and run traces."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np

from .errors import EstimatorError, PreconditionError
from .oracle import OracleTable, cell_kl_term, oracle_table
from .partition import WeightedSample
from .targets import Rectangle, TargetDensity

__all__ = [
    "kl_regret",
    "total_variation",
    "is_estimates",
    "ISEstimate",
    "full_kl",
    "RunRecord",
    "Trajectory",
]


def kl_regret(pi: Sequence[float], q: Sequence[float]) -> float:
    """``sum_a pi_a log(pi_a / q_a)`` with ``0 log 0 = 0``.

    Returns ``inf`` when some ``q_a = 0`` carries positive ``pi_a``.
    """
    pi = np.asarray(pi, dtype=float)
    q = np.asarray(q, dtype=float)
    if pi.shape != q.shape:
        raise PreconditionError(f"pi and q differ in shape: {pi.shape} vs {q.shape}")
    pos = pi > 0.0
    if np.any(q[pos] <= 0.0):
        return math.inf
    return float(np.sum(pi[pos] * np.log(pi[pos] / q[pos])))


def total_variation(p: Sequence[float], q: Sequence[float]) -> float:
    return 0.5 * float(np.sum(np.abs(np.asarray(p, dtype=float) - np.asarray(q, dtype=float))))


@dataclass(frozen=True)
class ISEstimate:
    z_hat: float
    expect: dict[str, float]
    n: int


def is_estimates(
    samples: Sequence[WeightedSample],
    q_density: Sequence[float],
    phis: Mapping[str, Callable[[Sequence[float]], float]] | None = None,
) -> ISEstimate:
    """Plain IS estimate of ``Z`` and self-normalized estimates of ``E_pi[phi]``.

    Args:
        samples: Draws with their stored target values.
        q_density: Full mixture density ``q_t(x_t)`` under which each draw
            was made (not the localized subproposal density).
        phis: Test functions by name.

    Raises:
        EstimatorError: no samples, or all importance weights are zero.
    """
    if len(samples) == 0:
        raise EstimatorError("no samples")
    qd = np.asarray(q_density, dtype=float)
    if qd.shape != (len(samples),):
        raise PreconditionError("need one proposal density per sample")
    f = np.array([s.f_val for s in samples])
    w = f / qd
    if not np.all(np.isfinite(w)):
        raise EstimatorError("non-finite importance weight")
    total = math.fsum(w)
    expect = {}
    if phis:
        if total == 0.0:
            raise EstimatorError("all importance weights are zero; self-normalized estimate undefined")
        for name, phi in phis.items():
            expect[name] = math.fsum(wi * phi(s.x) for wi, s in zip(w, samples)) / total
    return ISEstimate(total / len(samples), expect, len(samples))


def full_kl(
    target: TargetDensity,
    partition: Sequence[Rectangle],
    q: Sequence[float],
    oracle: OracleTable | None = None,
    tol: float | None = None,
    kl_terms: Sequence[float] | None = None,
) -> float:
    """``KL(pi || q)`` for the mixture of uniform cells with cell weights ``q``.

    Both parts are included: the within-cell divergence between ``pi`` and
    the uniform subproposals and the divergence between cell probabilities.
    ``kl_terms`` may supply the per-cell ``int f log(f * vol)`` values
    (see :func:`ais.oracle.cell_kl_term`) to skip the quadrature.
    """
    if oracle is None:
        oracle = oracle_table(target, partition, tol=tol)
    q = np.asarray(q, dtype=float)
    if kl_terms is None:
        kl_terms = [cell_kl_term(target, c, tol) for c in partition]
    pi = oracle.pi_a
    pos = pi > 0.0
    if np.any(q[pos] <= 0.0):
        return math.inf
    within = math.fsum(kl_terms) / oracle.z - math.log(oracle.z)
    return within - float(np.sum(pi[pos] * np.log(q[pos])))


@dataclass(frozen=True)
class RunRecord:
    """One iteration of a run; regret fields are ``None`` when not tracked."""

    t: int
    arm: int
    x: tuple[float, ...]
    y: float
    z_hat_total: float
    instant_regret: float | None = None
    cum_regret: float | None = None
    partition_count: int = 0
    alpha_regret: float | None = None


@dataclass
class Trajectory:
    """Columnar per-iteration trace.  Regret columns hold NaN when untracked."""

    t: np.ndarray
    arm: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z_hat_total: np.ndarray
    instant_regret: np.ndarray
    cum_regret: np.ndarray
    partition_count: np.ndarray
    alpha_regret: np.ndarray | None = None
    final_q: np.ndarray | None = None
    snapshots: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.t)

    def record(self, i: int) -> RunRecord:
        def opt(col):
            if col is None or np.isnan(col[i]):
                return None
            return float(col[i])

        return RunRecord(
            t=int(self.t[i]),
            arm=int(self.arm[i]),
            x=tuple(float(v) for v in self.x[i]),
            y=float(self.y[i]),
            z_hat_total=float(self.z_hat_total[i]),
            instant_regret=opt(self.instant_regret),
            cum_regret=opt(self.cum_regret),
            partition_count=int(self.partition_count[i]),
            alpha_regret=opt(self.alpha_regret),
        )

    def __iter__(self) -> Iterator[RunRecord]:
        return (self.record(i) for i in range(len(self)))

    def at(self, t: int) -> RunRecord:
        return self.record(int(np.searchsorted(self.t, t)))
