"""Fixed partitions: rectangular cells, uniform subproposals and arm statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import ConfigError, PreconditionError, SamplingError
from .targets import Rectangle, TargetDensity

__all__ = [
    "Arm",
    "ArmState",
    "WeightedSample",
    "UniformStream",
    "make_equal_partition",
    "resolve_tau",
    "record_pull",
    "neumaier_add",
]


class UniformStream:
    """Buffered U(0, 1) variates from a counter-based Philox generator.

    One stream per replicate; the same seed always yields the same sequence.
    """

    def __init__(self, seed: int, block: int = 8192):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.Philox(self.seed))
        self._block = block
        self._buf: list[float] = []
        self._pos = 0

    def next(self) -> float:
        if self._pos == len(self._buf):
            self._buf = self._gen.random(self._block).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u

    def take(self, n: int) -> list[float]:
        return [self.next() for _ in range(n)]


def neumaier_add(s: float, c: float, v: float) -> tuple[float, float]:
    """One step of Neumaier compensated summation; the total is ``s + c``."""
    t = s + v
    if abs(s) >= abs(v):
        c += (s - t) + v
    else:
        c += (v - t) + s
    return t, c


@dataclass(frozen=True)
class Arm:
    """A cell with its uniform subproposal and variance factor ``tau``."""

    cell: Rectangle
    tau: float

    def __post_init__(self):
        if not (math.isfinite(self.tau) and self.tau > 0.0):
            raise ConfigError(f"tau must be positive and finite, got {self.tau}")

    @property
    def g_density(self) -> float:
        return 1.0 / self.cell.volume


@dataclass(frozen=True)
class ArmState:
    """Running sums of localized weights for one arm.

    ``sum_y`` and ``sum_y2`` are compensated totals; the raw accumulators and
    their correction terms are kept so further pulls stay accurate.
    """

    n: int = 0
    s_y: float = 0.0
    c_y: float = 0.0
    s_y2: float = 0.0
    c_y2: float = 0.0

    @property
    def sum_y(self) -> float:
        return self.s_y + self.c_y

    @property
    def sum_y2(self) -> float:
        return self.s_y2 + self.c_y2

    @property
    def z_hat(self) -> float:
        if self.n == 0:
            raise PreconditionError("z_hat is undefined before the arm's first pull")
        return self.sum_y / self.n

    @classmethod
    def from_weights(cls, ys: Sequence[float]) -> "ArmState":
        state = cls()
        for y in ys:
            state = record_pull(state, y)
        return state


def record_pull(state: ArmState, y: float, arm: int | None = None, t: int | None = None) -> ArmState:
    """Return ``state`` updated with one more localized weight ``y``.

    Raises:
        SamplingError: ``y`` is negative or not finite.
    """
    if not (math.isfinite(y) and y >= 0.0):
        raise SamplingError(f"invalid localized weight {y!r} for arm {arm} at iteration {t}")
    s_y, c_y = neumaier_add(state.s_y, state.c_y, y)
    s_y2, c_y2 = neumaier_add(state.s_y2, state.c_y2, y * y)
    return ArmState(state.n + 1, s_y, c_y, s_y2, c_y2)


@dataclass(frozen=True)
class WeightedSample:
    """One draw: point, stored target value and localized weight."""

    x: tuple[float, ...]
    f_val: float
    y: float
    arm: int
    t: int


def _equal_cells(domain: Rectangle, k: int) -> list[Rectangle]:
    lo, hi = domain.lo[0], domain.hi[0]
    edges = [lo + (hi - lo) * i / k for i in range(k)] + [hi]
    cells = []
    for a, b in zip(edges, edges[1:]):
        cells.append(Rectangle((a, *domain.lo[1:]), (b, *domain.hi[1:])))
    return cells


def resolve_tau(tau_spec: Any, cells: Sequence[Rectangle], target: TargetDensity | None = None) -> list[float]:
    """Turn a tau specification into one variance factor per cell.

    Accepted forms: a positive number (shared), a list with one entry per
    cell, ``"auto"`` for ``(M / 2) * vol`` with the global supremum ``M``,
    ``"auto-local"`` for the same rule with the supremum on each cell, or a
    mapping ``{"rule": "auto" | "auto-local", "scale": s}`` that multiplies
    the rule by ``s``.
    """
    scale = 1.0
    rule = tau_spec
    if isinstance(tau_spec, Mapping):
        rule = tau_spec.get("rule")
        scale = float(tau_spec.get("scale", 1.0))
        if not scale > 0.0:
            raise ConfigError(f"tau scale must be positive, got {scale}", "tau.scale")
    if isinstance(rule, str):
        if rule == "auto":
            if target is None or target.sup_bound is None:
                raise ConfigError("automatic tau needs a target with a known supremum", "tau")
            return [scale * 0.5 * target.sup_bound * c.volume for c in cells]
        if rule == "auto-local":
            if target is None or target.local_sup is None:
                raise ConfigError("local automatic tau needs a target with a local supremum", "tau")
            return [scale * 0.5 * target.local_sup(c) * c.volume for c in cells]
        raise ConfigError(f"unknown tau rule {rule!r}", "tau")
    if isinstance(rule, (int, float)) and not isinstance(rule, bool):
        return [scale * float(rule)] * len(cells)
    if isinstance(rule, Sequence):
        if len(rule) != len(cells):
            raise ConfigError(f"need {len(cells)} tau values, got {len(rule)}", "tau")
        return [scale * float(v) for v in rule]
    raise ConfigError(f"cannot interpret tau specification {tau_spec!r}", "tau")


def make_equal_partition(
    domain: Rectangle, k: int, tau_spec: Any = "auto", target: TargetDensity | None = None
) -> list[Arm]:
    """Split ``domain`` into ``k`` congruent cells along dimension 0.

    Raises:
        ConfigError: ``k < 1`` or the tau specification cannot be resolved.
    """
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ConfigError(f"k must be a positive integer, got {k!r}", "K")
    cells = _equal_cells(domain, int(k))
    taus = resolve_tau(tau_spec, cells, target)
    for i, tau in enumerate(taus):
        if not (math.isfinite(tau) and tau > 0.0):
            raise ConfigError(f"tau for cell {i} must be positive, got {tau}", "tau")
    return [Arm(c, tau) for c, tau in zip(cells, taus)]
