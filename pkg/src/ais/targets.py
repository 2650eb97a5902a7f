"""Unnormalized target densities on rectangular domains.

Every target exposes a scalar evaluator (used by the samplers, one point per
draw) and a vectorized evaluator (used by the quadrature oracle).  Targets that
are piecewise constant in one dimension also carry their pieces so the oracle
can integrate them in closed form.
"""

from __future__ import annotations

import bisect
import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .errors import ConfigError

__all__ = [
    "Rectangle",
    "PiecewiseConstantSpec",
    "TargetDensity",
    "builtin_target",
    "piecewise_target",
    "target_from_json",
    "vary_ratio_literal",
    "BUILTIN_FAMILIES",
]


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned box ``[lo, hi)`` in ``len(lo)`` dimensions."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        if not lo or len(lo) != len(hi):
            raise ConfigError(f"lo and hi must be nonempty and equally long, got {lo} and {hi}")
        for d, (a, b) in enumerate(zip(lo, hi)):
            if not (math.isfinite(a) and math.isfinite(b) and a < b):
                raise ConfigError(f"need finite lo < hi in dimension {d}, got [{a}, {b}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def interval(cls, lo: float, hi: float) -> "Rectangle":
        return cls((lo,), (hi,))

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def widths(self) -> tuple[float, ...]:
        return tuple(b - a for a, b in zip(self.lo, self.hi))

    @property
    def volume(self) -> float:
        return math.prod(self.widths)

    def halves(self, axis: int) -> tuple["Rectangle", "Rectangle"]:
        """Split into two equal-volume halves along ``axis``."""
        mid = 0.5 * (self.lo[axis] + self.hi[axis])
        left_hi = list(self.hi)
        left_hi[axis] = mid
        right_lo = list(self.lo)
        right_lo[axis] = mid
        return Rectangle(self.lo, tuple(left_hi)), Rectangle(tuple(right_lo), self.hi)

    def contains(self, x: Sequence[float], closed: Sequence[bool] | None = None) -> bool:
        """Half-open membership; ``closed[d]`` makes the upper face of ``d`` inclusive."""
        for d, v in enumerate(x):
            if v < self.lo[d]:
                return False
            if v > self.hi[d] or (v == self.hi[d] and not (closed and closed[d])):
                return False
        return True

    def within(self, other: "Rectangle", rtol: float = 1e-12) -> bool:
        """True when this box lies inside ``other`` (up to rounding)."""
        for a, b, c, d in zip(self.lo, self.hi, other.lo, other.hi):
            slack = rtol * max(1.0, abs(c), abs(d))
            if a < c - slack or b > d + slack:
                return False
        return True

    def overlap_volume(self, other: "Rectangle") -> float:
        v = 1.0
        for a, b, c, d in zip(self.lo, self.hi, other.lo, other.hi):
            w = min(b, d) - max(a, c)
            if w <= 0.0:
                return 0.0
            v *= w
        return v

    def to_json(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi)}

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "Rectangle":
        try:
            return cls(tuple(obj["lo"]), tuple(obj["hi"]))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"rectangle needs 'lo' and 'hi' lists: {exc}") from None


@dataclass(frozen=True)
class PiecewiseConstantSpec:
    """Step function on an interval: ``levels[i]`` holds on ``[b[i-1], b[i])``."""

    breakpoints: tuple[float, ...]
    levels: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "breakpoints", tuple(float(b) for b in self.breakpoints))
        object.__setattr__(self, "levels", tuple(float(v) for v in self.levels))
        b, lv = self.breakpoints, self.levels
        if len(lv) != len(b) + 1:
            raise ConfigError(f"need len(levels) == len(breakpoints) + 1, got {len(lv)} and {len(b)}")
        if any(not (math.isfinite(v) and v >= 0.0) for v in lv):
            raise ConfigError(f"levels must be finite and nonnegative, got {lv}")
        if any(not (b0 < b1) for b0, b1 in zip(b, b[1:])):
            raise ConfigError(f"breakpoints must be strictly increasing, got {b}")

    def check_domain(self, domain: Rectangle) -> None:
        if domain.dim != 1:
            raise ConfigError("piecewise targets are one-dimensional")
        lo, hi = domain.lo[0], domain.hi[0]
        for v in self.breakpoints:
            if not (lo < v < hi):
                raise ConfigError(f"breakpoint {v} is not strictly inside ({lo}, {hi})")

    def level_at(self, x: float) -> float:
        return self.levels[bisect.bisect_right(self.breakpoints, x)]

    def levels_at(self, x: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(np.asarray(self.breakpoints), x, side="right")
        return np.asarray(self.levels)[idx]

    def edges(self, lo: float, hi: float) -> list[float]:
        return [lo, *self.breakpoints, hi]

    def integral(self, a: float, b: float, lo: float, hi: float, transform=None) -> float:
        """Exact integral over ``[a, b]`` given domain ``[lo, hi]``.

        ``transform(level, length)`` replaces the default ``level * length``.
        """
        e = self.edges(lo, hi)
        parts = []
        for i, level in enumerate(self.levels):
            w = min(b, e[i + 1]) - max(a, e[i])
            if w > 0.0:
                parts.append(transform(level, w) if transform else level * w)
        return math.fsum(parts)

    def sup_on(self, a: float, b: float, lo: float, hi: float) -> float:
        e = self.edges(lo, hi)
        return max(
            (lv for i, lv in enumerate(self.levels) if min(b, e[i + 1]) > max(a, e[i])),
            default=0.0,
        )


@dataclass(frozen=True, eq=False)
class TargetDensity:
    """Pointwise-evaluable unnormalized density ``f`` on ``domain``.

    Attributes:
        name: Family name, used in logs and output headers.
        domain: Support rectangle.
        point: Scalar evaluator taking a sequence of ``dim`` floats.
        batch: Vectorized evaluator, ``(n, dim) -> (n,)``.
        sup_bound: Known supremum ``M`` of ``f``, if any.
        breakpoints: Per-dimension locations of discontinuities; the oracle
            never integrates across them.
        pieces: Closed-form representation for 1D step targets.
        local_sup: Supremum of ``f`` on a sub-rectangle, when computable.
        spec: JSON description used for config round-trips and caching.
    """

    name: str
    domain: Rectangle
    point: Callable[[Sequence[float]], float]
    batch: Callable[[np.ndarray], np.ndarray] | None = None
    sup_bound: float | None = None
    breakpoints: tuple[tuple[float, ...], ...] = ()
    pieces: PiecewiseConstantSpec | None = None
    local_sup: Callable[[Rectangle], float] | None = None
    spec: Mapping[str, Any] = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.domain.dim

    def __call__(self, x: Sequence[float]) -> float:
        return self.point(x)

    def eval(self, x: Sequence[float] | float) -> float:
        if np.ndim(x) == 0:
            x = (float(x),)
        return self.point(x)

    def eval_many(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, self.dim)
        if self.batch is not None:
            return np.asarray(self.batch(X), dtype=float)
        return np.fromiter((self.point(row) for row in X), dtype=float, count=len(X))

    def breakpoints_in(self, axis: int, a: float, b: float) -> list[float]:
        if axis >= len(self.breakpoints):
            return []
        return [p for p in self.breakpoints[axis] if a < p < b]

    def powered(self, alpha: float) -> "TargetDensity":
        """The density ``f**alpha``, sharing breakpoints and pieces."""
        point, batch = self.point, self.eval_many
        pieces = None
        if self.pieces is not None:
            pieces = PiecewiseConstantSpec(self.pieces.breakpoints, [v**alpha for v in self.pieces.levels])
        return TargetDensity(
            name=f"{self.name}^{alpha:g}",
            domain=self.domain,
            point=lambda x: point(x) ** alpha,
            batch=lambda X: batch(X) ** alpha,
            sup_bound=None if self.sup_bound is None else self.sup_bound**alpha,
            breakpoints=self.breakpoints,
            pieces=pieces,
        )

    def to_json(self) -> dict:
        return dict(self.spec)


def piecewise_target(
    spec: PiecewiseConstantSpec, domain: Rectangle, name: str = "piecewise", json_spec=None
) -> TargetDensity:
    """Step target ``f(x) = levels[i]`` on the i-th piece of ``domain``."""
    spec.check_domain(domain)
    lo, hi = domain.lo[0], domain.hi[0]

    def point(x):
        return spec.level_at(x[0])

    def batch(X):
        return spec.levels_at(X[:, 0])

    def local_sup(cell: Rectangle) -> float:
        return spec.sup_on(cell.lo[0], cell.hi[0], lo, hi)

    if json_spec is None:
        json_spec = {
            "family": "piecewise",
            "breakpoints": list(spec.breakpoints),
            "levels": list(spec.levels),
            "domain": domain.to_json(),
        }
    return TargetDensity(
        name=name,
        domain=domain,
        point=point,
        batch=batch,
        sup_bound=max(spec.levels),
        breakpoints=(spec.breakpoints,),
        pieces=spec,
        local_sup=local_sup,
        spec=json_spec,
    )


def _unit() -> Rectangle:
    return Rectangle.interval(0.0, 1.0)


def _step_1d(K: int = 100, p: float = 0.01) -> TargetDensity:
    # Localized weight on cell a is 2a/(K+1) with probability p, else 0.
    K = _as_int(K, "K", minimum=1)
    if not (0.0 < p <= 1.0):
        raise ConfigError(f"p must be in (0, 1], got {p}", "params.p")
    w = 1.0 / K
    breaks, levels = [], []
    for a in range(1, K + 1):
        lo = (a - 1) / K
        levels.append(2.0 * a / ((K + 1) * p * w))
        if p < 1.0:
            breaks.append(lo + p * w)
            levels.append(0.0)
        if a < K:
            breaks.append(a / K)
    return piecewise_target(
        PiecewiseConstantSpec(breaks, levels), _unit(), "step-1d",
        {"family": "step-1d", "params": {"K": K, "p": p}},
    )


def _vary_tau(delta: float = 1.0) -> TargetDensity:
    delta = float(delta)
    if not (0.0 <= delta < 10.0):
        raise ConfigError(f"delta must lie in [0, 10) to keep levels nonnegative, got {delta}", "params.delta")
    if not (0.001 <= delta <= 8.0):
        warnings.warn(f"vary-tau delta={delta} is outside the studied range [0.001, 8]", stacklevel=3)
    spec = PiecewiseConstantSpec([0.05, 0.1], [10.0 + delta, 10.0 - delta, 0.1])
    return piecewise_target(spec, _unit(), "vary-tau", {"family": "vary-tau", "params": {"delta": delta}})


def _vary_k(K: int = 10) -> TargetDensity:
    K = _as_int(K, "K", minimum=1)
    spec = PiecewiseConstantSpec([0.2], [3.0 * K, float(K)])
    return piecewise_target(spec, _unit(), "vary-k", {"family": "vary-k", "params": {"K": K}})


def vary_ratio_literal(x: float, K: int, delta: float) -> float:
    """The Z-ratio family evaluated term by term, exactly as written.

    All four indicator terms apply over the whole interval; ``frac`` is the
    fractional part.
    """
    frac = (10.0 * x) % 1.0
    c = delta / (K - 1)
    value = 0.0
    if 0.0 < x <= 1.0 / K - delta:
        value += 10.0
    if 1.0 / K - delta < x <= 1.0 / K:
        value += 0.1
    value += 10.0 if frac < c else 0.1
    return value


def _vary_ratio(K: int = 10, delta: float = 0.0) -> TargetDensity:
    K = _as_int(K, "K", minimum=2)
    delta = float(delta)
    if not (0.0 <= delta <= 1.0 / K):
        raise ConfigError(f"delta must lie in [0, 1/K] = [0, {1.0 / K}], got {delta}", "params.delta")
    c = delta / (K - 1)
    cuts = {1.0 / K - delta, 1.0 / K}
    for j in range(10):
        cuts.add(j / 10.0)
        cuts.add((j + c) / 10.0)
    breaks = sorted(v for v in cuts if 0.0 < v < 1.0)
    # The sum of indicators is constant between consecutive cuts.
    edges = [0.0, *breaks, 1.0]
    levels = [vary_ratio_literal(0.5 * (a + b), K, delta) for a, b in zip(edges, edges[1:])]
    merged_b, merged_l = [], [levels[0]]
    for b, lv in zip(breaks, levels[1:]):
        if lv != merged_l[-1]:
            merged_b.append(b)
            merged_l.append(lv)
    return piecewise_target(
        PiecewiseConstantSpec(merged_b, merged_l), _unit(), "vary-ratio",
        {"family": "vary-ratio", "params": {"K": K, "delta": delta}},
    )


def _per_arm_tau() -> TargetDensity:
    spec = PiecewiseConstantSpec([0.25, 0.5, 0.99], [20.0, 3.0, 9.0, 1.0])
    return piecewise_target(spec, _unit(), "per-arm-tau", {"family": "per-arm-tau", "params": {}})


def _uniform(lo=(0.0,), hi=(1.0,), level: float = 1.0) -> TargetDensity:
    domain = Rectangle(tuple(np.atleast_1d(lo)), tuple(np.atleast_1d(hi)))
    level = float(level)
    if not (level >= 0.0 and math.isfinite(level)):
        raise ConfigError(f"level must be finite and nonnegative, got {level}", "params.level")
    spec = {"family": "uniform", "params": {"lo": list(domain.lo), "hi": list(domain.hi), "level": level}}
    if domain.dim == 1:
        t = piecewise_target(PiecewiseConstantSpec([], [level]), domain, "uniform", spec)
        return t
    return TargetDensity(
        name="uniform",
        domain=domain,
        point=lambda x: level,
        batch=lambda X: np.full(len(X), level),
        sup_bound=level,
        local_sup=lambda cell: level,
        spec=spec,
    )


_EXP_FLAT_BREAK = 0.25


def _exp_flat() -> TargetDensity:
    def point(x):
        v = x[0]
        return 0.5 if v <= _EXP_FLAT_BREAK else math.exp(10.0 * (v - 1.0))

    def batch(X):
        v = X[:, 0]
        return np.where(v <= _EXP_FLAT_BREAK, 0.5, np.exp(10.0 * (np.maximum(v, _EXP_FLAT_BREAK) - 1.0)))

    def local_sup(cell: Rectangle) -> float:
        a, b = cell.lo[0], cell.hi[0]
        flat = 0.5 if a <= _EXP_FLAT_BREAK else 0.0
        curved = math.exp(10.0 * (b - 1.0)) if b > _EXP_FLAT_BREAK else 0.0
        return max(flat, curved)

    return TargetDensity(
        name="exp-flat",
        domain=_unit(),
        point=point,
        batch=batch,
        sup_bound=1.0,
        breakpoints=((_EXP_FLAT_BREAK,),),
        local_sup=local_sup,
        spec={"family": "exp-flat", "params": {}},
    )


def _banana(lo=(-20.0, -10.0), hi=(20.0, 10.0)) -> TargetDensity:
    domain = Rectangle(tuple(lo), tuple(hi))
    if domain.dim != 2:
        raise ConfigError("banana is two-dimensional", "params.lo")

    def point(x):
        x1, x2 = x[0], x[1]
        r = x2 + 0.03 * (x1 * x1 - 100.0)
        return math.exp(-0.5 * (0.03 * x1 * x1 + r * r))

    def batch(X):
        x1, x2 = X[:, 0], X[:, 1]
        r = x2 + 0.03 * (x1 * x1 - 100.0)
        return np.exp(-0.5 * (0.03 * x1 * x1 + r * r))

    return TargetDensity(
        name="banana",
        domain=domain,
        point=point,
        batch=batch,
        sup_bound=1.0,
        spec={"family": "banana", "params": {"lo": list(domain.lo), "hi": list(domain.hi)}},
    )


BUILTIN_FAMILIES: dict[str, Callable[..., TargetDensity]] = {
    "step-1d": _step_1d,
    "vary-tau": _vary_tau,
    "vary-k": _vary_k,
    "vary-ratio": _vary_ratio,
    "per-arm-tau": _per_arm_tau,
    "exp-flat": _exp_flat,
    "banana": _banana,
    "uniform": _uniform,
}


def builtin_target(name: str, params: Mapping[str, Any] | None = None) -> TargetDensity:
    """Build a registered target family.

    Raises:
        ConfigError: unknown family or inadmissible parameters.
    """
    try:
        factory = BUILTIN_FAMILIES[name]
    except KeyError:
        raise ConfigError(f"unknown target family {name!r}; known: {sorted(BUILTIN_FAMILIES)}", "family") from None
    try:
        return factory(**dict(params or {}))
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {name!r}: {exc}", "params") from None


def target_from_json(obj: Mapping[str, Any]) -> TargetDensity:
    """Parse ``{"family": ..., "params": {...}}`` or an explicit piecewise spec."""
    if not isinstance(obj, Mapping) or "family" not in obj:
        raise ConfigError("target spec must be an object with a 'family' key")
    family = obj["family"]
    if family == "piecewise":
        for key in ("breakpoints", "levels"):
            if key not in obj:
                raise ConfigError(f"missing '{key}'", key)
        domain = Rectangle.from_json(obj.get("domain", {"lo": [0.0], "hi": [1.0]}))
        spec = PiecewiseConstantSpec(tuple(obj["breakpoints"]), tuple(obj["levels"]))
        return piecewise_target(spec, domain)
    return builtin_target(family, obj.get("params", {}))


def _as_int(value, name: str, minimum: int) -> int:
    if isinstance(value, float) and value.is_integer():
        value = int(value)
    if not isinstance(value, (int, np.integer)) or value < minimum:
        raise ConfigError(f"{name} must be an integer >= {minimum}, got {value!r}", f"params.{name}")
    return int(value)
