"""Deterministic quadrature oracle: ground-truth cell masses for a target.

Step targets are integrated in closed form.  Everything else goes through a
globally adaptive Simpson rule with Richardson extrapolation: every pass halves
the intervals whose local error estimate is still too large, and integration
never straddles a declared discontinuity.  Two-dimensional cells use the same
rule on a tensor grid (an adaptive outer integral over inner adaptive
integrals).  No random numbers are involved, so the oracle is an independent
check on the samplers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import OracleError, PreconditionError
from .targets import Rectangle, TargetDensity

__all__ = [
    "OracleTable",
    "integrate_cell",
    "integrate_function",
    "cell_kl_term",
    "oracle_table",
    "default_tol",
    "check_partition",
]

MAX_DEPTH = 24
MIN_DEPTH = 4


def default_tol(dim: int) -> float:
    return 1e-10 if dim == 1 else 1e-8


def _adaptive_simpson(g: Callable[[np.ndarray], np.ndarray], a: float, b: float, tol: float, max_depth: int) -> float:
    """Relative-tolerance adaptive Simpson on ``[a, b]`` for vectorized ``g``."""
    if b <= a:
        return 0.0
    A = np.array([a])
    B = np.array([b])
    # One-sided limits at the ends: a jump may sit exactly on a or b.
    ends = g(np.array([np.nextafter(a, b), 0.5 * (a + b), np.nextafter(b, a)]))
    FA, FM, FB = ends[:1], ends[1:2], ends[2:]
    S = (B - A) / 6.0 * (FA + 4.0 * FM + FB)
    length = b - a
    done: list[float] = []
    done_abs = 0.0
    for level in range(max_depth + 1):
        M = 0.5 * (A + B)
        f_new = g(np.concatenate([0.5 * (A + M), 0.5 * (M + B)]))
        FLM, FRM = f_new[: len(A)], f_new[len(A):]
        SL = (M - A) / 6.0 * (FA + 4.0 * FLM + FM)
        SR = (B - M) / 6.0 * (FM + 4.0 * FRM + FB)
        S2 = SL + SR
        err = np.abs(S2 - S) / 15.0
        refined = S2 + (S2 - S) / 15.0
        scale = done_abs + float(np.sum(np.abs(refined)))
        ok = err <= tol * scale * (B - A) / length
        if level < MIN_DEPTH:
            ok[:] = False
        if ok.any():
            done.extend(refined[ok].tolist())
            done_abs += float(np.sum(np.abs(refined[ok])))
        keep = ~ok
        if not keep.any():
            return math.fsum(done)
        if level == max_depth:
            estimate = math.fsum(done) + float(np.sum(refined[keep]))
            raise OracleError(
                f"adaptive Simpson did not converge on [{a}, {b}] within {max_depth} levels",
                estimate, float(np.sum(err[keep])),
            )
        A, M, B = A[keep], M[keep], B[keep]
        FA, FLM, FM, FRM, FB = FA[keep], FLM[keep], FM[keep], FRM[keep], FB[keep]
        SL, SR = SL[keep], SR[keep]
        A, B = np.concatenate([A, M]), np.concatenate([M, B])
        FA, FM, FB = np.concatenate([FA, FM]), np.concatenate([FLM, FRM]), np.concatenate([FM, FB])
        S = np.concatenate([SL, SR])
    raise AssertionError("unreachable")


def _segments(lo: float, hi: float, cuts: Sequence[float]) -> list[tuple[float, float]]:
    pts = [lo, *sorted(c for c in cuts if lo < c < hi), hi]
    return list(zip(pts, pts[1:]))


def integrate_function(
    fn: Callable[[np.ndarray], np.ndarray],
    cell: Rectangle,
    breakpoints: Sequence[Sequence[float]] = (),
    tol: float | None = None,
    max_depth: int = MAX_DEPTH,
) -> float:
    """Integrate a vectorized ``fn: (n, dim) -> (n,)`` over ``cell``.

    ``breakpoints[d]`` lists coordinates along dimension ``d`` where ``fn`` may
    jump; the cell is cut there before integrating.
    """
    if tol is None:
        tol = default_tol(cell.dim)
    if not tol > 0:
        raise PreconditionError(f"tol must be positive, got {tol}")
    cuts = [list(breakpoints[d]) if d < len(breakpoints) else [] for d in range(cell.dim)]
    if cell.dim == 1:
        g = lambda x: fn(x[:, None])  # noqa: E731
        return math.fsum(
            _adaptive_simpson(g, a, b, tol, max_depth) for a, b in _segments(cell.lo[0], cell.hi[0], cuts[0])
        )
    if cell.dim == 2:
        inner_tol = 0.1 * tol
        inner_segs = _segments(cell.lo[1], cell.hi[1], cuts[1])

        def inner(x0: np.ndarray) -> np.ndarray:
            out = np.empty(len(x0))
            for i, u in enumerate(x0):
                g = lambda y, u=u: fn(np.column_stack([np.full(len(y), u), y]))  # noqa: E731
                out[i] = math.fsum(_adaptive_simpson(g, a, b, inner_tol, max_depth) for a, b in inner_segs)
            return out

        return math.fsum(
            _adaptive_simpson(inner, a, b, tol, max_depth) for a, b in _segments(cell.lo[0], cell.hi[0], cuts[0])
        )
    raise PreconditionError(f"the oracle supports 1D and 2D cells only, got dim={cell.dim}")


def integrate_cell(target: TargetDensity, cell: Rectangle, tol: float | None = None, max_depth: int = MAX_DEPTH) -> float:
    """Return the integral of ``target`` over ``cell``.

    Step targets are summed exactly; other targets use adaptive Simpson to a
    relative error of ``tol``.

    Raises:
        PreconditionError: ``cell`` is not inside the target domain or ``tol <= 0``.
        OracleError: refinement did not converge within ``max_depth`` levels.
    """
    if cell.dim != target.dim or not cell.within(target.domain):
        raise PreconditionError(f"cell {cell} is not inside the target domain {target.domain}")
    if tol is not None and not tol > 0:
        raise PreconditionError(f"tol must be positive, got {tol}")
    if target.pieces is not None:
        return target.pieces.integral(cell.lo[0], cell.hi[0], target.domain.lo[0], target.domain.hi[0])
    return integrate_function(target.eval_many, cell, target.breakpoints, tol, max_depth)


def cell_kl_term(target: TargetDensity, cell: Rectangle, tol: float | None = None) -> float:
    """Return ``int_cell f log(f * vol(cell)) dx``, with ``0 log 0 = 0``.

    This is the cell's share of the within-cell part of ``KL(pi || q)`` before
    normalization by ``Z``.
    """
    vol = cell.volume
    if target.pieces is not None:
        def term(level: float, width: float) -> float:
            return level * math.log(level * vol) * width if level > 0.0 else 0.0

        return target.pieces.integral(cell.lo[0], cell.hi[0], target.domain.lo[0], target.domain.hi[0], term)

    def fn(X: np.ndarray) -> np.ndarray:
        f = target.eval_many(X)
        out = np.zeros_like(f)
        pos = f > 0.0
        out[pos] = f[pos] * np.log(f[pos] * vol)
        return out

    return integrate_function(fn, cell, target.breakpoints, tol)


@dataclass(frozen=True)
class OracleTable:
    """Ground-truth cell masses for one target and partition.

    ``alpha_masses[a]`` is the integral of ``pi**alpha * g_a**(1 - alpha)``
    over cell ``a`` with ``g_a`` uniform on the cell; with these masses the
    alpha-optimal cell probabilities are proportional to
    ``alpha_masses ** (1 / alpha)``.
    """

    partition: tuple[Rectangle, ...]
    z_a: np.ndarray
    z: float
    pi_a: np.ndarray
    alpha: float | None = None
    alpha_masses: np.ndarray | None = None

    def to_json(self) -> dict:
        return {
            "Z": self.z,
            "Z_a": self.z_a.tolist(),
            "pi_a": self.pi_a.tolist(),
            "alpha": self.alpha,
            "alpha_masses": None if self.alpha_masses is None else self.alpha_masses.tolist(),
        }


def check_partition(domain: Rectangle, partition: Sequence[Rectangle], rtol: float = 1e-9) -> None:
    """Raise unless ``partition`` consists of disjoint cells covering ``domain``."""
    if not partition:
        raise PreconditionError("partition is empty")
    for i, cell in enumerate(partition):
        if cell.dim != domain.dim or not cell.within(domain):
            raise PreconditionError(f"cell {i} {cell} lies outside the domain {domain}")
    lo = np.array([c.lo for c in partition])
    hi = np.array([c.hi for c in partition])
    overlap = np.clip(np.minimum(hi[:, None, :], hi[None, :, :]) - np.maximum(lo[:, None, :], lo[None, :, :]), 0.0, None)
    vol = np.prod(overlap, axis=2)
    np.fill_diagonal(vol, 0.0)
    if np.any(vol > rtol * domain.volume):
        i, j = np.argwhere(vol > rtol * domain.volume)[0]
        raise PreconditionError(f"cells {i} and {j} overlap")
    covered = math.fsum(c.volume for c in partition)
    if abs(covered - domain.volume) > rtol * domain.volume:
        raise PreconditionError(f"cells cover volume {covered}, domain has {domain.volume}")


_CACHE: dict[tuple, OracleTable] = {}


def _cache_key(target, partition, alpha, tol):
    if not target.spec:
        return None
    cells = tuple((c.lo, c.hi) for c in partition)
    return (json.dumps(target.spec, sort_keys=True), cells, alpha, tol)


def oracle_table(
    target: TargetDensity,
    partition: Sequence[Rectangle],
    alpha: float | None = None,
    tol: float | None = None,
) -> OracleTable:
    """Integrate ``target`` over every cell of ``partition``.

    Tables for registered targets are cached by (target spec, cells, alpha,
    tol); the cache only avoids recomputation and never changes a value.

    Raises:
        PreconditionError: the cells overlap or do not cover the domain.
    """
    partition = tuple(partition)
    key = _cache_key(target, partition, alpha, tol)
    if key is not None and key in _CACHE:
        return _CACHE[key]
    check_partition(target.domain, partition)
    z_a = np.array([integrate_cell(target, cell, tol) for cell in partition])
    z = math.fsum(z_a)
    if not z > 0.0:
        raise PreconditionError("target integrates to zero over the partition")
    pi_a = z_a / z
    masses = None
    if alpha is not None and alpha != 1.0:
        powered = target.powered(alpha)
        raw = np.array([integrate_cell(powered, cell, tol) * cell.volume ** (alpha - 1.0) for cell in partition])
        masses = raw / z**alpha
    table = OracleTable(partition, z_a, z, pi_a, alpha, masses)
    if key is not None:
        _CACHE[key] = table
    return table
