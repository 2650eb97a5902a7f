"""Optimism-boosted adaptive importance sampling over a fixed partition.

Each cell of the partition is an arm.  After one initial draw per arm, every
iteration picks an arm from the current cell probabilities ``q``, draws a
point uniformly in that cell and records the localized weight
``Y = f(x) * vol(cell)``.  The next proposal is

    q_a  proportional to  (Z_hat_a + sigma_a) ** (1 / alpha)

with ``Z_hat_a`` the mean weight of arm ``a`` and ``sigma_a`` an exploration
boost that shrinks with the arm's pull count and grows with ``log t``.
``alpha = 1`` is the KL setting; other values use transformed weights
``Y**alpha``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .alpha import AlphaRegretTracker, alpha_proposal, check_alpha
from .errors import ConfigError, PreconditionError, SamplingError
from .metrics import Trajectory
from .partition import Arm, ArmState, UniformStream, WeightedSample, neumaier_add
from .targets import Rectangle, TargetDensity

__all__ = [
    "C_BOOST",
    "BOOST_FORMS",
    "BoostSpec",
    "boost",
    "compute_proposal",
    "choose_arm",
    "CellSource",
    "SyntheticArms",
    "DaiseeState",
    "KLTracker",
    "step",
    "run",
    "draw_in_cell",
]

C_BOOST = math.sqrt(4.14 * math.log2(2.0 * math.e))

BOOST_FORMS = ("ucb_sqrt", "power", "log_over_n", "inverse_n", "none")


@dataclass(frozen=True)
class BoostSpec:
    """Exploration boost ``sigma(t, n)``.

    Forms, with ``L = log t`` (natural log):

    - ``ucb_sqrt``: ``scale * C_BOOST * tau * sqrt(L / n)``
    - ``power``: ``scale * (L / n) ** exponent``
    - ``log_over_n``: ``scale * L / n``
    - ``inverse_n``: ``scale / n``
    - ``none``: ``0``
    """

    form: str = "ucb_sqrt"
    exponent: float = 0.5
    scale: float = 1.0

    def __post_init__(self):
        if self.form not in BOOST_FORMS:
            raise ConfigError(f"unknown boost form {self.form!r}; known: {list(BOOST_FORMS)}", "boost.form")
        if not (0.0 < self.exponent <= 1.0):
            raise ConfigError(f"boost exponent must lie in (0, 1], got {self.exponent}", "boost.exponent")
        if not (self.scale > 0.0 and math.isfinite(self.scale)):
            raise ConfigError(f"boost scale must be positive, got {self.scale}", "boost.scale")

    def coefficient(self, tau) -> np.ndarray | float:
        if self.form == "none":
            return 0.0 * np.asarray(tau, dtype=float)
        if self.form == "ucb_sqrt":
            return self.scale * C_BOOST * np.asarray(tau, dtype=float)
        return self.scale + 0.0 * np.asarray(tau, dtype=float)

    def time_factor(self, log_t: float) -> float:
        if self.form == "ucb_sqrt":
            return math.sqrt(log_t)
        if self.form == "power":
            return log_t**self.exponent
        if self.form == "log_over_n":
            return log_t
        return 1.0

    def count_factor(self, n):
        if self.form == "ucb_sqrt":
            return 1.0 / np.sqrt(n)
        if self.form == "power":
            return np.asarray(n, dtype=float) ** -self.exponent
        return 1.0 / np.asarray(n, dtype=float)

    def to_json(self) -> dict:
        return {"form": self.form, "exponent": self.exponent, "scale": self.scale}


def boost(spec: BoostSpec, tau: float, t: int, n: int, log_t: float | None = None) -> float:
    """Boost value for an arm pulled ``n`` times at iteration ``t``.

    ``log_t`` overrides ``log(t)`` (a hook for exact checks).  ``t = 1`` is
    accepted and gives ``log t = 0``, which only arises for a single arm.

    Raises:
        PreconditionError: ``n < 1`` or ``t < 1``.
    """
    if n < 1:
        raise PreconditionError(f"boost needs n >= 1, got {n}; initialize every arm first")
    if t < 1:
        raise PreconditionError(f"boost needs t >= 1, got {t}")
    if spec.form == "none":
        return 0.0
    if log_t is None:
        log_t = math.log(t)
    return float(spec.coefficient(tau) * spec.time_factor(log_t) * spec.count_factor(n))


def compute_proposal(states: Sequence[ArmState] | Sequence[float], boosts: Sequence[float], alpha: float = 1.0) -> np.ndarray:
    """Cell probabilities from arm estimates and boosts.

    ``states`` may be arm states or their ``Z_hat`` values.

    Raises:
        PreconditionError: an arm has not been pulled.
        DegenerateProposalError: every numerator is zero.
    """
    if len(states) and isinstance(states[0], ArmState):
        if any(s.n < 1 for s in states):
            raise PreconditionError("every arm must be pulled once before forming a proposal")
        z = np.array([s.z_hat for s in states])
    else:
        z = np.asarray(states, dtype=float)
    b = np.asarray(boosts, dtype=float)
    if z.shape != b.shape:
        raise PreconditionError("need one boost per arm")
    return alpha_proposal(z + b, alpha)


def choose_arm(cum: np.ndarray, q: np.ndarray, u: float) -> int:
    """Inverse-CDF arm choice; ``u`` landing on a boundary goes to the lower arm.

    Arms with zero probability are never returned.
    """
    a = int(np.searchsorted(cum, u * cum[-1], side="left"))
    k = len(q)
    if a >= k:
        a = k - 1
    while q[a] <= 0.0:
        a += 1
        if a >= k:
            a = int(np.flatnonzero(q > 0.0)[-1])
            break
    return a


def draw_in_cell(cell: Rectangle, stream: UniformStream) -> tuple[float, ...]:
    """Uniform point in the half-open cell, one variate per dimension."""
    x = []
    for lo, hi in zip(cell.lo, cell.hi):
        v = lo + stream.next() * (hi - lo)
        if v >= hi:
            v = math.nextafter(hi, lo)
        x.append(v)
    return tuple(x)


class Source(Protocol):
    k: int
    cells: Sequence[Rectangle]

    def draw(self, a: int, stream: UniformStream) -> tuple[tuple[float, ...], float, float]:
        """Return ``(x, f(x), localized weight)`` for one draw from arm ``a``."""
        ...


class CellSource:
    """Draws uniformly within cells and evaluates a target density."""

    def __init__(self, target: TargetDensity, cells: Sequence[Rectangle], check_sup: bool = True):
        self.target = target
        self.cells = list(cells)
        self.k = len(self.cells)
        self.volumes = [c.volume for c in self.cells]
        self._sup = target.sup_bound if check_sup else None

    def draw(self, a, stream):
        x = draw_in_cell(self.cells[a], stream)
        f = self.target.point(x)
        check_f(f, x, self._sup)
        return x, f, f * self.volumes[a]


def check_f(f: float, x, sup: float | None) -> None:
    if not (math.isfinite(f) and f >= 0.0):
        raise SamplingError(f"target returned {f!r} at x={x}")
    if sup is not None and f > sup * (1.0 + 1e-12):
        raise SamplingError(f"target value {f!r} at x={x} exceeds the declared supremum {sup!r}")


class SyntheticArms:
    """Arm-reward law of the 100-arm benchmark, bypassing any density.

    Arm ``a`` (1-based) pays ``2a / (K + 1)`` with probability ``p`` and ``0``
    otherwise.  A draw still reports a point: ``x`` is uniform in the arm's
    slice of ``[0, 1)`` and the payout happens when ``x`` falls in the first
    fraction ``p`` of the slice, so the law matches the step-1d target.
    """

    def __init__(self, k: int = 100, p: float = 0.01):
        if k < 1 or not (0.0 < p <= 1.0):
            raise ConfigError(f"synthetic arms need K >= 1 and p in (0, 1], got K={k}, p={p}")
        self.k = int(k)
        self.p = float(p)
        self.cells = [Rectangle.interval(i / k, (i + 1) / k if i + 1 < k else 1.0) for i in range(k)]
        self.payout = [2.0 * (a + 1) / (k + 1) for a in range(k)]

    def draw(self, a, stream):
        u = stream.next()
        w = 1.0 / self.k
        x = (a * w + u * w,)
        y = self.payout[a] if u < self.p else 0.0
        return x, y * self.k, y

    @property
    def pi(self) -> np.ndarray:
        z = np.array(self.payout) * self.p
        return z / z.sum()


class KLTracker:
    """Fast ``KL(pi || q)`` over cell probabilities for repeated evaluation."""

    def __init__(self, pi: Sequence[float]):
        pi = np.asarray(pi, dtype=float)
        self.pos = pi > 0.0
        self.pi = pi[self.pos]
        self.h = float(np.dot(self.pi, np.log(self.pi)))

    def __call__(self, q: np.ndarray) -> float:
        qp = q[self.pos]
        if np.any(qp <= 0.0):
            return math.inf
        return self.h - float(np.dot(self.pi, np.log(qp)))


ON_DEGENERATE = ("error", "hold")


class DaiseeState:
    """Single-owner sampler state over a fixed set of arms.

    Args:
        arms: Cells with their variance factors.
        source: Draw generator for the arms (a target or synthetic arms).
        boost: Exploration boost.
        seed: Seed of the replicate's random stream.
        alpha: Weight transform exponent; ``1`` is the KL engine.
        on_degenerate: ``"error"`` raises when every numerator is zero;
            ``"hold"`` keeps the previous proposal instead (the initial
            proposal is uniform).
    """

    def __init__(
        self,
        arms: Sequence[Arm],
        source: Source,
        boost: BoostSpec | None = None,
        seed: int = 0,
        alpha: float = 1.0,
        on_degenerate: str = "error",
    ):
        if len(arms) != source.k:
            raise ConfigError(f"{len(arms)} arms but the source has {source.k}")
        if on_degenerate not in ON_DEGENERATE:
            raise ConfigError(f"on_degenerate must be one of {ON_DEGENERATE}", "on_degenerate")
        self.arms = list(arms)
        self.k = len(self.arms)
        self.source = source
        self.boost = boost or BoostSpec()
        self.alpha = check_alpha(alpha)
        self.on_degenerate = on_degenerate
        self.stream = UniformStream(seed)
        self.seed = seed
        k = self.k
        self.n = np.zeros(k, dtype=np.int64)
        self.s_y = np.zeros(k)
        self.c_y = np.zeros(k)
        self.s_y2 = np.zeros(k)
        self.c_y2 = np.zeros(k)
        self.z_hat = np.zeros(k)
        self._coef = np.asarray(self.boost.coefficient([a.tau for a in self.arms]), dtype=float)
        self._count = np.zeros(k)
        self.q = np.full(k, 1.0 / k)
        self.cum = np.cumsum(self.q)
        self.t = 0
        self._z_s = 0.0
        self._z_c = 0.0
        self.held = 0

    @property
    def states(self) -> list[ArmState]:
        return [
            ArmState(int(self.n[a]), float(self.s_y[a]), float(self.c_y[a]), float(self.s_y2[a]), float(self.c_y2[a]))
            for a in range(self.k)
        ]

    @property
    def z_hat_total(self) -> float:
        """Running IS estimate of ``Z``: mean of ``f(x_s) / q_s(x_s)``."""
        return (self._z_s + self._z_c) / self.t if self.t else math.nan

    @property
    def initialized(self) -> bool:
        return self.t >= self.k

    def boosts(self, t: int | None = None) -> np.ndarray:
        t = self.t if t is None else t
        if self.boost.form == "none":
            return np.zeros(self.k)
        return self._coef * self.boost.time_factor(math.log(t)) * self._count

    def proposal_from_states(self) -> np.ndarray:
        """Recompute the current proposal from scratch (for consistency checks)."""
        z = np.array([s.z_hat for s in self.states])
        b = np.array([boost(self.boost, arm.tau, self.t, int(n)) for arm, n in zip(self.arms, self.n)])
        return compute_proposal(z, b, self.alpha)

    def _pull(self, a: int) -> WeightedSample:
        x, f, y = self.source.draw(a, self.stream)
        t = self.t + 1
        yw = y if self.alpha == 1.0 else y**self.alpha
        if not (math.isfinite(yw) and yw >= 0.0):
            raise SamplingError(f"invalid localized weight {yw!r} for arm {a} at iteration {t} (x={x})")
        n = int(self.n[a]) + 1
        self.n[a] = n
        s, c = neumaier_add(float(self.s_y[a]), float(self.c_y[a]), yw)
        self.s_y[a], self.c_y[a] = s, c
        s2, c2 = neumaier_add(float(self.s_y2[a]), float(self.c_y2[a]), yw * yw)
        self.s_y2[a], self.c_y2[a] = s2, c2
        self.z_hat[a] = (s + c) / n
        if self.boost.form != "none":
            self._count[a] = self.boost.count_factor(n)
        self._z_s, self._z_c = neumaier_add(self._z_s, self._z_c, y / self.q[a])
        self.t = t
        return WeightedSample(x, f, y, a, t)

    def _update_proposal(self) -> None:
        num = self.z_hat + self.boosts() if self.boost.form != "none" else self.z_hat.copy()
        if self.alpha != 1.0:
            num = num ** (1.0 / self.alpha)
        total = num.sum()
        if not total > 0.0:
            if self.on_degenerate == "hold":
                self.held += 1
                return
            alpha_proposal(num, 1.0)
        self.q = num / total
        self.cum = np.cumsum(self.q)

    def initialize(self) -> list[WeightedSample]:
        """Draw once from every arm (arm order) and form the first proposal."""
        if self.t:
            raise PreconditionError("state already initialized")
        out = [self._pull(a) for a in range(self.k)]
        self._update_proposal()
        return out

    def step(self) -> WeightedSample:
        """One adaptive iteration; the proposal is refreshed at the new ``t``."""
        if not self.initialized:
            raise PreconditionError("call initialize() before step()")
        a = choose_arm(self.cum, self.q, self.stream.next())
        sample = self._pull(a)
        self._update_proposal()
        return sample


def step(state: DaiseeState, target: TargetDensity | None = None) -> tuple[DaiseeState, WeightedSample]:
    """Functional wrapper: advance ``state`` by one iteration."""
    if target is not None and isinstance(state.source, CellSource) and state.source.target is not target:
        raise PreconditionError("state was built for a different target")
    sample = state.step()
    return state, sample


def run(
    state: DaiseeState,
    T: int,
    pi: Sequence[float] | None = None,
    alpha_masses: Sequence[float] | None = None,
    keep_x: bool = True,
) -> Trajectory:
    """Run initialization plus ``T - K`` adaptive steps and trace every draw.

    ``pi`` (oracle cell probabilities) enables KL regret tracking, and
    ``alpha_masses`` enables alpha regret tracking.  The regret of iteration
    ``t`` is that of the proposal ``t`` was drawn from; accumulation starts at
    the first adaptive iteration ``t = K + 1``.
    """
    k = state.k
    if T < k:
        raise ConfigError(f"T={T} is smaller than the number of arms K={k}", "T")
    dim = len(state.source.cells[0].lo)
    ts = np.arange(1, T + 1, dtype=np.int64)
    arms = np.empty(T, dtype=np.int64)
    xs = np.empty((T, dim)) if keep_x else np.full((T, dim), np.nan)
    ys = np.empty(T)
    zt = np.empty(T)
    inst = np.full(T, np.nan)
    kl = KLTracker(pi) if pi is not None else None
    ar = None
    if alpha_masses is not None:
        if state.alpha == 1.0:
            raise ConfigError("alpha regret needs alpha != 1", "alpha")
        ar = AlphaRegretTracker(alpha_masses, state.alpha)
    ainst = np.full(T, np.nan) if ar is not None else None

    for i, s in enumerate(state.initialize()):
        arms[i] = s.arm
        ys[i] = s.y
        if keep_x:
            xs[i] = s.x
        zt[i] = (state._z_s + state._z_c) / (i + 1)
    for i in range(k, T):
        if kl is not None:
            inst[i] = kl(state.q)
        if ar is not None:
            ainst[i] = ar(state.q)
        s = state.step()
        arms[i] = s.arm
        ys[i] = s.y
        if keep_x:
            xs[i] = s.x
        zt[i] = (state._z_s + state._z_c) / s.t
    cum = np.full(T, np.nan)
    if kl is not None:
        cum[:k] = 0.0
        cum[k:] = np.cumsum(inst[k:])
    return Trajectory(
        t=ts,
        arm=arms,
        x=xs,
        y=ys,
        z_hat_total=zt,
        instant_regret=inst,
        cum_regret=cum,
        partition_count=np.full(T, k, dtype=np.int64),
        alpha_regret=ainst,
        final_q=state.q.copy(),
    )
