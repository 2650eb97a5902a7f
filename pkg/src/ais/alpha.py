"""Alpha-divergence generalization of the proposal update and regret.

With ``Y = (f / g)**alpha`` the arm means estimate ``Z**alpha * P_a`` where
``P_a = int_a pi**alpha g_a**(1 - alpha)``.  The alpha-optimal cell
probabilities are ``P_a**(1/alpha)`` normalized, and the proposal update
takes the ``1/alpha`` power of the boosted estimates.  ``alpha = 1`` is the
KL case; every function here refuses it or reduces to it exactly.

Note that the appendix reuses the symbol ``Z_a`` for ``Z * P_a``; the masses
stored in :class:`ais.oracle.OracleTable` are the normalized ``P_a``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, DegenerateProposalError, PreconditionError

__all__ = [
    "AlphaSpec",
    "alpha_weight",
    "alpha_proposal",
    "alpha_regret",
    "alpha_loss",
    "optimal_alpha_proposal",
    "AlphaRegretTracker",
]


@dataclass(frozen=True)
class AlphaSpec:
    alpha: float = 1.0

    def __post_init__(self):
        check_alpha(self.alpha)

    @property
    def is_kl(self) -> bool:
        return self.alpha == 1.0


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not (0.0 < alpha <= 2.0):
        raise ConfigError(f"alpha must lie in (0, 2], got {alpha}", "alpha")
    return alpha


def alpha_weight(f_val: float, g_density: float, alpha: float) -> float:
    """Transformed localized weight ``(f / g)**alpha``."""
    check_alpha(alpha)
    if not g_density > 0.0:
        raise PreconditionError(f"g_density must be positive, got {g_density}")
    y = f_val / g_density
    return y if alpha == 1.0 else y**alpha


def alpha_proposal(numerators: Sequence[float], alpha: float) -> np.ndarray:
    """Normalize ``numerators**(1/alpha)``, where ``numerators = Z_hat + sigma``.

    Raises:
        DegenerateProposalError: every numerator is zero.
    """
    num = np.asarray(numerators, dtype=float)
    if alpha != 1.0:
        num = num ** (1.0 / alpha)
    total = num.sum()
    if not total > 0.0:
        raise DegenerateProposalError(
            "all proposal numerators are zero; configure a boost other than 'none'"
        )
    return num / total


def optimal_alpha_proposal(alpha_masses: Sequence[float], alpha: float) -> np.ndarray:
    """The alpha-optimal cell probabilities ``P**(1/alpha)`` normalized."""
    return alpha_proposal(alpha_masses, alpha)


def alpha_loss(q: Sequence[float], alpha_masses: Sequence[float], alpha: float) -> float:
    """Alpha divergence ``(sum_a q_a**(1-alpha) P_a - 1) / (alpha (alpha - 1))``.

    Divergence between ``pi`` and the cell mixture with weights ``q``; the
    masses must come from the same partition.  At ``alpha = 2`` this is half
    the variance of the importance weights ``pi / q``.
    """
    alpha = check_alpha(alpha)
    if alpha == 1.0:
        raise PreconditionError("alpha = 1 is the KL case; use metrics.full_kl")
    q = np.asarray(q, dtype=float)
    P = np.asarray(alpha_masses, dtype=float)
    pos = P > 0.0
    if alpha > 1.0 and np.any(q[pos] <= 0.0):
        return math.inf
    return (float(np.sum(q[pos] ** (1.0 - alpha) * P[pos])) - 1.0) / (alpha * (alpha - 1.0))


def alpha_regret(q: Sequence[float], alpha_masses: Sequence[float], alpha: float) -> float:
    """Excess alpha loss of ``q`` over the best cell weights.

    ``(sum_a q_a**(1-alpha) P_a - (sum_a P_a**(1/alpha))**alpha) / (alpha (alpha - 1))``.
    Returns ``inf`` when ``alpha > 1`` and some ``q_a = 0`` carries mass.
    """
    alpha = check_alpha(alpha)
    if alpha == 1.0:
        raise PreconditionError("alpha = 1 is the KL case; use metrics.kl_regret")
    return AlphaRegretTracker(alpha_masses, alpha)(np.asarray(q, dtype=float))


class AlphaRegretTracker:
    """Precomputed alpha regret for repeated evaluation along a run."""

    def __init__(self, alpha_masses: Sequence[float], alpha: float):
        P = np.asarray(alpha_masses, dtype=float)
        if np.any(P < 0.0):
            raise PreconditionError("alpha masses must be nonnegative")
        self.alpha = alpha
        self.pos = P > 0.0
        self.P = P[self.pos]
        self.best = math.fsum(self.P ** (1.0 / alpha)) ** alpha
        self.denom = alpha * (alpha - 1.0)

    def __call__(self, q: np.ndarray) -> float:
        qp = q[self.pos]
        if self.alpha > 1.0 and np.any(qp <= 0.0):
            return math.inf
        return (float(np.dot(qp ** (1.0 - self.alpha), self.P)) - self.best) / self.denom
