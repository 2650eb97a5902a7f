"""Partition-based adaptive importance sampling with explicit exploration.

Modules:
    targets: unnormalized densities on rectangles.
    oracle: deterministic quadrature for ground-truth cell masses.
    partition: fixed partitions, arm statistics and the random stream.
    daisee: the optimism-boosted fixed-partition sampler.
    alpha: alpha-divergence weights, proposals and regret.
    hidaisee: the tree sampler that refines its partition online.
    metrics: IS estimators, KL regret and run traces.
    config, experiment, recipes, cli: experiment harness.
"""

from .alpha import alpha_loss, alpha_proposal, alpha_regret, alpha_weight
from .daisee import C_BOOST, BoostSpec, CellSource, DaiseeState, SyntheticArms, boost, compute_proposal, run
from .errors import (
    AISError,
    ConfigError,
    DegenerateProposalError,
    EstimatorError,
    OracleError,
    PreconditionError,
    SamplingError,
    StructuralError,
)
from .hidaisee import ProposalTree, SplitPolicy, ess, hidaisee_run
from .metrics import full_kl, is_estimates, kl_regret, total_variation
from .oracle import OracleTable, integrate_cell, oracle_table
from .partition import Arm, ArmState, make_equal_partition, record_pull
from .targets import PiecewiseConstantSpec, Rectangle, TargetDensity, builtin_target, piecewise_target

__version__ = "0.1.0"
