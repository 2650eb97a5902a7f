"""Hierarchical variant: the partition is a binary tree of rectangles that
grows online.

Each iteration walks from the root to a leaf, choosing a child with
probability proportional to its aggregated mass, draws uniformly in the
leaf, and updates that leaf's statistics.  A leaf with at least ``n_min``
samples whose effective sample size falls below ``ess_ratio * n`` is halved
along dimension ``depth % dim``; its archived samples are pushed down and
reweighted with the child volumes, so no target evaluations are repeated.

Leaf proposal numerators follow the fixed-partition rule
``Z_hat + sigma(t, n)``.  A child that received no samples at its split uses
half of the parent's numerator (parent ``Z_hat`` and boost at the parent's
count) until it is first drawn.

Every numerator has the form ``z + b * h(t)`` where only ``h`` depends on
``t``, so each node stores the sums of ``z`` and ``b`` over its leaves.  A
node's mass at the current ``t`` is then exact for all leaves at once, yet a
draw only touches the nodes on its path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterator, Sequence

import numpy as np

from .daisee import BoostSpec, check_f, draw_in_cell
from .errors import ConfigError, PreconditionError, StructuralError
from .metrics import Trajectory
from .oracle import cell_kl_term, integrate_cell
from .partition import ArmState, UniformStream, WeightedSample, neumaier_add
from .targets import Rectangle, TargetDensity

__all__ = [
    "SplitPolicy",
    "TreeNode",
    "ProposalTree",
    "ess",
    "traverse_sample",
    "split_leaf",
    "hidaisee_run",
    "snapshot_times",
]


@dataclass(frozen=True)
class SplitPolicy:
    n_min: int = 10
    ess_ratio: float = 0.5

    def __post_init__(self):
        if not (isinstance(self.n_min, (int, np.integer)) and self.n_min >= 1):
            raise ConfigError(f"n_min must be a positive integer, got {self.n_min!r}", "split.n_min")
        if not (0.0 < self.ess_ratio < 1.0):
            raise ConfigError(f"ess_ratio must lie in (0, 1), got {self.ess_ratio}", "split.ess_ratio")

    def should_split(self, n: int, ess_value: float) -> bool:
        return n >= self.n_min and ess_value < self.ess_ratio * n


def ess(state: ArmState) -> float:
    """``(sum y)**2 / sum y**2``; ``n`` when every weight is zero."""
    if state.n < 1:
        raise PreconditionError("ESS needs at least one sample")
    return _ess(state.n, state.sum_y, state.sum_y2)


def _ess(n: int, sy: float, sy2: float) -> float:
    if sy2 <= 0.0:
        return float(n)
    return sy * sy / sy2


@dataclass(eq=False)
class TreeNode:
    """Tree node.  Leaves own a slot in the leaf arrays and a sample archive.

    ``zsum`` and ``bsum`` aggregate the numerator terms of the leaves below.
    """

    id: int
    cell: Rectangle
    depth: int
    parent: int | None = None
    left: int | None = None
    right: int | None = None
    split_dim: int | None = None
    slot: int = -1
    tau: float = 1.0
    zsum: float = 0.0
    bsum: float = 0.0
    xs: list = field(default_factory=list)
    fs: list = field(default_factory=list)

    @property
    def is_leaf(self) -> bool:
        return self.left is None


class _Column:
    """Growable float or int array indexed by leaf slot."""

    def __init__(self, dtype=float):
        self.a = np.zeros(16, dtype=dtype)
        self.size = 0

    def append(self, v) -> None:
        if self.size == len(self.a):
            self.a = np.concatenate([self.a, np.zeros_like(self.a)])
        self.a[self.size] = v
        self.size += 1

    @property
    def view(self) -> np.ndarray:
        return self.a[: self.size]


class ProposalTree:
    """HiDaisee sampler state (a tree of rectangles with leaf statistics).

    Args:
        target: Unnormalized density on its domain (the root cell).
        policy: Split rule.
        boost: Exploration boost for leaf numerators.
        tau: Root variance factor, or ``"auto"`` / ``"auto-local"`` for
            ``(M / 2) * vol`` with the global or local supremum.
        tau_rule: How a child's tau follows from its parent's with an
            explicit tau: ``"halve"`` or ``"constant"``.  The automatic rules
            recompute tau from the child cell, which halves it under
            ``"auto"``.
        seed: Seed of the random stream.
        lazy: Freeze each leaf numerator at the time it was last drawn
            instead of refreshing every boost at the current ``t``.
        oracle: Cache each leaf's exact mass and ``int f log(f vol)`` term so
            the full KL divergence can be tracked.
        verify: Check push-down exactness at every split.
    """

    def __init__(
        self,
        target: TargetDensity,
        policy: SplitPolicy | None = None,
        boost: BoostSpec | None = None,
        tau: Any = "auto",
        tau_rule: str | None = None,
        seed: int = 0,
        lazy: bool = False,
        oracle: bool = False,
        verify: bool = False,
        oracle_tol: float | None = None,
    ):
        self.target = target
        self.policy = policy or SplitPolicy()
        self.boost = boost or BoostSpec()
        if self.boost.form == "none":
            raise ConfigError("the tree sampler needs a nonzero boost", "boost.form")
        self.stream = UniformStream(seed)
        self.seed = seed
        self.lazy = lazy
        self.verify = verify
        self.dim = target.dim
        root_cell = target.domain
        if isinstance(tau, str):
            if tau not in ("auto", "auto-local"):
                raise ConfigError(f"unknown tau rule {tau!r}", "tau")
            if tau_rule not in (None, tau):
                raise ConfigError("automatic tau fixes the child rule; omit tau_rule", "tau_rule")
            self.tau_rule = tau
            root_tau = self._auto_tau(root_cell)
        else:
            root_tau = float(tau)
            if not (root_tau > 0.0 and math.isfinite(root_tau)):
                raise ConfigError(f"tau must be positive, got {tau}", "tau")
            if tau_rule not in ("halve", "constant"):
                raise ConfigError("an explicit tau needs tau_rule 'halve' or 'constant'", "tau_rule")
            self.tau_rule = tau_rule
        self.t = 0
        self.nodes: list[TreeNode] = []
        self.leaf_ids: list[int] = []
        self.n = _Column(np.int64)
        self.s_y = _Column()
        self.c_y = _Column()
        self.s_y2 = _Column()
        self.c_y2 = _Column()
        self.lz = _Column()
        self.lb = _Column()
        self.oracle = oracle
        self._tol = oracle_tol
        self.leaf_z = _Column()
        self.leaf_e = _Column()
        if oracle:
            self.z_total = integrate_cell(target, root_cell, oracle_tol)
        root = TreeNode(0, root_cell, 0, tau=root_tau)
        self.nodes.append(root)
        # The root is alone, so any positive numerator gives it mass one.
        self._new_leaf(root, ArmState(), 1.0, 0.0)
        self.splits: list[int] = []
        self.path: list[int] = []
        self.visited = 0
        self.max_visited = 0
        self._z_s = 0.0
        self._z_c = 0.0

    # -- tau ---------------------------------------------------------------

    def _auto_tau(self, cell: Rectangle) -> float:
        if self.tau_rule == "auto":
            if self.target.sup_bound is None:
                raise ConfigError("automatic tau needs a target with a known supremum", "tau")
            return 0.5 * self.target.sup_bound * cell.volume
        if self.target.local_sup is None:
            raise ConfigError("local automatic tau needs a target with a local supremum", "tau")
        return max(0.5 * self.target.local_sup(cell) * cell.volume, 1e-300)

    def _child_tau(self, parent: TreeNode, cell: Rectangle) -> float:
        if self.tau_rule in ("auto", "auto-local"):
            return self._auto_tau(cell)
        return parent.tau / 2.0 if self.tau_rule == "halve" else parent.tau

    # -- structure ---------------------------------------------------------

    def _new_leaf(self, node: TreeNode, state: ArmState, z: float, b: float, slot: int | None = None) -> None:
        if self.lazy:
            z, b = z + b * self._h(), 0.0
        node.zsum, node.bsum = z, b
        values = (state.n, state.s_y, state.c_y, state.s_y2, state.c_y2, z, b)
        cols = (self.n, self.s_y, self.c_y, self.s_y2, self.c_y2, self.lz, self.lb)
        extra = ()
        if self.oracle:
            extra = (integrate_cell(self.target, node.cell, self._tol), cell_kl_term(self.target, node.cell, self._tol))
        if slot is None:
            node.slot = len(self.leaf_ids)
            self.leaf_ids.append(node.id)
            for col, v in zip(cols, values):
                col.append(v)
            if extra:
                self.leaf_z.append(extra[0])
                self.leaf_e.append(extra[1])
        else:
            node.slot = slot
            self.leaf_ids[slot] = node.id
            for col, v in zip(cols, values):
                col.a[slot] = v
            if extra:
                self.leaf_z.a[slot] = extra[0]
                self.leaf_e.a[slot] = extra[1]

    @property
    def root(self) -> TreeNode:
        return self.nodes[0]

    @property
    def num_leaves(self) -> int:
        return len(self.leaf_ids)

    @property
    def leaves(self) -> list[TreeNode]:
        return [self.nodes[i] for i in self.leaf_ids]

    @property
    def partition(self) -> list[Rectangle]:
        return [self.nodes[i].cell for i in self.leaf_ids]

    @property
    def depth(self) -> int:
        return max(self.nodes[i].depth for i in self.leaf_ids)

    def leaf_state(self, slot: int) -> ArmState:
        return ArmState(int(self.n.a[slot]), float(self.s_y.a[slot]), float(self.c_y.a[slot]),
                        float(self.s_y2.a[slot]), float(self.c_y2.a[slot]))

    def leaf_ess(self, slot: int) -> float:
        n = int(self.n.a[slot])
        if n == 0:
            return 0.0
        return _ess(n, self.s_y.a[slot] + self.c_y.a[slot], self.s_y2.a[slot] + self.c_y2.a[slot])

    # -- masses ------------------------------------------------------------

    def _h(self) -> float:
        return self.boost.time_factor(math.log(self.t) if self.t > 1 else 0.0)

    def _mass(self, node: TreeNode, h: float) -> float:
        return node.zsum + node.bsum * h

    @property
    def leaf_q(self) -> np.ndarray:
        """Leaf proposal probabilities, in slot order (matches ``partition``)."""
        num = self.lz.view + self.lb.view * self._h()
        return num / self._mass(self.root, self._h())

    def node_mass(self, node: TreeNode) -> float:
        """Normalized proposal mass of ``node``."""
        h = self._h()
        return self._mass(node, h) / self._mass(self.root, h)

    def _resum(self, node_id: int | None) -> None:
        nodes = self.nodes
        while node_id is not None:
            node = nodes[node_id]
            left, right = nodes[node.left], nodes[node.right]
            node.zsum = left.zsum + right.zsum
            node.bsum = left.bsum + right.bsum
            node_id = node.parent

    # -- sampling ----------------------------------------------------------

    def traverse(self) -> TreeNode:
        """Walk from the root to a leaf, one uniform per internal node."""
        h = self._h()
        nodes = self.nodes
        node = nodes[0]
        path = []
        nxt = self.stream.next
        while node.left is not None:
            path.append(node.id)
            left, right = nodes[node.left], nodes[node.right]
            ml = left.zsum + left.bsum * h
            mr = right.zsum + right.bsum * h
            if not ml + mr > 0.0:
                raise StructuralError(f"node {node.id} has children with zero total mass")
            node = left if nxt() < ml / (ml + mr) else right
        self.path = path
        self.visited = len(path) + 1
        if self.visited > self.max_visited:
            self.max_visited = self.visited
        return node

    def step(self) -> WeightedSample:
        h = self._h()
        leaf = self.traverse()
        slot = leaf.slot
        q_leaf = (leaf.zsum + leaf.bsum * h) / (self.root.zsum + self.root.bsum * h)
        x = draw_in_cell(leaf.cell, self.stream)
        f = self.target.point(x)
        check_f(f, x, self.target.sup_bound)
        y = f * leaf.cell.volume
        leaf.xs.append(x)
        leaf.fs.append(f)
        n = int(self.n.a[slot]) + 1
        self.n.a[slot] = n
        s, c = neumaier_add(float(self.s_y.a[slot]), float(self.c_y.a[slot]), y)
        self.s_y.a[slot], self.c_y.a[slot] = s, c
        s2, c2 = neumaier_add(float(self.s_y2.a[slot]), float(self.c_y2.a[slot]), y * y)
        self.s_y2.a[slot], self.c_y2.a[slot] = s2, c2
        self._z_s, self._z_c = neumaier_add(self._z_s, self._z_c, y / q_leaf)
        self.t += 1
        z = (s + c) / n
        b = float(self.boost.coefficient(leaf.tau)) * float(self.boost.count_factor(n))
        if self.lazy:
            z, b = z + b * self._h(), 0.0
        leaf.zsum, leaf.bsum = z, b
        self.lz.a[slot], self.lb.a[slot] = z, b
        self._resum(leaf.parent)
        if self.policy.should_split(n, _ess(n, s + c, s2 + c2)):
            self.split(leaf)
        return WeightedSample(x, f, y, leaf.id, self.t)

    # -- splitting ---------------------------------------------------------

    def split(self, leaf: TreeNode) -> tuple[TreeNode, TreeNode]:
        """Halve ``leaf`` and push its samples down to the two children."""
        if not leaf.is_leaf:
            raise StructuralError(f"node {leaf.id} is not a leaf")
        slot = leaf.slot
        parent_state = self.leaf_state(slot)
        # Parent numerator terms at its own count, before any freezing.
        pz = parent_state.z_hat if parent_state.n else 0.0
        pb = (float(self.boost.coefficient(leaf.tau)) * float(self.boost.count_factor(parent_state.n))
              if parent_state.n else 0.0)
        axis = leaf.depth % self.dim
        cells = leaf.cell.halves(axis)
        mid = cells[0].hi[axis]
        nid = len(self.nodes)
        kids = [TreeNode(nid + i, cells[i], leaf.depth + 1, parent=leaf.id, tau=self._child_tau(leaf, cells[i]))
                for i in range(2)]
        for x, f in zip(leaf.xs, leaf.fs):
            kid = kids[0] if x[axis] < mid else kids[1]
            kid.xs.append(x)
            kid.fs.append(f)
        leaf.xs, leaf.fs = [], []
        leaf.left, leaf.right, leaf.split_dim, leaf.slot = nid, nid + 1, axis, -1
        self.nodes.extend(kids)
        for i, kid in enumerate(kids):
            vol = kid.cell.volume
            state = ArmState.from_weights([f * vol for f in kid.fs])
            if state.n:
                z = state.z_hat
                b = float(self.boost.coefficient(kid.tau)) * float(self.boost.count_factor(state.n))
            else:
                z, b = 0.5 * pz, 0.5 * pb
            self._new_leaf(kid, state, z, b, slot if i == 0 else None)
        self._resum(leaf.id)
        self.splits.append(self.t)
        if self.verify:
            self._check_push_down(leaf, kids, parent_state.n)
        return kids[0], kids[1]

    def _check_push_down(self, parent: TreeNode, kids: Sequence[TreeNode], parent_n: int) -> None:
        if sum(len(k.fs) for k in kids) != parent_n:
            raise StructuralError(f"split of node {parent.id} lost samples")
        for k in kids:
            for x in k.xs:
                if not k.cell.contains(x):
                    raise StructuralError(f"sample {x} routed to node {k.id} lies outside {k.cell}")
            vol = k.cell.volume
            state = self.leaf_state(k.slot)
            ref = ArmState.from_weights([f * vol for f in k.fs])
            if state.n != ref.n or not math.isclose(state.sum_y, ref.sum_y, rel_tol=1e-12, abs_tol=1e-300):
                raise StructuralError(f"child {k.id} statistics do not match its pushed-down samples")

    # -- diagnostics -------------------------------------------------------

    @property
    def z_hat_total(self) -> float:
        return (self._z_s + self._z_c) / self.t if self.t else math.nan

    def full_kl(self) -> float:
        """``KL(pi || q)`` of the current leaf mixture (oracle mode only)."""
        if not self.oracle:
            raise PreconditionError("construct the tree with oracle=True to track KL")
        q = self.leaf_q
        pi = self.leaf_z.view / self.z_total
        pos = pi > 0.0
        if np.any(q[pos] <= 0.0):
            return math.inf
        return (math.fsum(self.leaf_e.view) / self.z_total - math.log(self.z_total)
                - float(np.dot(pi[pos], np.log(q[pos]))))

    def check_invariants(self, tol_root: float = 1e-10, tol_node: float = 1e-12) -> None:
        """Raise :class:`StructuralError` if any tree invariant fails.

        Checks mass conservation at the root and at every internal node,
        leaf bookkeeping, and that children are exact halves of their parent
        with leaf volumes summing to the domain volume.
        """
        q = self.leaf_q
        if abs(math.fsum(q) - 1.0) > tol_root:
            raise StructuralError(f"root mass {math.fsum(q)} != 1")
        if int(self.n.view.sum()) != self.t:
            raise StructuralError(f"leaf counts sum to {int(self.n.view.sum())}, t = {self.t}")
        for slot, lid in enumerate(self.leaf_ids):
            node = self.nodes[lid]
            if not node.is_leaf or node.slot != slot:
                raise StructuralError(f"leaf {lid} is not at slot {slot}")
            if len(node.fs) != self.n.a[slot]:
                raise StructuralError(f"leaf {lid} archive size differs from its count")
        stack = [(self.root, None)]
        order = []
        while stack:
            node, _ = stack.pop()
            order.append(node)
            if not node.is_leaf:
                left, right = self.nodes[node.left], self.nodes[node.right]
                lc, rc = node.cell.halves(node.split_dim)
                if left.cell != lc or right.cell != rc or left.parent != node.id or right.parent != node.id:
                    raise StructuralError(f"node {node.id} children are not its halves")
                stack.append((left, node))
                stack.append((right, node))
        leaf_mass: dict[int, float] = {}
        for node in reversed(order):
            if node.is_leaf:
                leaf_mass[node.id] = float(q[node.slot])
            else:
                total = leaf_mass[node.left] + leaf_mass[node.right]
                if abs(self.node_mass(node) - total) > tol_node:
                    raise StructuralError(f"node {node.id} mass differs from the sum of its leaves")
                leaf_mass[node.id] = total
        covered = math.fsum(c.volume for c in self.partition)
        if abs(covered - self.target.domain.volume) > 1e-12 * self.target.domain.volume:
            raise StructuralError("leaf cells do not cover the domain")

    def snapshot(self) -> dict:
        q = self.leaf_q
        leaves = []
        for slot, lid in enumerate(self.leaf_ids):
            cell = self.nodes[lid].cell
            leaves.append({
                "lo": list(cell.lo),
                "hi": list(cell.hi),
                "q": float(q[slot]),
                "n": int(self.n.a[slot]),
                "ess": self.leaf_ess(slot),
            })
        leaves.sort(key=lambda d: (d["lo"], d["hi"]))
        return {"t": self.t, "leaves": leaves}

    def iter_leaves(self) -> Iterator[tuple[TreeNode, float]]:
        q = self.leaf_q
        for slot, lid in enumerate(self.leaf_ids):
            yield self.nodes[lid], float(q[slot])


def traverse_sample(tree: ProposalTree, rng: UniformStream | None = None) -> int:
    """Pick a leaf id by walking the tree; ``tree.path`` holds the visited
    internal nodes."""
    if rng is not None:
        tree.stream = rng
    return tree.traverse().id


def split_leaf(tree: ProposalTree, leaf_id: int, target: TargetDensity | None = None) -> ProposalTree:
    """Split leaf ``leaf_id`` in place and return the tree."""
    if target is not None and target is not tree.target:
        raise PreconditionError("tree was built for a different target")
    tree.split(tree.nodes[leaf_id])
    return tree


def snapshot_times(T: int) -> list[int]:
    """``{1, 2, 5} * 10**k`` up to ``T``, plus ``T`` itself."""
    out = []
    k = 0
    while 10**k <= T:
        for m in (1, 2, 5):
            if m * 10**k <= T:
                out.append(m * 10**k)
        k += 1
    if not out or out[-1] != T:
        out.append(T)
    return out


def hidaisee_run(
    tree: ProposalTree,
    T: int,
    track_kl: bool = False,
    snapshots: bool = True,
    check_every: int = 0,
    keep_x: bool = True,
) -> Trajectory:
    """Run ``T`` iterations from the tree's current state.

    ``track_kl`` records, for each draw, the full KL divergence of the
    proposal it was drawn from (needs ``oracle=True``).  ``check_every > 0``
    runs the structural checks every that many iterations.
    """
    if T < 1:
        raise ConfigError(f"T must be positive, got {T}", "T")
    dim = tree.dim
    ts = np.empty(T, dtype=np.int64)
    arms = np.empty(T, dtype=np.int64)
    xs = np.empty((T, dim)) if keep_x else np.full((T, dim), np.nan)
    ys = np.empty(T)
    zt = np.empty(T)
    inst = np.full(T, np.nan)
    count = np.empty(T, dtype=np.int64)
    snap_at = set(snapshot_times(tree.t + T)) if snapshots else set()
    snaps = []
    for i in range(T):
        if track_kl:
            inst[i] = tree.full_kl()
        s = tree.step()
        ts[i] = s.t
        arms[i] = s.arm
        ys[i] = s.y
        if keep_x:
            xs[i] = s.x
        zt[i] = tree.z_hat_total
        count[i] = tree.num_leaves
        if check_every and s.t % check_every == 0:
            tree.check_invariants()
        if s.t in snap_at:
            snaps.append(tree.snapshot())
    cum = np.cumsum(inst) if track_kl else np.full(T, np.nan)
    return Trajectory(
        t=ts,
        arm=arms,
        x=xs,
        y=ys,
        z_hat_total=zt,
        instant_regret=inst,
        cum_regret=cum,
        partition_count=count,
        final_q=tree.leaf_q.copy(),
        snapshots=snaps,
    )
