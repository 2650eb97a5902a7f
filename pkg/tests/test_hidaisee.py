import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ais.daisee import BoostSpec, boost
from ais.errors import ConfigError, PreconditionError, StructuralError
from ais.hidaisee import (
    ProposalTree,
    SplitPolicy,
    ess,
    hidaisee_run,
    snapshot_times,
    split_leaf,
    traverse_sample,
)
from ais.partition import ArmState, UniformStream
from ais.targets import Rectangle, builtin_target


def _set_leaf_masses(tree: ProposalTree, masses) -> None:
    """Freeze leaf numerators to ``masses`` (slot order) with no boost part."""
    for slot, lid in enumerate(tree.leaf_ids):
        node = tree.nodes[lid]
        node.zsum, node.bsum = float(masses[slot]), 0.0
        tree.lz.a[slot], tree.lb.a[slot] = float(masses[slot]), 0.0
        tree._resum(node.parent)


def _balanced(depth: int, target=None) -> ProposalTree:
    tree = ProposalTree(target or builtin_target("uniform"), SplitPolicy(10**9, 0.5), seed=0)
    for _ in range(depth):
        for leaf in list(tree.leaves):
            tree.split(leaf)
    return tree


def _in_order(tree: ProposalTree) -> list:
    return sorted(tree.leaves, key=lambda n: n.cell.lo)


class TestESS:
    def test_examples(self):
        assert ess(ArmState.from_weights([1, 1, 1, 1])) == 4.0
        assert ess(ArmState.from_weights([1, 0, 0])) == 1.0
        assert ess(ArmState.from_weights([1, 2, 3])) == pytest.approx(36 / 14, rel=1e-15)

    def test_all_zero_weights(self):
        assert ess(ArmState.from_weights([0.0] * 5)) == 5.0

    def test_needs_samples(self):
        with pytest.raises(PreconditionError):
            ess(ArmState())

    @given(st.lists(st.floats(0, 1e3), min_size=1, max_size=40))
    def test_bounds(self, ys):
        e = ess(ArmState.from_weights(ys))
        assert 1.0 - 1e-9 <= e <= len(ys) * (1 + 1e-9)


class TestSplitPolicy:
    def test_rule(self):
        p = SplitPolicy(10, 0.5)
        assert not p.should_split(9, 1.0)
        assert p.should_split(10, 4.99)
        assert not p.should_split(10, 5.0)

    def test_validation(self):
        for bad in [dict(n_min=0), dict(ess_ratio=0.0), dict(ess_ratio=1.0)]:
            with pytest.raises(ConfigError):
                SplitPolicy(**bad)


class TestTraversal:
    def test_first_decision(self):
        tree = _balanced(2)
        leaves = _in_order(tree)
        masses = np.empty(4)
        for m, leaf in zip([0.1, 0.2, 0.3, 0.4], leaves):
            masses[leaf.slot] = m
        _set_leaf_masses(tree, masses)
        left = tree.nodes[tree.root.left]
        assert tree.node_mass(left) == pytest.approx(0.3, rel=1e-15)
        tree.check_invariants()

    def test_single_leaf(self):
        tree = ProposalTree(builtin_target("uniform"), seed=1)
        assert traverse_sample(tree) == tree.root.id
        assert tree.path == [] and tree.visited == 1

    def test_degenerate_masses(self):
        tree = _balanced(3)
        leaves = _in_order(tree)
        masses = np.zeros(len(leaves))
        masses[leaves[0].slot] = 1.0
        _set_leaf_masses(tree, masses)
        for _ in range(500):
            assert traverse_sample(tree) == leaves[0].id

    def test_zero_mass_node_is_structural_error(self):
        tree = _balanced(1)
        _set_leaf_masses(tree, np.zeros(2))
        with pytest.raises(StructuralError):
            tree.traverse()

    def test_frequencies_match_masses(self):
        tree = _balanced(3)
        rng = np.random.default_rng(0)
        masses = rng.uniform(0.1, 1.0, tree.num_leaves)
        _set_leaf_masses(tree, masses)
        q = tree.leaf_q
        n = 100_000
        counts = np.zeros(tree.num_leaves)
        tree.stream = UniformStream(123)
        for _ in range(n):
            counts[tree.traverse().slot] += 1
            assert tree.visited <= tree.depth + 1
        se = np.sqrt(q * (1 - q) / n)
        assert np.all(np.abs(counts / n - q) <= 3 * se)


class TestSplit:
    def test_constant_density_halves_exactly(self):
        tree = ProposalTree(builtin_target("uniform", {"level": 3.0}), SplitPolicy(10**9, 0.5), seed=2)
        for _ in range(40):
            tree.step()
        z_parent = tree.leaf_state(0).z_hat
        left, right = tree.split(tree.root)
        for kid in (left, right):
            s = tree.leaf_state(kid.slot)
            assert s.z_hat == pytest.approx(z_parent / 2, rel=1e-12)
        # Per unit volume the estimate is unchanged.
        assert tree.leaf_state(left.slot).n + tree.leaf_state(right.slot).n == 40

    def test_push_down_exactness(self):
        f = builtin_target("exp-flat")
        tree = ProposalTree(f, SplitPolicy(10**9, 0.5), seed=3, verify=True)
        for _ in range(200):
            tree.step()
        left, right = tree.split(tree.root)
        assert len(left.fs) + len(right.fs) == 200
        for kid in (left, right):
            vol = kid.cell.volume
            assert all(kid.cell.contains(x) for x in kid.xs)
            ref = ArmState.from_weights([fv * vol for fv in kid.fs])
            assert tree.leaf_state(kid.slot).sum_y == pytest.approx(ref.sum_y, rel=1e-12)
            np.testing.assert_allclose([fv * vol for fv in kid.fs], [f.eval(x) * vol for x in kid.xs], rtol=1e-12)

    def test_empty_child_inherits_half(self):
        tree = ProposalTree(builtin_target("uniform"), SplitPolicy(10**9, 0.5), seed=0)
        tree.step()
        tree.step()
        # Force every sample into the left half, then split.
        leaf = tree.root
        leaf.xs = [(0.1,), (0.2,)]
        parent = tree.leaf_state(0)
        pz = parent.z_hat
        pb = float(tree.boost.coefficient(leaf.tau)) * float(tree.boost.count_factor(parent.n))
        left, right = tree.split(leaf)
        assert tree.leaf_state(right.slot).n == 0
        assert right.zsum == pytest.approx(0.5 * pz) and right.bsum == pytest.approx(0.5 * pb)
        tree.check_invariants()

    def test_dimension_cycling_and_tau(self):
        f = builtin_target("banana")
        tree = ProposalTree(f, SplitPolicy(10**9, 0.5), seed=0)
        root_tau = tree.root.tau
        a, b = tree.split(tree.root)
        assert tree.root.split_dim == 0 and a.cell.hi[0] == 0.0
        c, d = tree.split(a)
        assert a.split_dim == 1 and c.cell.hi[1] == 0.0
        assert a.tau == pytest.approx(root_tau / 2) and c.tau == pytest.approx(root_tau / 4)

    def test_explicit_tau_rules(self):
        f = builtin_target("uniform")
        with pytest.raises(ConfigError):
            ProposalTree(f, tau=1.0)
        t1 = ProposalTree(f, tau=1.0, tau_rule="constant")
        a, _ = t1.split(t1.root)
        assert a.tau == 1.0
        t2 = ProposalTree(f, tau=1.0, tau_rule="halve")
        a, _ = t2.split(t2.root)
        assert a.tau == 0.5

    def test_split_leaf_wrapper(self):
        tree = ProposalTree(builtin_target("uniform"), seed=0)
        split_leaf(tree, 0)
        assert tree.num_leaves == 2
        with pytest.raises(StructuralError):
            split_leaf(tree, 0)

    def test_no_boost_rejected(self):
        with pytest.raises(ConfigError):
            ProposalTree(builtin_target("uniform"), boost=BoostSpec("none"))


class TestRun:
    def test_constant_target_never_splits(self):
        tree = ProposalTree(builtin_target("uniform", {"level": 2.0}), SplitPolicy(10, 0.95), seed=5)
        tr = hidaisee_run(tree, 5000)
        assert tree.num_leaves == 1 and np.all(tr.partition_count == 1)

    def test_leaf_masses_match_full_recomputation(self):
        f = builtin_target("exp-flat")
        tree = ProposalTree(f, SplitPolicy(10, 0.7), seed=8)
        for i in range(3000):
            tree.step()
            if i % 97:
                continue
            num = []
            for slot, lid in enumerate(tree.leaf_ids):
                s = tree.leaf_state(slot)
                if s.n:
                    num.append(s.z_hat + boost(tree.boost, tree.nodes[lid].tau, tree.t, s.n))
                else:
                    num.append(tree.lz.a[slot] + tree.lb.a[slot] * math.sqrt(math.log(tree.t)))
            num = np.array(num)
            np.testing.assert_allclose(tree.leaf_q, num / num.sum(), rtol=1e-12)

    def test_fuzz_invariants(self):
        tree = ProposalTree(builtin_target("exp-flat"), SplitPolicy(10, 0.7), seed=9, verify=True)
        hidaisee_run(tree, 5000, check_every=1)
        assert tree.num_leaves > 1
        assert tree.max_visited <= tree.depth + 1

    def test_fuzz_invariants_2d_lazy(self):
        tree = ProposalTree(builtin_target("banana"), SplitPolicy(10, 0.5), seed=9, lazy=True, verify=True)
        hidaisee_run(tree, 3000, check_every=1)
        assert tree.num_leaves > 1

    def test_flat_cell_stays_whole(self):
        tree = ProposalTree(builtin_target("exp-flat"), SplitPolicy(10, 0.5), seed=0)
        hidaisee_run(tree, 20_000, snapshots=False)
        assert Rectangle.interval(0.0, 0.25) in tree.partition

    def test_determinism_and_snapshots(self):
        def go():
            tree = ProposalTree(builtin_target("exp-flat"), SplitPolicy(10, 0.7), seed=4)
            return hidaisee_run(tree, 2000)

        a, b = go(), go()
        assert a.x.tobytes() == b.x.tobytes() and a.snapshots == b.snapshots
        assert [s["t"] for s in a.snapshots] == [1, 2, 5, 10, 20, 50, 100, 200, 500, 1000, 2000]
        last = a.snapshots[-1]
        assert set(last["leaves"][0]) == {"lo", "hi", "q", "n", "ess"}
        assert sum(leaf["q"] for leaf in last["leaves"]) == pytest.approx(1.0, abs=1e-12)
        assert sum(leaf["n"] for leaf in last["leaves"]) == 2000

    def test_full_kl_requires_oracle(self):
        tree = ProposalTree(builtin_target("exp-flat"))
        with pytest.raises(PreconditionError):
            tree.full_kl()

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 10**6), st.sampled_from([0.5, 0.7, 0.95]))
    def test_counts_and_mass(self, seed, ratio):
        tree = ProposalTree(builtin_target("per-arm-tau"), SplitPolicy(10, ratio), seed=seed)
        tr = hidaisee_run(tree, 500, snapshots=False)
        tree.check_invariants()
        assert np.all(np.diff(tr.partition_count) >= 0)


class TestSnapshotTimes:
    def test_grid(self):
        assert snapshot_times(100_000)[-3:] == [20_000, 50_000, 100_000]
        assert snapshot_times(7) == [1, 2, 5, 7]
