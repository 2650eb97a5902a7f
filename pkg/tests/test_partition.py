import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ais.daisee import BoostSpec, CellSource, DaiseeState
from ais.errors import ConfigError, PreconditionError, SamplingError
from ais.oracle import oracle_table
from ais.partition import ArmState, UniformStream, make_equal_partition, neumaier_add, record_pull, resolve_tau
from ais.targets import Rectangle, builtin_target


class TestEqualPartition:
    def test_four_cells(self):
        arms = make_equal_partition(Rectangle.interval(0, 1), 4, 1.0)
        assert [a.cell for a in arms] == [Rectangle.interval(i / 4, (i + 1) / 4) for i in range(4)]
        assert all(a.g_density == 4.0 for a in arms)

    def test_auto_tau(self):
        f = builtin_target("per-arm-tau")
        assert f.sup_bound == 20.0
        arms = make_equal_partition(f.domain, 5, "auto", f)
        assert all(a.tau == pytest.approx(2.0, rel=1e-15) for a in arms)

    def test_auto_local_tau(self):
        f = builtin_target("per-arm-tau")
        arms = make_equal_partition(f.domain, 5, "auto-local", f)
        # Cell sups are 20, 20, 9, 9, 9 (the 1.0 piece shares the last cell).
        assert [a.tau for a in arms] == pytest.approx([2.0, 2.0, 0.9, 0.9, 0.9], rel=1e-14)

    def test_single_cell(self):
        dom = Rectangle.interval(-1.0, 3.0)
        (arm,) = make_equal_partition(dom, 1, 1.0)
        assert arm.cell == dom and arm.g_density == 0.25

    def test_auto_without_sup(self):
        with pytest.raises(ConfigError):
            make_equal_partition(Rectangle.interval(0, 1), 3, "auto")

    def test_tau_forms(self):
        cells = [Rectangle.interval(0, 0.5), Rectangle.interval(0.5, 1)]
        assert resolve_tau(0.3, cells) == [0.3, 0.3]
        assert resolve_tau([1, 2], cells) == [1.0, 2.0]
        f = builtin_target("uniform", {"level": 4.0})
        assert resolve_tau({"rule": "auto", "scale": 0.5}, cells, f) == [0.5, 0.5]
        with pytest.raises(ConfigError):
            resolve_tau([1, 2, 3], cells)
        with pytest.raises(ConfigError):
            make_equal_partition(Rectangle.interval(0, 1), 2, -1.0)

    @given(st.integers(1, 200))
    def test_g_density_normalizes(self, k):
        for arm in make_equal_partition(Rectangle.interval(-2.0, 5.0), k, 1.0):
            assert abs(arm.g_density * arm.cell.volume - 1.0) <= 1e-12

    def test_two_dim_splits_first_axis(self):
        arms = make_equal_partition(Rectangle((0, 0), (2, 1)), 2, 1.0)
        assert arms[0].cell == Rectangle((0, 0), (1, 1))


class TestArmState:
    def test_first_pull(self):
        s = record_pull(ArmState(), 3.0)
        assert s.n == 1 and s.z_hat == 3.0

    def test_second_pull(self):
        s = record_pull(record_pull(ArmState(), 3.0), 1.0)
        assert s.n == 2 and s.z_hat == 2.0

    def test_three_pulls(self):
        s = ArmState.from_weights([1.0, 2.0, 3.0])
        assert s.sum_y2 == 14.0 and s.z_hat == 2.0

    def test_undefined_before_first_pull(self):
        with pytest.raises(PreconditionError):
            ArmState().z_hat

    @pytest.mark.parametrize("y", [math.nan, math.inf, -1.0])
    def test_invalid_weight(self, y):
        with pytest.raises(SamplingError, match="arm 3 at iteration 7"):
            record_pull(ArmState(), y, arm=3, t=7)

    @given(st.lists(st.floats(0, 1e6), min_size=1, max_size=50))
    def test_invariants(self, ys):
        s = ArmState.from_weights(ys)
        assert s.n == len(ys)
        assert s.z_hat == pytest.approx(math.fsum(ys) / len(ys), rel=1e-12, abs=1e-300)
        assert s.sum_y2 >= s.sum_y**2 / s.n * (1 - 1e-12)

    def test_compensated_sum(self):
        s, c = 0.0, 0.0
        for v in [1e16, 1.0, -1e16] * 100:
            s, c = neumaier_add(s, c, v)
        assert s + c == 100.0


class TestUniformStream:
    def test_reproducible_and_in_range(self):
        a = UniformStream(5).take(20_000)
        b = UniformStream(5).take(20_000)
        assert a == b
        assert 0.0 <= min(a) and max(a) < 1.0
        assert UniformStream(6).take(5) != a[:5]


class TestCounting:
    def test_counts_sum_to_t_every_iteration(self):
        f = builtin_target("exp-flat")
        arms = make_equal_partition(f.domain, 4, "auto", f)
        st_ = DaiseeState(arms, CellSource(f, [a.cell for a in arms]), BoostSpec(), seed=3)
        st_.initialize()
        assert int(st_.n.sum()) == st_.t == 4
        for _ in range(2000):
            st_.step()
            assert int(st_.n.sum()) == st_.t


class TestUnbiasedness:
    def test_frozen_uniform_proposal(self):
        # Adaptation off: every arm is drawn equally often from its cell.
        f = builtin_target("exp-flat")
        cells = [a.cell for a in make_equal_partition(f.domain, 4, 1.0)]
        z = oracle_table(f, cells).z_a
        R, n = 200, 100
        est = np.empty((R, 4))
        for r in range(R):
            src, stream = CellSource(f, cells), UniformStream(1000 + r)
            states = [ArmState() for _ in cells]
            for _ in range(n):
                for a in range(4):
                    states[a] = record_pull(states[a], src.draw(a, stream)[2])
            est[r] = [s.z_hat for s in states]
        mean = est.mean(0)
        se = est.std(0, ddof=1) / math.sqrt(R)
        assert np.all(np.abs(mean - z) <= 4 * se)
