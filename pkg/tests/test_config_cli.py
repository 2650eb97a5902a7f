import csv
import json
import math
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ais.cli import main
from ais.config import RunConfig, SweepConfig
from ais.daisee import BoostSpec
from ais.errors import ConfigError
from ais.experiment import run_experiment, run_sweep
from ais.hidaisee import SplitPolicy
from ais.recipes import RECIPES, get_recipe

EXP_FLAT = {"family": "exp-flat", "params": {}}


def _small(**kw) -> RunConfig:
    base = dict(name="small", mode="daisee", target=EXP_FLAT, K=4, T=300, seeds=(1, 2))
    base.update(kw)
    return RunConfig(**base)


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def _bytes(folder):
    return {n: open(os.path.join(folder, n), "rb").read() for n in sorted(os.listdir(folder))}


class TestRunConfig:
    @settings(max_examples=30)
    @given(
        st.sampled_from(["daisee", "hidaisee", "synthetic-arms", "alpha"]),
        st.integers(1, 50),
        st.lists(st.integers(0, 10**6), min_size=1, max_size=4),
        st.sampled_from(["ucb_sqrt", "log_over_n", "inverse_n", "none"]),
    )
    def test_round_trip(self, mode, k, seeds, form):
        kw = dict(mode=mode, K=k, T=k + 10, seeds=tuple(seeds), boost=BoostSpec(form))
        if mode == "hidaisee":
            kw.update(K=None, split=SplitPolicy(12, 0.6), boost=BoostSpec("ucb_sqrt"))
        if mode == "synthetic-arms":
            kw.update(target=None, tau=0.01)
        if mode == "alpha":
            kw.update(alpha=2.0, tau=[0.5] * k)
        cfg = _small(**kw)
        again = RunConfig.from_json(json.loads(json.dumps(cfg.to_json())))
        assert again == cfg

    @pytest.mark.parametrize("obj, path", [
        ({"mode": "daisee", "target": EXP_FLAT, "K": 0}, "K"),
        ({"mode": "daisee", "target": EXP_FLAT, "K": 4, "T": 3}, "T"),
        ({"mode": "magic"}, "mode"),
        ({"mode": "alpha", "target": EXP_FLAT, "K": 4}, "alpha"),
        ({"mode": "alpha", "target": EXP_FLAT, "K": 4, "alpha": 2.0}, "tau"),
        ({"mode": "daisee", "target": EXP_FLAT, "K": 4, "bogus": 1}, "bogus"),
        ({"mode": "daisee", "K": 4}, "target"),
        ({"mode": "synthetic-arms", "K": 100}, "tau"),
    ])
    def test_errors_name_the_field(self, obj, path):
        with pytest.raises(ConfigError) as info:
            RunConfig.from_json(obj)
        assert info.value.path is not None and path in info.value.path

    def test_sweep_round_trip_and_default_exponents(self):
        base = _small(boost=BoostSpec("power", 0.5))
        sweep = SweepConfig.from_json({"base": base.to_json(), "axis": "boost_exponent"})
        assert sweep.values == tuple(round(0.1 * i, 10) for i in range(1, 11))
        assert SweepConfig.from_json(json.loads(json.dumps(sweep.to_json()))) == sweep

    def test_sweep_errors(self):
        with pytest.raises(ConfigError):
            SweepConfig(_small(), "tau", ())
        with pytest.raises(ConfigError):
            SweepConfig(_small(), "colour", (1,))
        with pytest.raises(ConfigError, match="values"):
            SweepConfig(_small(), "K", (0,))


class TestRunExperiment:
    def test_init_only_rows(self, tmp_path):
        run_experiment(_small(T=4), str(tmp_path))
        for seed in (1, 2):
            rows = _read(tmp_path / "small" / f"seed-{seed}.csv")
            assert rows[0] == ["t", "arm", "x", "y", "z_hat_total", "instant_regret", "cum_regret", "partition_count"]
            assert len(rows) == 5

    def test_byte_identical_reruns(self, tmp_path):
        run_experiment(_small(), str(tmp_path / "a"))
        run_experiment(_small(), str(tmp_path / "b"), jobs=2)
        assert _bytes(tmp_path / "a" / "small") == _bytes(tmp_path / "b" / "small")

    def test_aggregate_is_per_seed_mean(self, tmp_path):
        run_experiment(_small(seeds=(1, 2, 3)), str(tmp_path))
        folder = tmp_path / "small"
        per = [_read(folder / f"seed-{s}.csv") for s in (1, 2, 3)]
        agg = _read(folder / "aggregate.csv")
        head = agg[0]
        for col in ("y", "z_hat_total", "cum_regret"):
            j = per[0][0].index(col)
            means = np.array([float(r[head.index(f"{col}_mean")]) for r in agg[1:]])
            ref = np.mean([[float(r[j]) for r in rows[1:]] for rows in per], axis=0)
            np.testing.assert_allclose(means, ref, rtol=1e-12, atol=1e-12)
        # Undefined early regret is written as an empty field.
        assert agg[1][head.index("instant_regret_mean")] == ""

    def test_hidaisee_summary(self, tmp_path):
        cfg = RunConfig(name="tree", mode="hidaisee", target=EXP_FLAT, T=500, seeds=(0,))
        summary = run_experiment(cfg, str(tmp_path))
        rep = summary["replicates"][0]
        assert rep["final_partition_count"] == rep["splits"] + 1
        assert summary["snapshots"]["0"][-1]["t"] == 500

    def test_seed_offset(self, tmp_path):
        summary = run_experiment(_small(), str(tmp_path), seed_offset=10)
        assert summary["seeds"] == [11, 12]


class TestSweep:
    def test_single_value_matches_experiment(self, tmp_path):
        cfg = _small(seeds=(0, 1, 2))
        (row,) = run_sweep(SweepConfig(cfg, "tau", (cfg.tau,)))
        summary = run_experiment(cfg, str(tmp_path))
        cum = [r["final_cum_regret"] for r in summary["replicates"]]
        assert row["mean_final_cum_regret"] == pytest.approx(math.fsum(cum) / 3, rel=1e-12)

    def test_ratio_rows_sorted(self, tmp_path):
        base = RunConfig(name="r", mode="daisee", target={"family": "vary-ratio", "params": {"K": 10, "delta": 0.0}},
                         K=10, tau=0.5, T=50, seeds=(0,))
        rows = run_sweep(SweepConfig(base, "ratio", (0.1, 0.0, 0.05)), str(tmp_path))
        ratios = [r["ratio"] for r in rows]
        assert ratios == sorted(ratios)
        out = _read(tmp_path / "sweep-r-ratio.csv")
        assert out[0][:4] == ["value", "mean_final_cum_regret", "std_final_cum_regret", "mean_final_instant_regret"]
        assert len(out) == 4

    def test_k_axis_updates_target(self):
        base = RunConfig(name="k", mode="daisee", target={"family": "vary-k", "params": {"K": 10}}, K=10, T=30)
        cfg = SweepConfig(base, "K", (5, 20)).config_for(20)
        assert cfg.K == 20 and cfg.target["params"]["K"] == 20


class TestRecipes:
    def test_names(self):
        assert set(RECIPES) == {"fig1ab", "fig1c", "fig1d", "fig2a-tau", "fig2b-k", "fig2c-ratio",
                                "fig2d-perarm", "fig2e-sensitivity", "fig3-expflat", "fig4-banana"}

    def test_defaults(self):
        fig2d = get_recipe("fig2d-perarm").items()
        assert {c.K for c in fig2d} == {5}
        assert {c.target["family"] for c in fig2d} == {"per-arm-tau"}
        assert {str(c.tau) for c in fig2d} == {"auto", "auto-local"}
        (fig4,) = get_recipe("fig4-banana").items()
        assert fig4.axis == "ess_ratio" and fig4.values == (0.5, 0.7, 0.95)
        (fig2b,) = get_recipe("fig2b-k").items()
        assert fig2b.values == (5, 10, 20, 50, 100)
        for item in get_recipe("fig1c").items():
            assert item.T == 100_000 and len(item.seeds) == 10

    def test_unknown(self):
        with pytest.raises(ConfigError):
            get_recipe("fig9")


class TestCLI:
    def test_list(self, capsys):
        assert main([]) == 0
        out = capsys.readouterr().out
        assert all(name in out for name in RECIPES)
        assert main(["recipes"]) == 0

    def test_recipe_json(self, capsys):
        assert main(["recipes", "fig4-banana"]) == 0
        (item,) = json.loads(capsys.readouterr().out)
        assert item["kind"] == "sweep" and item["config"]["values"] == [0.5, 0.7, 0.95]

    def test_oracle(self, capsys):
        assert main(["oracle", json.dumps(EXP_FLAT), '{"cells": [{"lo": [0], "hi": [0.25]}, {"lo": [0.25], "hi": [1]}]}']) == 0
        table = json.loads(capsys.readouterr().out)
        assert table["pi_a"][0] == pytest.approx(0.125 / (0.125 + 0.1 * (1 - math.exp(-7.5))), rel=1e-10)

    def test_run_and_exit_codes(self, tmp_path, capsys, monkeypatch):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps(_small(T=50).to_json()))
        monkeypatch.setenv("AIS_OUT_DIR", str(tmp_path / "env"))
        assert main(["run", str(cfg)]) == 0
        assert (tmp_path / "env" / "small" / "aggregate.csv").exists()
        capsys.readouterr()

        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"mode": "daisee", "target": EXP_FLAT, "K": -1}))
        assert main(["run", str(bad)]) == 2
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "ConfigError" and err["path"] == "K"

        assert main(["run", str(tmp_path / "missing.json")]) == 1
        assert json.loads(capsys.readouterr().err)["error"] == "FileNotFoundError"

    def test_sweep_command(self, tmp_path, capsys):
        sweep = SweepConfig(_small(T=40, seeds=(0,)), "K", (2, 4))
        path = tmp_path / "s.json"
        path.write_text(json.dumps(sweep.to_json()))
        assert main(["sweep", str(path), "--out-dir", str(tmp_path)]) == 0
        report = json.loads(capsys.readouterr().out)
        assert [r["value"] for r in report["sweep-small-K"]] == [2, 4]
