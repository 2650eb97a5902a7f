"""Built-in experiment recipes, one per reproduced figure.

Every recipe uses ``T = 10**5`` and seeds ``0..9`` unless stated.  Tuned
multipliers were chosen by grid search over 10 seeds (see ``TUNING_GRIDS``)
and are frozen here so reruns are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

from .config import RunConfig, SweepConfig
from .daisee import C_BOOST, BoostSpec
from .hidaisee import SplitPolicy

__all__ = ["Recipe", "RECIPES", "get_recipe", "list_recipes", "TUNED", "TUNING_GRIDS"]

T_DEFAULT = 100_000
SEEDS = tuple(range(10))

# Shared tau and boost multipliers tuned on the 100-arm benchmark.
TUNED = {
    "synthetic_tau": 0.015,
    "log_over_n_scale": 0.25,
    "inverse_n_scale": 3.0,
}

# Grids searched when tuning the values above.
TUNING_GRIDS = {
    "synthetic_tau": [0.0025, 0.005, 0.0075, 0.01, 0.015, 0.02, 0.04],
    "log_over_n_scale": [0.0625, 0.125, 0.25, 0.5, 1.0],
    "inverse_n_scale": [0.75, 1.5, 3.0, 6.0, 12.0],
}

Item = Union[RunConfig, SweepConfig]


@dataclass(frozen=True)
class Recipe:
    name: str
    description: str
    build: Callable[[], list[Item]]

    def items(self) -> list[Item]:
        return self.build()


def _synthetic(name: str, boost: BoostSpec, **kw) -> RunConfig:
    return RunConfig(
        name=name, mode="synthetic-arms", K=100, p=0.01, tau=TUNED["synthetic_tau"], boost=boost,
        T=T_DEFAULT, seeds=SEEDS, on_degenerate="hold", **kw,
    )


def _fig1ab() -> list[Item]:
    return [
        _synthetic("fig1ab-ucb", BoostSpec("ucb_sqrt")),
        _synthetic("fig1ab-none", BoostSpec("none")),
    ]


def _fig1c() -> list[Item]:
    return [
        _synthetic("fig1c-ucb_sqrt", BoostSpec("ucb_sqrt")),
        _synthetic("fig1c-log_over_n", BoostSpec("log_over_n", scale=TUNED["log_over_n_scale"])),
        _synthetic("fig1c-inverse_n", BoostSpec("inverse_n", scale=TUNED["inverse_n_scale"])),
        _synthetic("fig1c-none", BoostSpec("none")),
    ]


def _fig1d() -> list[Item]:
    # Scale c * tau makes exponent 0.5 coincide with the ucb_sqrt boost.
    base = _synthetic("fig1d", BoostSpec("power", 0.5, C_BOOST * TUNED["synthetic_tau"]))
    return [SweepConfig(base, "boost_exponent", tuple(round(0.1 * i, 10) for i in range(1, 11)))]


def _fixed(name: str, target: dict, K: int, tau="auto") -> RunConfig:
    return RunConfig(name=name, mode="daisee", target=target, K=K, tau=tau, T=T_DEFAULT, seeds=SEEDS)


def _fig2a() -> list[Item]:
    base = _fixed("fig2a-tau", {"family": "vary-tau", "params": {"delta": 1.0}}, 10)
    return [SweepConfig(base, "delta", (0.001, 0.01, 0.1, 0.5, 1.0, 2.0, 4.0, 8.0))]


def _fig2b() -> list[Item]:
    base = _fixed("fig2b-k", {"family": "vary-k", "params": {"K": 10}}, 10)
    return [SweepConfig(base, "K", (5, 10, 20, 50, 100))]


RATIO_TAU = 0.5


def _fig2c() -> list[Item]:
    base = _fixed("fig2c-ratio", {"family": "vary-ratio", "params": {"K": 10, "delta": 0.0}}, 10, tau=RATIO_TAU)
    return [SweepConfig(base, "ratio", (0.0, 0.005, 0.01, 0.02, 0.04, 0.06, 0.08, 0.1))]


PER_ARM = {"family": "per-arm-tau", "params": {}}


def _fig2d() -> list[Item]:
    return [
        _fixed("fig2d-per-arm-tau", PER_ARM, 5, tau="auto-local"),
        _fixed("fig2d-shared-tau", PER_ARM, 5, tau="auto"),
    ]


SENSITIVITY_SCALES = (1 / 16, 1 / 8, 1 / 4, 1 / 2, 1.0, 2.0, 4.0)


def _fig2e() -> list[Item]:
    base = _fixed("fig2e-sensitivity", PER_ARM, 5, tau=2.0)
    # Shared tau around the automatic value 2.0 for this target.
    return [SweepConfig(base, "tau", tuple(2.0 * s for s in SENSITIVITY_SCALES))]


EXP_FLAT = {"family": "exp-flat", "params": {}}


def _fig3() -> list[Item]:
    return [
        RunConfig(name="fig3-hidaisee", mode="hidaisee", target=EXP_FLAT, tau="auto",
                  split=SplitPolicy(10, 0.7), T=T_DEFAULT, seeds=SEEDS),
        RunConfig(name="fig3-hidaisee-ess50", mode="hidaisee", target=EXP_FLAT, tau="auto",
                  split=SplitPolicy(10, 0.5), T=T_DEFAULT, seeds=SEEDS),
        *[_fixed(f"fig3-daisee-K{k}", EXP_FLAT, k) for k in (5, 10, 20)],
    ]


def _fig4() -> list[Item]:
    base = RunConfig(name="fig4-banana", mode="hidaisee", target={"family": "banana", "params": {}},
                     tau="auto", split=SplitPolicy(10, 0.5), T=T_DEFAULT, seeds=SEEDS, regret_tracking=False)
    return [SweepConfig(base, "ess_ratio", (0.5, 0.7, 0.95))]


RECIPES: dict[str, Recipe] = {r.name: r for r in [
    Recipe("fig1ab", "100-arm benchmark: final proposal vs target, ucb_sqrt boost vs no boost", _fig1ab),
    Recipe("fig1c", "100-arm benchmark: cumulative regret of four boost forms with tuned multipliers", _fig1c),
    Recipe("fig1d", "100-arm benchmark: power boost (log t / N)^e, e = 0.1..1.0", _fig1d),
    Recipe("fig2a-tau", "regret vs tau: vary-tau target, K=10, delta 0.001..8, automatic tau", _fig2a),
    Recipe("fig2b-k", "regret vs K: vary-k target, K in {5,10,20,50,100}, automatic tau", _fig2b),
    Recipe("fig2c-ratio", "regret vs Z_max/Z_min: vary-ratio target, K=10, delta 0..1/K", _fig2c),
    Recipe("fig2d-perarm", "per-arm vs shared tau on the per-arm-tau target, K=5", _fig2d),
    Recipe("fig2e-sensitivity", "shared-tau sensitivity grid on the per-arm-tau target, K=5", _fig2e),
    Recipe("fig3-expflat", "tree sampler on exp-flat (ESS 70% and 50%) vs fixed K in {5,10,20}", _fig3),
    Recipe("fig4-banana", "tree sampler on the 2D banana, ESS ratio in {0.5, 0.7, 0.95}", _fig4),
]}


def get_recipe(name: str) -> Recipe:
    from .errors import ConfigError

    try:
        return RECIPES[name]
    except KeyError:
        raise ConfigError(f"unknown recipe {name!r}; known: {sorted(RECIPES)}", "recipe") from None


def list_recipes() -> list[tuple[str, str]]:
    return [(r.name, r.description) for r in RECIPES.values()]
