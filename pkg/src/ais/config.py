"""Run and sweep configurations with JSON round-trips and field-path errors."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field, replace
from typing import Any, Mapping

from .alpha import check_alpha
from .daisee import BOOST_FORMS, ON_DEGENERATE, BoostSpec
from .errors import ConfigError
from .hidaisee import SplitPolicy
from .targets import target_from_json

__all__ = ["RunConfig", "SweepConfig", "MODES", "SWEEP_AXES", "apply_axis", "load_json"]

MODES = ("daisee", "alpha", "hidaisee", "synthetic-arms")
SWEEP_AXES = ("boost_form", "boost_exponent", "boost_scale", "tau", "K", "ratio", "delta", "ess_ratio")


def _get(obj: Mapping, key: str, path: str, kind, default=...):
    if key not in obj:
        if default is ...:
            raise ConfigError("missing required field", f"{path}{key}")
        return default
    value = obj[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is not None and not isinstance(value, kind) or isinstance(value, bool) and kind in (int, float):
        raise ConfigError(f"expected {getattr(kind, '__name__', kind)}, got {type(value).__name__}", f"{path}{key}")
    return value


@dataclass(frozen=True)
class RunConfig:
    """One experiment: a sampler, a target and a list of replicate seeds.

    ``mode`` picks the engine: ``daisee`` (fixed partition, KL), ``alpha``
    (fixed partition with transformed weights; ``alpha = 1`` runs the KL
    engine unchanged), ``hidaisee`` (growing tree) or ``synthetic-arms``
    (the 100-arm Bernoulli reward law without a density).
    """

    name: str = "run"
    mode: str = "daisee"
    target: Mapping[str, Any] | None = None
    K: int | None = None
    p: float = 0.01
    tau: Any = "auto"
    tau_rule: str | None = None
    boost: BoostSpec = field(default_factory=BoostSpec)
    alpha: float | None = None
    split: SplitPolicy = field(default_factory=SplitPolicy)
    lazy: bool = False
    T: int = 100_000
    seeds: tuple[int, ...] = tuple(range(10))
    regret_tracking: bool = True
    on_degenerate: str = "error"
    keep_x: bool = True
    snapshots: bool = True

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        self.validate()

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; known: {list(MODES)}", "mode")
        if not isinstance(self.T, int) or self.T < 1:
            raise ConfigError(f"T must be a positive integer, got {self.T!r}", "T")
        if not self.seeds:
            raise ConfigError("at least one seed is required", "seeds")
        if self.on_degenerate not in ON_DEGENERATE:
            raise ConfigError(f"must be one of {list(ON_DEGENERATE)}", "on_degenerate")
        if self.mode != "synthetic-arms":
            if self.target is None:
                raise ConfigError("a target is required in this mode", "target")
            target_from_json(self.target)
        if self.mode in ("daisee", "alpha", "synthetic-arms"):
            if not isinstance(self.K, int) or self.K < 1:
                raise ConfigError(f"K must be a positive integer, got {self.K!r}", "K")
            if self.T < self.K:
                raise ConfigError(f"T={self.T} must be at least K={self.K}", "T")
        if self.mode == "synthetic-arms" and not (0.0 < self.p <= 1.0):
            raise ConfigError(f"p must lie in (0, 1], got {self.p}", "p")
        if self.mode == "alpha":
            if self.alpha is None:
                raise ConfigError("alpha mode needs 'alpha'", "alpha")
            check_alpha(self.alpha)
            if self.alpha != 1.0 and _is_auto(self.tau):
                raise ConfigError("alpha mode needs an explicit tau; the automatic rule holds for alpha = 1 only", "tau")
        elif self.alpha not in (None, 1.0):
            raise ConfigError("alpha != 1 requires mode 'alpha'", "alpha")
        if self.mode == "hidaisee":
            if not _is_auto(self.tau) and self.tau_rule not in ("halve", "constant"):
                raise ConfigError("an explicit tau needs tau_rule 'halve' or 'constant'", "tau_rule")
        if self.mode == "synthetic-arms" and _is_auto(self.tau):
            raise ConfigError("synthetic arms have no density; give tau explicitly", "tau")

    @property
    def effective_alpha(self) -> float:
        return 1.0 if self.alpha is None else float(self.alpha)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "mode": self.mode,
            "target": None if self.target is None else copy.deepcopy(dict(self.target)),
            "K": self.K,
            "p": self.p,
            "tau": copy.deepcopy(self.tau),
            "tau_rule": self.tau_rule,
            "boost": self.boost.to_json(),
            "alpha": self.alpha,
            "split": {"n_min": self.split.n_min, "ess_ratio": self.split.ess_ratio},
            "lazy": self.lazy,
            "T": self.T,
            "seeds": list(self.seeds),
            "regret_tracking": self.regret_tracking,
            "on_degenerate": self.on_degenerate,
            "keep_x": self.keep_x,
            "snapshots": self.snapshots,
        }

    @classmethod
    def from_json(cls, obj: Mapping[str, Any], path: str = "") -> "RunConfig":
        if not isinstance(obj, Mapping):
            raise ConfigError("run config must be a JSON object", path.rstrip(".") or None)
        known = set(cls.__dataclass_fields__)
        extra = set(obj) - known
        if extra:
            raise ConfigError(f"unknown field(s) {sorted(extra)}", f"{path}{sorted(extra)[0]}")
        kw: dict[str, Any] = {}
        for key, kind in (("name", str), ("mode", str), ("p", float), ("lazy", bool), ("T", int),
                          ("regret_tracking", bool), ("on_degenerate", str), ("keep_x", bool), ("snapshots", bool)):
            if key in obj:
                kw[key] = _get(obj, key, path, kind)
        if "target" in obj:
            kw["target"] = _get(obj, "target", path, (dict, type(None)))
        if "K" in obj:
            kw["K"] = _get(obj, "K", path, (int, type(None)))
        if "tau" in obj:
            tau = obj["tau"]
            if not isinstance(tau, (int, float, str, list, dict)) or isinstance(tau, bool):
                raise ConfigError("tau must be a number, list, rule name or rule object", f"{path}tau")
            kw["tau"] = tau
        if "tau_rule" in obj:
            kw["tau_rule"] = _get(obj, "tau_rule", path, (str, type(None)))
        if "alpha" in obj:
            kw["alpha"] = _get(obj, "alpha", path, (float, int, type(None)))
            if kw["alpha"] is not None:
                kw["alpha"] = float(kw["alpha"])
        if "seeds" in obj:
            seeds = obj["seeds"]
            if not isinstance(seeds, list) or not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds):
                raise ConfigError("seeds must be a list of integers", f"{path}seeds")
            kw["seeds"] = tuple(seeds)
        if "boost" in obj:
            b = obj["boost"]
            if not isinstance(b, Mapping):
                raise ConfigError("boost must be an object", f"{path}boost")
            bad = set(b) - {"form", "exponent", "scale"}
            if bad:
                raise ConfigError(f"unknown field(s) {sorted(bad)}", f"{path}boost.{sorted(bad)[0]}")
            form = _get(b, "form", f"{path}boost.", str, "ucb_sqrt")
            if form not in BOOST_FORMS:
                raise ConfigError(f"unknown boost form {form!r}", f"{path}boost.form")
            try:
                kw["boost"] = BoostSpec(
                    form,
                    _get(b, "exponent", f"{path}boost.", float, 0.5),
                    _get(b, "scale", f"{path}boost.", float, 1.0),
                )
            except ConfigError as exc:
                raise ConfigError(str(exc).split(": ", 1)[-1], f"{path}{exc.path}") from None
        if "split" in obj:
            s = obj["split"]
            if not isinstance(s, Mapping):
                raise ConfigError("split must be an object", f"{path}split")
            try:
                kw["split"] = SplitPolicy(
                    _get(s, "n_min", f"{path}split.", int, 10),
                    _get(s, "ess_ratio", f"{path}split.", float, 0.5),
                )
            except ConfigError as exc:
                raise ConfigError(str(exc).split(": ", 1)[-1], f"{path}{exc.path}") from None
        try:
            return cls(**kw)
        except ConfigError as exc:
            if exc.path and path:
                raise ConfigError(str(exc).split(": ", 1)[-1], f"{path}{exc.path}") from None
            raise

    def with_changes(self, **kw) -> "RunConfig":
        return replace(self, **kw)


def _is_auto(tau) -> bool:
    return isinstance(tau, str) or isinstance(tau, Mapping)


@dataclass(frozen=True)
class SweepConfig:
    """A one-parameter sweep over a base run.

    ``replicates`` overrides the base seeds with ``range(replicates)``.
    """

    base: RunConfig
    axis: str
    values: tuple
    replicates: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        if self.axis not in SWEEP_AXES:
            raise ConfigError(f"unknown axis {self.axis!r}; known: {list(SWEEP_AXES)}", "axis")
        if not self.values:
            raise ConfigError("values must be nonempty", "values")
        if self.replicates is not None and (not isinstance(self.replicates, int) or self.replicates < 1):
            raise ConfigError("replicates must be a positive integer", "replicates")
        for i, v in enumerate(self.values):
            try:
                self.config_for(v)
            except ConfigError as exc:
                raise ConfigError(f"value {v!r}: {exc}", f"values[{i}]") from None

    def config_for(self, value) -> RunConfig:
        cfg = apply_axis(self.base, self.axis, value)
        if self.replicates is not None:
            cfg = replace(cfg, seeds=tuple(range(self.replicates)))
        return cfg

    def to_json(self) -> dict:
        return {
            "base": self.base.to_json(),
            "axis": self.axis,
            "values": list(self.values),
            "replicates": self.replicates,
        }

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "SweepConfig":
        if not isinstance(obj, Mapping):
            raise ConfigError("sweep config must be a JSON object")
        extra = set(obj) - {"base", "axis", "values", "replicates"}
        if extra:
            raise ConfigError(f"unknown field(s) {sorted(extra)}", sorted(extra)[0])
        base = RunConfig.from_json(_get(obj, "base", "", dict), "base.")
        axis = _get(obj, "axis", "", str)
        values = obj.get("values")
        if values is None and axis == "boost_exponent":
            values = [round(0.1 * i, 10) for i in range(1, 11)]
        if not isinstance(values, list):
            raise ConfigError("values must be a list", "values")
        return cls(base, axis, tuple(values), _get(obj, "replicates", "", (int, type(None)), None))


def apply_axis(base: RunConfig, axis: str, value) -> RunConfig:
    """Return ``base`` with the swept parameter set to ``value``."""
    if axis == "boost_form":
        return replace(base, boost=BoostSpec(value, base.boost.exponent, base.boost.scale))
    if axis == "boost_exponent":
        return replace(base, boost=BoostSpec("power", float(value), base.boost.scale))
    if axis == "boost_scale":
        return replace(base, boost=BoostSpec(base.boost.form, base.boost.exponent, float(value)))
    if axis == "tau":
        return replace(base, tau=value)
    if axis == "ess_ratio":
        return replace(base, split=SplitPolicy(base.split.n_min, float(value)))
    if axis == "K":
        cfg = replace(base, K=int(value))
        if base.target is not None and "K" in base.target.get("params", {}):
            cfg = replace(cfg, target=_with_param(base.target, "K", int(value)))
        return cfg
    if axis in ("ratio", "delta"):
        if base.target is None:
            raise ConfigError(f"axis {axis!r} needs a target with a 'delta' parameter", "axis")
        return replace(base, target=_with_param(base.target, "delta", float(value)))
    raise ConfigError(f"unknown axis {axis!r}", "axis")


def _with_param(target: Mapping[str, Any], key: str, value) -> dict:
    out = copy.deepcopy(dict(target))
    out.setdefault("params", {})[key] = value
    return out


def load_json(path: str) -> Any:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}", path) from None
