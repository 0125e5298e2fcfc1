"""Experiment configuration: schema, defaults, validation, overrides.

Configs are JSON with a ``schema_version`` field.  All randomness flows
from the single required ``walk.seed``; there is no wall-clock default
anywhere.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

from .errors import ConfigError
from .groups import FREE, FREE_PRODUCT, GroupModel
from .walks import WalkSpec, make_walk, uniform_walk

SCHEMA_VERSION = 1

EXPERIMENTS = (
    "green",
    "martin",
    "rg",
    "gibbs",
    "ancona",
    "hoelder",
    "rn-check",
    "classify",
    "simulate",
)

_BUDGET_DEFAULTS = {
    "max_radius": None,  # per-model default when None
    "max_states": 3_000_000,
    "n_samples": 100_000,
    "maxlen": 3,
    "spectral_steps": 24,
    "ancona_samples": 1000,
    "ancona_max_dist": 12,
    "boundary_patience": 20,
    "boundary_max_steps": 20_000,
    "gibbs_radii": [1, 2, 3, 4, 5],
    "workers": 1,
}

_TOLERANCE_DEFAULTS = {
    "solver_rtol": 1e-12,
    "green_tol": 1e-3,
    "kernel_dev": 1e-3,
    "gcd_eps": 1e-3,
    "invariant_tol": 1e-8,
}


@dataclass(frozen=True)
class ExperimentConfig:
    model: GroupModel
    walk: WalkSpec
    budgets: dict
    tolerances: dict
    experiments: tuple[str, ...]
    output_dir: str
    row_cache: str | None
    raw: dict = field(repr=False)

    def echo(self) -> dict:
        return self.raw


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def _check_keys(section: dict, allowed, where: str) -> None:
    unknown = set(section) - set(allowed)
    _require(not unknown, f"unknown {where} keys: {sorted(unknown)}")


def _parse_model(section: Any) -> GroupModel:
    _require(isinstance(section, dict), "model must be an object")
    _check_keys(section, {"kind", "rank", "orders", "delta_hint"}, "model")
    kind = section.get("kind")
    try:
        if kind == FREE:
            _require("orders" not in section, "free model takes no orders")
            return GroupModel.free(int(section.get("rank", 0)))
        if kind == FREE_PRODUCT:
            orders = section.get("orders")
            _require(
                isinstance(orders, (list, tuple)) and len(orders) == 2,
                "free_product needs orders: [m, n]",
            )
            hint = section.get("delta_hint")
            return GroupModel.free_product(
                int(orders[0]), int(orders[1]),
                delta_hint=None if hint is None else int(hint),
            )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid model: {exc}") from exc
    raise ConfigError(f"model.kind must be '{FREE}' or '{FREE_PRODUCT}'")


def _parse_walk(section: Any, model: GroupModel) -> WalkSpec:
    _require(isinstance(section, dict), "walk must be an object")
    _check_keys(section, {"support", "seed"}, "walk")
    _require("seed" in section, "walk.seed is required (no wall-clock default)")
    seed = section["seed"]
    _require(isinstance(seed, int), "walk.seed must be an integer")
    support = section.get("support", "uniform")
    if support == "uniform":
        return uniform_walk(model, seed)
    _require(isinstance(support, list) and support, "walk.support must be 'uniform' or a list")
    items = []
    for entry in support:
        _require(
            isinstance(entry, (list, tuple)) and len(entry) == 2,
            "support entries are [word, probability] pairs",
        )
        word, prob = entry
        try:
            items.append((model.word(str(word)), float(prob)))
        except ValueError as exc:
            raise ConfigError(f"bad support entry {entry}: {exc}") from exc
    return make_walk(model, items, seed)


def _merged(defaults: dict, user: Any, where: str) -> dict:
    if user is None:
        return dict(defaults)
    _require(isinstance(user, dict), f"{where} must be an object")
    _check_keys(user, defaults, where)
    out = dict(defaults)
    out.update(user)
    return out


def parse_config(data: dict) -> ExperimentConfig:
    """Validate a raw config dict; raises ConfigError on schema violations."""
    _require(isinstance(data, dict), "config must be a JSON object")
    _check_keys(
        data,
        {"schema_version", "model", "walk", "budgets", "tolerances", "experiments", "output"},
        "top-level",
    )
    _require("schema_version" in data, "schema_version is required")
    _require(data["schema_version"] == SCHEMA_VERSION, f"schema_version must be {SCHEMA_VERSION}")
    _require("model" in data, "model section is required")
    _require("walk" in data, "walk section is required")
    model = _parse_model(data["model"])
    walk = _parse_walk(data["walk"], model)
    budgets = _merged(_BUDGET_DEFAULTS, data.get("budgets"), "budgets")
    tolerances = _merged(_TOLERANCE_DEFAULTS, data.get("tolerances"), "tolerances")
    for key, value in budgets.items():
        if key in ("max_radius",) and value is None:
            continue
        if key == "gibbs_radii":
            _require(
                isinstance(value, list) and value and all(int(r) >= 1 for r in value),
                "budgets.gibbs_radii must be a nonempty list of positive radii",
            )
            continue
        _require(
            isinstance(value, int) and value > 0, f"budgets.{key} must be a positive integer"
        )
    for key, value in tolerances.items():
        _require(
            isinstance(value, (int, float)) and value > 0, f"tolerances.{key} must be positive"
        )
    experiments = data.get("experiments", ["classify"])
    _require(
        isinstance(experiments, list) and experiments, "experiments must be a nonempty list"
    )
    for name in experiments:
        _require(name in EXPERIMENTS, f"unknown experiment {name!r}; known: {list(EXPERIMENTS)}")
    output = data.get("output") or {}
    _check_keys(output, {"dir", "row_cache"}, "output")
    return ExperimentConfig(
        model=model,
        walk=walk,
        budgets=budgets,
        tolerances=tolerances,
        experiments=tuple(experiments),
        output_dir=output.get("dir", "out"),
        row_cache=output.get("row_cache"),
        raw=data,
    )


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(data)


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply ``key.path=value`` overrides to a raw config dict."""
    out = json.loads(json.dumps(data))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, _, value = item.partition("=")
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            parsed = value
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override path {key!r} crosses a non-object")
        node[parts[-1]] = parsed
    return out
