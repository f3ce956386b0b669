"""Environment construction from plain dictionaries (the ``make-env`` config)."""

from __future__ import annotations

from typing import Any

import numpy as np

from .errors import ConfigurationError
from .mdp import TabularMdp, TrueRewardSpec, build_gridworld, law_from_dict

__all__ = ["ENV_KINDS", "make_env", "law_from_config"]

ENV_KINDS = ("gridworld", "tabular")

_GRID_KEYS = {"kind", "width", "height", "start", "goals", "step_cost", "slip_prob", "gamma", "reemit_goal_reward"}
_TABULAR_KEYS = {"kind", "n_states", "n_actions", "transitions", "rewards", "default_reward", "init_dist", "gamma"}


def law_from_config(doc: Any):
    """``{"law": "Gaussian", "mu": 1, "sigma": 1}`` -> Gaussian(1, 1)."""
    if not isinstance(doc, dict) or "law" not in doc:
        raise ConfigurationError(f"reward law must be an object with a 'law' key, got {doc!r}")
    params = dict(doc)
    return law_from_dict(params.pop("law"), params)


def _check_keys(doc: dict, allowed: set, what: str) -> None:
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise KeyError(f"unknown {what} keys: {', '.join(unknown)}")


def make_env(doc: dict) -> tuple[TabularMdp, TrueRewardSpec]:
    """Build an environment from its config.

    ``kind = "gridworld"`` forwards to :func:`build_gridworld`; goals are
    ``{"cell": [row, col], "reward": <law>}``. ``kind = "tabular"`` lists
    transitions as ``[s, a, s_next, prob]`` rows and rewards as
    ``{"s": s, "a": a, "reward": <law>}`` entries over a default law.
    Unknown keys raise KeyError; invalid values raise ConfigurationError.
    """
    kind = doc.get("kind")
    if kind == "gridworld":
        _check_keys(doc, _GRID_KEYS, "gridworld")
        goals = []
        for g in doc.get("goals", []):
            _check_keys(g, {"cell", "reward"}, "goal")
            goals.append((tuple(g["cell"]), law_from_config(g["reward"])))
        return build_gridworld(
            int(doc.get("width", 5)),
            int(doc.get("height", 5)),
            tuple(doc.get("start", (2, 0))),
            goals,
            step_cost=float(doc.get("step_cost", 0.0)),
            slip_prob=float(doc.get("slip_prob", 0.0)),
            gamma=float(doc.get("gamma", 0.75)),
            reemit_goal_reward=bool(doc.get("reemit_goal_reward", True)),
        )
    if kind == "tabular":
        _check_keys(doc, _TABULAR_KEYS, "tabular env")
        n_s, n_a = int(doc["n_states"]), int(doc["n_actions"])
        p = np.zeros((n_s, n_a, n_s))
        for row in doc["transitions"]:
            s, a, s2, prob = row
            p[int(s), int(a), int(s2)] += float(prob)
        default = law_from_config(doc.get("default_reward", {"law": "Deterministic", "c": 0.0}))
        laws = [[default] * n_a for _ in range(n_s)]
        for entry in doc.get("rewards", []):
            _check_keys(entry, {"s", "a", "reward"}, "reward entry")
            laws[int(entry["s"])][int(entry["a"])] = law_from_config(entry["reward"])
        init = doc.get("init_dist")
        if init is None:
            init = np.zeros(n_s)
            init[0] = 1.0
        return TabularMdp(p, float(doc.get("gamma", 0.75)), np.asarray(init, dtype=float)), TrueRewardSpec(laws)
    raise ConfigurationError(f"env kind must be one of {ENV_KINDS}, got {kind!r}")
