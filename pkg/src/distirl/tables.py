"""Text-table checkpoints for reward models, critics, policies and environments.

Every table is a CSV file with a fixed header. Floats are written with
``repr`` so a save/load cycle reproduces the arrays bit for bit.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from .critic import MeanCritic, QuantileCritic
from .dist import parse_distortion, distortion_to_str
from .mdp import TabularMdp, TrueRewardSpec
from .policy import RiskPolicy
from .reward import RewardModel

__all__ = [
    "REWARD_COLUMNS",
    "CRITIC_COLUMNS",
    "MEAN_CRITIC_COLUMNS",
    "POLICY_COLUMNS",
    "CDF_COLUMNS",
    "reward_to_csv",
    "reward_from_csv",
    "critic_to_csv",
    "critic_from_csv",
    "policy_to_csv",
    "policy_from_csv",
    "cdf_to_csv",
    "cdf_from_csv",
    "env_to_json",
    "env_from_json",
    "write_text",
    "read_table",
]

REWARD_COLUMNS = ("s", "a", "raw_loc", "raw_scale", "raw_alpha", "kind", "r_min", "r_max")
CRITIC_COLUMNS = ("s", "a", "atom_index", "value")
MEAN_CRITIC_COLUMNS = ("s", "a", "value")
POLICY_COLUMNS = ("s", "a", "prob")
CDF_COLUMNS = ("value", "cumulative_probability")

PathLike = Union[str, Path]


def _f(x) -> str:
    return repr(float(x))


def _write_rows(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def read_table(text: str, header: Sequence[str], what: str) -> list[list[str]]:
    """Parse CSV text and check its header; returns the data rows."""
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if not rows or tuple(rows[0]) != tuple(header):
        raise ValueError(f"{what} table must start with header {','.join(header)}")
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ValueError(f"{what} table line {i}: expected {len(header)} fields, got {len(row)}")
    return rows[1:]


def _shape_from(rows, what: str) -> tuple[int, int]:
    if not rows:
        raise ValueError(f"{what} table has no rows")
    s = max(int(r[0]) for r in rows) + 1
    a = max(int(r[1]) for r in rows) + 1
    return s, a


# -- reward model ------------------------------------------------------------


def reward_to_csv(model: RewardModel) -> str:
    lo, hi = model.range
    rows = []
    for s in range(model.shape[0]):
        for a in range(model.shape[1]):
            rows.append(
                [s, a, _f(model.raw_loc[s, a]), _f(model.raw_scale[s, a]), _f(model.raw_alpha[s, a]),
                 model.kind.value, _f(lo), _f(hi)]
            )
    return _write_rows(REWARD_COLUMNS, rows)


def reward_from_csv(text: str) -> RewardModel:
    rows = read_table(text, REWARD_COLUMNS, "reward")
    n_s, n_a = _shape_from(rows, "reward")
    if len(rows) != n_s * n_a:
        raise ValueError("reward table must have exactly one row per (s, a)")
    kinds = {r[5] for r in rows}
    ranges = {(float(r[6]), float(r[7])) for r in rows}
    if len(kinds) != 1 or len(ranges) != 1:
        raise ValueError("reward table mixes kinds or ranges")
    params = np.full((3, n_s, n_a), np.nan)
    for r in rows:
        s, a = int(r[0]), int(r[1])
        params[:, s, a] = [float(r[2]), float(r[3]), float(r[4])]
    if np.isnan(params).any():
        raise ValueError("reward table does not cover every (s, a)")
    return RewardModel(kinds.pop(), params[0], params[1], params[2], ranges.pop())


# -- critics -----------------------------------------------------------------


def critic_to_csv(critic: Union[QuantileCritic, MeanCritic]) -> str:
    if isinstance(critic, MeanCritic):
        n_s, n_a = critic.shape
        rows = [[s, a, _f(critic.q[s, a])] for s in range(n_s) for a in range(n_a)]
        return _write_rows(MEAN_CRITIC_COLUMNS, rows)
    n_s, n_a, n = critic.theta.shape
    rows = [
        [s, a, i, _f(critic.theta[s, a, i])] for s in range(n_s) for a in range(n_a) for i in range(n)
    ]
    return _write_rows(CRITIC_COLUMNS, rows)


def critic_from_csv(text: str) -> Union[QuantileCritic, MeanCritic]:
    first = text.split("\n", 1)[0].strip()
    if first == ",".join(MEAN_CRITIC_COLUMNS):
        rows = read_table(text, MEAN_CRITIC_COLUMNS, "critic")
        n_s, n_a = _shape_from(rows, "critic")
        q = np.full((n_s, n_a), np.nan)
        for r in rows:
            q[int(r[0]), int(r[1])] = float(r[2])
        if np.isnan(q).any():
            raise ValueError("critic table does not cover every (s, a)")
        return MeanCritic(q)
    rows = read_table(text, CRITIC_COLUMNS, "critic")
    n_s, n_a = _shape_from(rows, "critic")
    n = max(int(r[2]) for r in rows) + 1
    theta = np.full((n_s, n_a, n), np.nan)
    for r in rows:
        theta[int(r[0]), int(r[1]), int(r[2])] = float(r[3])
    if np.isnan(theta).any():
        raise ValueError("critic table does not cover every (s, a, atom)")
    return QuantileCritic(theta)


# -- policy ------------------------------------------------------------------


def policy_to_csv(policy: RiskPolicy) -> str:
    n_s, n_a = policy.shape
    rows = [[s, a, _f(policy.probs[s, a])] for s in range(n_s) for a in range(n_a)]
    return _write_rows(POLICY_COLUMNS, rows)


def policy_from_csv(text: str, distortion="neutral", beta: float = 0.1) -> RiskPolicy:
    rows = read_table(text, POLICY_COLUMNS, "policy")
    n_s, n_a = _shape_from(rows, "policy")
    p = np.full((n_s, n_a), np.nan)
    for r in rows:
        p[int(r[0]), int(r[1])] = float(r[2])
    if np.isnan(p).any():
        raise ValueError("policy table does not cover every (s, a)")
    return RiskPolicy(p, parse_distortion(distortion), beta)


# -- CDFs --------------------------------------------------------------------


def cdf_to_csv(values: np.ndarray, probs: np.ndarray) -> str:
    return _write_rows(CDF_COLUMNS, ([_f(v), _f(p)] for v, p in zip(values, probs)))


def cdf_from_csv(text: str) -> tuple[np.ndarray, np.ndarray]:
    rows = read_table(text, CDF_COLUMNS, "cdf")
    arr = np.array([[float(v), float(p)] for v, p in rows]).reshape(-1, 2)
    return arr[:, 0], arr[:, 1]


# -- environments ------------------------------------------------------------


def env_to_json(mdp: TabularMdp, spec: TrueRewardSpec, extra: dict | None = None) -> str:
    """JSON document holding the dynamics, start distribution and true reward laws."""
    doc = {
        "n_states": mdp.n_states,
        "n_actions": mdp.n_actions,
        "gamma": mdp.gamma,
        "init_dist": mdp.init_dist.tolist(),
        "transition": mdp.transition.tolist(),
        "reward_spec": spec.to_records(),
    }
    if extra:
        doc["info"] = extra
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def env_from_json(text: str) -> tuple[TabularMdp, TrueRewardSpec, dict]:
    doc = json.loads(text)
    try:
        mdp = TabularMdp(np.array(doc["transition"]), float(doc["gamma"]), np.array(doc["init_dist"]))
        spec = TrueRewardSpec.from_records(doc["reward_spec"], mdp.n_states, mdp.n_actions)
    except KeyError as exc:
        raise ValueError(f"environment file is missing {exc}") from None
    return mdp, spec, dict(doc.get("info", {}))


def write_text(path: PathLike, text: str, force: bool = False) -> Path:
    """Write ``text`` to ``path``; refuses to replace an existing file unless ``force``."""
    path = Path(path)
    if path.exists() and not force:
        raise FileExistsError(f"{path} exists (use --force to overwrite)")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def distortion_label(d) -> str:
    return distortion_to_str(parse_distortion(d))
