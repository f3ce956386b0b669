"""``distirl`` command line: one pipeline stage per subcommand.

Every subcommand reads a JSON config (``--config``) and writes under an
output directory (``--out``, default ``$DISTIRL_OUT/<subcommand>`` or
``runs/<subcommand>``). Existing files are never replaced without
``--force``. Exit codes: 0 success, 1 invalid input or failed run,
2 usage error (unknown flag or config key).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .ablation import ABLATIONS, min_max_scale, rows_to_csv, run_ablation
from .demos import load_demos, save_demos, format_demos
from .dist import CVaR, empirical_quantiles, parse_distortion
from .engine import IrlConfig, train
from .envs import make_env
from .errors import ConfigurationError, DemoParseError, TrainingError
from .evaluate import demo_returns, evaluate, policy_returns
from .expert import ExpertConfig, generate_demos, train_expert
from .tables import (
    cdf_to_csv,
    critic_from_csv,
    critic_to_csv,
    env_from_json,
    env_to_json,
    policy_from_csv,
    policy_to_csv,
    reward_from_csv,
    reward_to_csv,
    write_text,
)

log = logging.getLogger("distirl")

OUT_ENV_VAR = "DISTIRL_OUT"

DEMO_KEYS = {"n_traj", "horizon", "seed"}
EVAL_KEYS = {"horizon", "n_rollouts", "n_atoms", "n_reward_samples", "distortion", "seed"}
EXPORT_KEYS = {"pairs", "n_atoms", "n_reward_samples", "n_rollouts", "horizon", "seed"}
ABLATE_KEYS = {"base", "seeds", "configs", "score", "eval_rollouts", "eval_horizon", "expert", "demos"}


class UsageError(Exception):
    """Bad flags or config keys; exit status 2."""


def _load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{p}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{p}: config must be a JSON object")
    return doc


def _check_keys(doc: dict, allowed: set, what: str) -> None:
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise UsageError(f"unknown {what} config keys: {', '.join(unknown)}")


def _dataclass_config(cls, doc: dict):
    try:
        return cls.from_dict(doc)
    except ConfigurationError as exc:
        if "unknown" in str(exc):
            raise UsageError(str(exc)) from None
        raise


def _need(path: Optional[str], flag: str) -> Path:
    if path is None:
        raise UsageError(f"{flag} is required")
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"{flag} path not found: {p}")
    return p


def _out_dir(args) -> Path:
    if args.out:
        return Path(args.out)
    root = os.environ.get(OUT_ENV_VAR, "runs")
    return Path(root) / args.command


def _planned(out: Path, names: Sequence[str], force: bool) -> None:
    """Refuse up front if any output exists, so a run never half-overwrites."""
    clash = [str(out / n) for n in names if (out / n).exists()]
    if clash and not force:
        raise FileExistsError(f"refusing to overwrite {', '.join(clash)} (use --force)")


def _write(out: Path, name: str, text: str, force: bool) -> None:
    write_text(out / name, text, force=force)
    log.info("wrote %s", out / name)


def _load_env(path: Path):
    mdp, spec, _ = env_from_json(path.read_text())
    return mdp, spec


def _run_dir_files(run: Path, config_name: str = "irl_config.json"):
    model = reward_from_csv((run / "reward.csv").read_text())
    cfg = IrlConfig.from_dict(json.loads((run / config_name).read_text()))
    policy = policy_from_csv((run / "policy.csv").read_text(), cfg.distortion, cfg.beta)
    critic = critic_from_csv((run / "critic.csv").read_text())
    return model, policy, critic, cfg


# -- subcommands ------------------------------------------------------------


def cmd_make_env(args) -> None:
    doc = _load_config(args.config)
    try:
        mdp, spec = make_env(doc)
    except KeyError as exc:
        raise UsageError(str(exc).strip("'\"")) from None
    out = _out_dir(args)
    _planned(out, ["env.json"], args.force)
    _write(out, "env.json", env_to_json(mdp, spec, {"config": doc}), args.force)


def cmd_train_expert(args) -> None:
    cfg = _dataclass_config(ExpertConfig, _load_config(args.config))
    mdp, spec = _load_env(_need(args.env, "--env"))
    out = _out_dir(args)
    names = ["expert_critic.csv", "expert_policy.csv", "expert_config.json"]
    _planned(out, names, args.force)
    critic, policy = train_expert(mdp, spec, cfg)
    _write(out, "expert_critic.csv", critic_to_csv(critic), args.force)
    _write(out, "expert_policy.csv", policy_to_csv(policy), args.force)
    _write(out, "expert_config.json", json.dumps(cfg.to_dict(), indent=1) + "\n", args.force)


def cmd_gen_demos(args) -> None:
    doc = _load_config(args.config)
    _check_keys(doc, DEMO_KEYS, "gen-demos")
    mdp, spec = _load_env(_need(args.env, "--env"))
    policy = policy_from_csv(_need(args.policy, "--policy").read_text())
    n_traj = int(doc.get("n_traj", 10))
    horizon = int(doc.get("horizon", 40))
    seed = int(doc.get("seed", 0))
    if n_traj < 1 or horizon < 1:
        raise ConfigurationError("n_traj and horizon must be >= 1")
    out = _out_dir(args)
    _planned(out, ["demos.txt"], args.force)
    demos = generate_demos(mdp, spec, policy, n_traj, horizon, seed, {"seed": seed, "source": "expert"})
    _write(out, "demos.txt", format_demos(demos), args.force)


def cmd_train_irl(args) -> None:
    cfg = _dataclass_config(IrlConfig, _load_config(args.config))
    demos = load_demos(_need(args.demos, "--demos"))
    out = _out_dir(args)
    names = ["reward.csv", "critic.csv", "policy.csv", "train_log.csv", "irl_config.json"]
    _planned(out, names, args.force)
    every = max(cfg.iterations // 10, 1)

    def progress(k, _result):
        if (k + 1) % every == 0:
            log.info("iteration %d/%d", k + 1, cfg.iterations)

    result = train((demos.n_states, demos.n_actions), demos, cfg, callback=progress)
    _write(out, "reward.csv", reward_to_csv(result.reward_model), args.force)
    _write(out, "critic.csv", critic_to_csv(result.critic), args.force)
    _write(out, "policy.csv", policy_to_csv(result.policy), args.force)
    _write(out, "train_log.csv", result.log.to_csv(), args.force)
    _write(out, "irl_config.json", json.dumps(cfg.to_dict(), indent=1) + "\n", args.force)


def cmd_eval(args) -> None:
    doc = _load_config(args.config)
    _check_keys(doc, EVAL_KEYS, "eval")
    mdp, spec = _load_env(_need(args.env, "--env"))
    model, policy, _, cfg = _run_dir_files(_need(args.run, "--run"))
    demos = load_demos(args.demos) if args.demos else None
    out = _out_dir(args)
    _planned(out, ["eval_pairs.csv", "eval_summary.csv"], args.force)
    report = evaluate(
        model,
        policy,
        mdp,
        spec,
        demos,
        distortion=parse_distortion(doc.get("distortion", cfg.distortion)),
        horizon=int(doc.get("horizon", cfg.horizon)),
        n_rollouts=int(doc.get("n_rollouts", 10_000)),
        n_atoms=int(doc.get("n_atoms", 200)),
        n_reward_samples=int(doc.get("n_reward_samples", 4000)),
        seed=int(doc.get("seed", 0)),
    )
    _write(out, "eval_pairs.csv", report.pairs_csv(), args.force)
    _write(out, "eval_summary.csv", report.summary_csv(), args.force)


def _cdf_text(values: np.ndarray, n_atoms: int) -> str:
    q = empirical_quantiles(values, n_atoms).values
    return cdf_to_csv(q, np.arange(1, q.size + 1) / q.size)


def cmd_export_cdf(args) -> None:
    doc = _load_config(args.config)
    _check_keys(doc, EXPORT_KEYS, "export-cdf")
    model, policy, critic, cfg = _run_dir_files(_need(args.run, "--run"))
    demos = load_demos(args.demos) if args.demos else None
    n_atoms = int(doc.get("n_atoms", 200))
    n_samples = int(doc.get("n_reward_samples", 4000))
    rng = np.random.default_rng(int(doc.get("seed", 0)))
    pairs = doc.get("pairs", "demo")
    if pairs == "demo":
        if demos is None:
            raise ConfigurationError("pairs='demo' needs --demos")
        counts = demos.state_action_counts()
        pairs = [list(p) for p in np.argwhere(counts > 0)]
    elif pairs == "all":
        pairs = [[s, a] for s in range(model.shape[0]) for a in range(model.shape[1])]
    out = _out_dir(args)
    files: dict[str, str] = {}
    signals: dict = {}
    if demos is not None and demos.has_signals:
        for tr in demos.trajectories:
            for s, a, x in zip(tr.states, tr.actions, tr.signals):
                signals.setdefault((int(s), int(a)), []).append(float(x))
    for s, a in pairs:
        s, a = int(s), int(a)
        if not (0 <= s < model.shape[0] and 0 <= a < model.shape[1]):
            raise ConfigurationError(f"pair ({s}, {a}) is outside the model's table")
        eps = rng.standard_normal((2, n_samples))
        r, _ = model.sample(np.full(n_samples, s), np.full(n_samples, a), eps[0], eps[1], with_grad=False)
        files[f"reward_s{s}_a{a}.csv"] = _cdf_text(r, n_atoms)
        if (s, a) in signals:
            files[f"signal_s{s}_a{a}.csv"] = _cdf_text(np.array(signals[(s, a)]), n_atoms)
        if hasattr(critic, "theta"):
            theta = critic.theta[s, a]
            files[f"critic_s{s}_a{a}.csv"] = cdf_to_csv(theta, np.arange(1, theta.size + 1) / theta.size)
    if args.env:
        mdp, spec = _load_env(Path(args.env))
        horizon = int(doc.get("horizon", cfg.horizon))
        z = policy_returns(mdp, policy, spec, horizon, int(doc.get("n_rollouts", 10_000)), rng)
        files["return_policy.csv"] = _cdf_text(z, n_atoms)
        if demos is not None:
            z_e = demo_returns(demos, mdp.gamma, horizon)
            if z_e is not None:
                files["return_demos.csv"] = _cdf_text(z_e, n_atoms)
    _planned(out, list(files), args.force)
    for name, text in files.items():
        _write(out, name, text, args.force)


def cmd_ablate(args) -> None:
    doc = _load_config(args.config)
    _check_keys(doc, ABLATE_KEYS, "ablate")
    base = _dataclass_config(IrlConfig, doc.get("base", {}))
    seeds = [int(s) for s in doc.get("seeds", [0])]
    configs = list(doc.get("configs", list(ABLATIONS)))
    mdp, spec = _load_env(_need(args.env, "--env"))
    out = _out_dir(args)
    _planned(out, ["ablation.csv", "ablation_summary.csv"], args.force)
    if args.demos:
        demos = load_demos(args.demos)
    else:
        # fresh expert and demos per seed
        expert_doc = dict(doc.get("expert", {}))
        demo_doc = dict(doc.get("demos", {}))
        _check_keys(demo_doc, DEMO_KEYS - {"seed"}, "ablate demos")

        def demos(seed):
            cfg = _dataclass_config(ExpertConfig, {**expert_doc, "seed": seed})
            _, policy = train_expert(mdp, spec, cfg)
            return generate_demos(
                mdp, spec, policy, int(demo_doc.get("n_traj", 10)), int(demo_doc.get("horizon", 40)), seed
            )

    rows = run_ablation(
        mdp,
        spec,
        demos,
        base,
        seeds,
        configs,
        score=doc.get("score", "mean"),
        eval_rollouts=int(doc.get("eval_rollouts", 10_000)),
        eval_horizon=doc.get("eval_horizon"),
        progress=lambda name, seed: log.info("ablation %s seed %d", name, seed),
    )
    _write(out, "ablation.csv", rows_to_csv(rows), args.force)
    means = {c: float(np.mean([r.score for r in rows if r.config == c])) for c in configs}
    scaled = min_max_scale(list(means.values()))
    lines = ["config,mean_score,scaled"] + [f"{c},{means[c]!r},{float(x)!r}" for c, x in zip(configs, scaled)]
    _write(out, "ablation_summary.csv", "\n".join(lines) + "\n", args.force)


COMMANDS = {
    "make-env": (cmd_make_env, "build an environment file from a config", ()),
    "train-expert": (cmd_train_expert, "train a risk-averse expert on an environment", ("env",)),
    "gen-demos": (cmd_gen_demos, "roll out an expert policy into a demonstration file", ("env", "policy")),
    "train-irl": (cmd_train_irl, "learn a reward distribution from demonstrations", ("demos",)),
    "eval": (cmd_eval, "compare a trained run with the true environment", ("env", "run", "demos")),
    "export-cdf": (cmd_export_cdf, "write CDF tables for plotting", ("run", "demos", "env")),
    "ablate": (cmd_ablate, "run the six-configuration ablation grid", ("env", "demos")),
}

_INPUT_HELP = {
    "env": "environment file written by make-env",
    "policy": "policy table (e.g. expert_policy.csv)",
    "demos": "demonstration file",
    "run": "directory written by train-irl",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="distirl", description="Distributional inverse RL for tabular MDPs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, (_, help_text, inputs) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV_VAR}/{name} or runs/{name})")
        p.add_argument("--force", action="store_true", help="overwrite existing outputs")
        p.add_argument("-q", "--quiet", action="store_true", help="only print errors")
        for inp in inputs:
            p.add_argument(f"--{inp}", help=_INPUT_HELP[inp])
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s", stream=sys.stderr
    )
    handler = COMMANDS[args.command][0]
    try:
        handler(args)
    except UsageError as exc:
        print(f"distirl {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (
        ConfigurationError,
        DemoParseError,
        TrainingError,
        FileNotFoundError,
        FileExistsError,
        ValueError,
        TypeError,
        OSError,
    ) as exc:
        print(f"distirl {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
