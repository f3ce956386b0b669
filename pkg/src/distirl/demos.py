"""Line-delimited demonstration files.

Layout::

    # distirl-demos n_states=25 n_actions=4
    # meta source=expert
    episode,t,state,action[,signal]
    0,0,10,3
    0,1,11,3,0.25

The first line is the header. ``# meta key=value`` lines are optional
metadata. Each remaining line is one step; an episode's steps appear in
order with ``t`` counting from 0. The signal column is optional, but an
episode either has it on every step or on none.
"""

from __future__ import annotations

import re
from pathlib import Path
from typing import Union

import numpy as np

from .errors import DemoParseError
from .mdp import DemoSet, Trajectory

__all__ = ["save_demos", "load_demos", "format_demos", "parse_demos"]

_HEADER = re.compile(r"^#\s*distirl-demos\s+n_states=(\d+)\s+n_actions=(\d+)\s*$")
_COLUMNS = "episode,t,state,action[,signal]"


def format_demos(demos: DemoSet) -> str:
    lines = [f"# distirl-demos n_states={demos.n_states} n_actions={demos.n_actions}"]
    for key in sorted(demos.metadata):
        value = str(demos.metadata[key])
        if "\n" in value or "=" in str(key) or not str(key).strip() or " " in str(key):
            raise ValueError(f"metadata entry {key!r} cannot be written on one line")
        lines.append(f"# meta {key}={value}")
    lines.append(_COLUMNS)
    for ep, tr in enumerate(demos.trajectories):
        for t in range(len(tr)):
            rec = f"{ep},{t},{tr.states[t]},{tr.actions[t]}"
            if tr.signals is not None:
                rec += f",{float(tr.signals[t])!r}"
            lines.append(rec)
    return "\n".join(lines) + "\n"


def save_demos(demos: DemoSet, path: Union[str, Path]) -> None:
    Path(path).write_text(format_demos(demos))


def parse_demos(text: str) -> DemoSet:
    lines = text.splitlines()
    if not lines:
        raise DemoParseError(1, "empty file; expected a distirl-demos header")
    m = _HEADER.match(lines[0].strip())
    if m is None:
        raise DemoParseError(1, "missing header '# distirl-demos n_states=<int> n_actions=<int>'")
    n_states, n_actions = int(m.group(1)), int(m.group(2))
    if n_states < 1 or n_actions < 1:
        raise DemoParseError(1, "n_states and n_actions must be positive")

    metadata: dict = {}
    episodes: list[tuple[list[int], list[int], list[float], bool]] = []
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("meta "):
                key, sep, value = body[5:].partition("=")
                if not sep:
                    raise DemoParseError(lineno, "metadata line needs key=value")
                metadata[key.strip()] = value
            continue
        if line.replace(" ", "") == _COLUMNS:
            continue
        fields = [f.strip() for f in line.split(",")]
        if len(fields) not in (4, 5):
            raise DemoParseError(lineno, f"expected 4 or 5 comma-separated fields, got {len(fields)}")
        try:
            ep, t, s, a = (int(f) for f in fields[:4])
        except ValueError:
            raise DemoParseError(lineno, "episode, t, state and action must be integers") from None
        signal = None
        if len(fields) == 5:
            try:
                signal = float(fields[4])
            except ValueError:
                raise DemoParseError(lineno, f"signal {fields[4]!r} is not a number") from None
        if not 0 <= s < n_states:
            raise DemoParseError(lineno, f"state {s} outside [0, {n_states})")
        if not 0 <= a < n_actions:
            raise DemoParseError(lineno, f"action {a} outside [0, {n_actions})")
        if ep == len(episodes):
            if t != 0:
                raise DemoParseError(lineno, f"episode {ep} must start at t=0, got t={t}")
            episodes.append(([], [], [], signal is not None))
        elif ep != len(episodes) - 1:
            raise DemoParseError(lineno, f"episode {ep} out of order (expected {len(episodes) - 1} or {len(episodes)})")
        states, actions, signals, has_signal = episodes[ep]
        if t != len(states):
            raise DemoParseError(lineno, f"episode {ep} expected t={len(states)}, got t={t}")
        if has_signal != (signal is not None):
            raise DemoParseError(lineno, f"episode {ep} mixes steps with and without a signal")
        states.append(s)
        actions.append(a)
        if signal is not None:
            signals.append(signal)
    if not episodes:
        raise DemoParseError(len(lines), "no demonstration records")
    trajectories = [
        Trajectory(np.array(s), np.array(a), np.array(sig) if has else None)
        for s, a, sig, has in episodes
    ]
    return DemoSet(trajectories, n_states, n_actions, metadata)


def load_demos(path: Union[str, Path]) -> DemoSet:
    return parse_demos(Path(path).read_text())
