"""Per-episode and per-checkpoint metrics shared by every learner."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1


@dataclass
class EpisodeRow:
    episode: int
    steps: int
    ret: float
    requested: np.ndarray
    executed: np.ndarray
    ptilde: np.ndarray
    mu: np.ndarray
    walltime_ms: float = 0.0


@dataclass
class CheckpointRow:
    checkpoint: int
    steps: int
    mean_return: float
    std_return: float
    sparse_exec_freq: float


@dataclass
class RunRecord:
    num_actions: int
    sparse_actions: tuple[int, ...] = ()
    agent: str = ""
    seed: int = 0
    episodes: list[EpisodeRow] = field(default_factory=list)
    checkpoints: list[CheckpointRow] = field(default_factory=list)

    def episode_header(self) -> list[str]:
        n = range(self.num_actions)
        return (["episode", "steps", "return"]
                + [f"req_a{i}" for i in n] + [f"exec_a{i}" for i in n]
                + [f"ptilde_a{i}" for i in n] + [f"mu_a{i}" for i in n] + ["walltime_ms"])

    def episode_rows(self) -> list[list[str]]:
        return [[str(r.episode), str(r.steps), _fmt(r.ret)]
                + [str(int(x)) for x in r.requested] + [str(int(x)) for x in r.executed]
                + [_fmt(x) for x in r.ptilde] + [_fmt(x) for x in r.mu] + [_fmt(r.walltime_ms)]
                for r in self.episodes]

    def write_episodes_csv(self, path) -> Path:
        return _write_csv(path, self.episode_header(), self.episode_rows())

    def write_checkpoints_csv(self, path) -> Path:
        header = ["checkpoint", "steps", "mean_return", "std_return", "sparse_exec_freq"]
        rows = [[str(c.checkpoint), str(c.steps), _fmt(c.mean_return), _fmt(c.std_return),
                 _fmt(c.sparse_exec_freq)] for c in self.checkpoints]
        return _write_csv(path, header, rows)

    @property
    def total_steps(self) -> int:
        return self.episodes[-1].steps if self.episodes else 0

    def exploration_frequency(self, actions=None) -> float:
        """Executed count of ``actions`` over decision steps of completed training episodes."""
        actions = self.sparse_actions if actions is None else tuple(actions)
        if not self.episodes:
            return 0.0
        executed = sum(int(r.executed[list(actions)].sum()) for r in self.episodes)
        steps = sum(int(r.executed.sum()) for r in self.episodes)
        return executed / steps if steps else 0.0

    def final_score(self, last: int = 5) -> float:
        """Mean evaluation return over the last ``last`` checkpoints."""
        if not self.checkpoints:
            raise ValueError("record has no evaluation checkpoints")
        return float(np.mean([c.mean_return for c in self.checkpoints[-last:]]))


def _fmt(x: float) -> str:
    x = float(x)
    if np.isnan(x):
        return "nan"
    return repr(x)


def _write_csv(path, header, rows) -> Path:
    path = Path(path)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    return rows[0], rows[1:]
