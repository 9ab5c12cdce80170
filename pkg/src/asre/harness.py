"""Experiment configuration, multi-seed orchestration and CSV output."""
from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from .agent import AgentConfig, train
from .baselines import BaselineConfig, egreedy_q_train, prior_penalty_train, softq_train
from .envs import EnvSpec
from .learner import EvalProtocol
from .mdp import ContractError
from .records import SCHEMA_VERSION, RunRecord, _fmt, _write_csv

AGENTS = ("asre", "egreedy", "softq", "prior_penalty")

# Small-table settings that converge in tens of thousands of steps. The
# "paper" preset keeps the network-scale defaults of the config classes.
PRESETS = {
    "desk": {"learn_rate": 0.1, "batch_size": 32, "polyak": 0.05},
    "paper": {},
}
DESK_ROUND_EPISODES = 5


@dataclass
class ExperimentConfig:
    env: EnvSpec = field(default_factory=lambda: EnvSpec("budgeted_shooter"))
    agent: str = "asre"
    overrides: dict = field(default_factory=dict)
    total_steps: int = 20_000
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    output_dir: str = "runs"
    eval: EvalProtocol = field(default_factory=lambda: EvalProtocol(2000, 20))
    preset: str = "desk"
    workers: int = 1

    def __post_init__(self):
        self.seeds = tuple(int(s) for s in self.seeds)
        self.validate()

    def validate(self):
        if self.agent not in AGENTS:
            raise ContractError(f"unknown agent {self.agent!r}; choose from {AGENTS}")
        if not self.seeds:
            raise ContractError("seeds must be non-empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ContractError("seeds must be distinct")
        if self.total_steps <= 0:
            raise ContractError("total_steps must be positive")
        if self.preset not in PRESETS:
            raise ContractError(f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}")
        if self.eval.interval <= 0 or self.eval.episodes <= 0:
            raise ContractError("eval interval and episodes must be positive")
        if self.workers < 1:
            raise ContractError("workers must be >= 1")

    def replace(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, **changes)

    def learner_config(self):
        """Build the AgentConfig or BaselineConfig for this run."""
        base = dict(PRESETS[self.preset])
        if self.agent == "asre":
            cls = AgentConfig
            if self.preset == "desk":
                base["eval_episodes"] = DESK_ROUND_EPISODES
        else:
            cls = BaselineConfig
        params = {**base, **self.overrides}
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(params) - names)
        if unknown:
            raise ContractError(f"unknown {self.agent} settings: {', '.join(unknown)}")
        if params.get("frozen_prior") is not None:
            params["frozen_prior"] = tuple(params["frozen_prior"])
        cfg = cls(**params)
        try:
            cfg.validate()
        except TypeError as exc:
            # e.g. a string where a number belongs
            raise ContractError(f"bad {self.agent} setting type: {exc}") from None
        return cfg

    def to_dict(self) -> dict:
        return {
            "experiment": {
                "agent": self.agent, "total_steps": self.total_steps, "seeds": list(self.seeds),
                "output_dir": self.output_dir, "preset": self.preset, "workers": self.workers,
            },
            "env": self.env.to_dict(),
            "eval": {"interval": self.eval.interval, "episodes": self.eval.episodes},
            "agent": {k: list(v) if isinstance(v, tuple) else v for k, v in self.overrides.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        data = {k: dict(v) for k, v in data.items()}
        known = {"experiment", "env", "eval", "agent"}
        if set(data) - known:
            raise ContractError(f"unknown config sections: {sorted(set(data) - known)}")
        exp = data.get("experiment", {})
        allowed = {"agent", "total_steps", "seeds", "output_dir", "preset", "workers"}
        if set(exp) - allowed:
            raise ContractError(f"unknown experiment keys: {sorted(set(exp) - allowed)}")
        ev = data.get("eval", {})
        if set(ev) - {"interval", "episodes"}:
            raise ContractError(f"unknown eval keys: {sorted(set(ev) - {'interval', 'episodes'})}")
        env = data.get("env", {"name": "budgeted_shooter"})
        if "name" not in env:
            raise ContractError("env section needs a name")
        try:
            return cls(
                env=EnvSpec.from_dict(env),
                overrides=data.get("agent", {}),
                eval=EvalProtocol(int(ev.get("interval", 2000)), int(ev.get("episodes", 20))),
                **exp,
            )
        except TypeError as exc:
            raise ContractError(str(exc)) from None

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())


def parse_override(text: str) -> tuple[list[str], object]:
    """``section.key=value`` with a TOML value; bare words are taken as strings."""
    if "=" not in text:
        raise ContractError(f"override {text!r} is not of the form section.key=value")
    path, raw = text.split("=", 1)
    keys = path.strip().split(".")
    if len(keys) < 2 or not all(keys):
        raise ContractError(f"override {text!r} needs a section and a key")
    try:
        value = tomli.loads(f"v = {raw.strip()}")["v"]
    except tomli.TOMLDecodeError:
        value = raw.strip()
    return keys, value


def load_config(path=None, overrides=()) -> ExperimentConfig:
    """Read a TOML config (or start from defaults) and apply ``--set`` overrides."""
    data: dict = {}
    if path is not None:
        try:
            data = tomli.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ContractError(f"cannot read config: {exc}") from None
        except tomli.TOMLDecodeError as exc:
            raise ContractError(f"invalid TOML in {path}: {exc}") from None
    for text in overrides:
        keys, value = parse_override(text)
        node = data
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ContractError(f"override {text!r} descends into a value")
        node[keys[-1]] = value
    return ExperimentConfig.from_dict(data)


def train_one(config: ExperimentConfig, seed: int) -> RunRecord:
    mdp = config.env.build()
    cfg = config.learner_config()
    steps, protocol = config.total_steps, config.eval
    if config.agent == "asre":
        return train(mdp, cfg, steps, seed, protocol).record
    if config.agent == "egreedy":
        return egreedy_q_train(mdp, cfg, steps, seed, protocol)[1]
    if config.agent == "softq":
        return softq_train(mdp, cfg, steps, seed, protocol)[1]
    return prior_penalty_train(mdp, cfg, None, steps, seed, protocol)[1]


def _train_task(args):
    return train_one(*args)


def train_all(config: ExperimentConfig) -> list[RunRecord]:
    tasks = [(config, s) for s in config.seeds]
    if config.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(config.workers, len(tasks))) as pool:
            return list(pool.map(_train_task, tasks))
    return [_train_task(t) for t in tasks]


def mean_std(values) -> tuple[float, float]:
    """Arithmetic mean and population std; exactly zero std when all values coincide."""
    v = np.asarray(values, dtype=float)
    if np.all(v == v[0]):
        return float(v[0]), 0.0
    return float(v.mean()), float(v.std())


def aggregate_rows(records: list[RunRecord]) -> tuple[list[str], list[list[str]]]:
    """Per-checkpoint evaluation returns: one column per seed, then mean and std."""
    counts = {len(r.checkpoints) for r in records}
    if len(counts) != 1:
        raise ContractError("records disagree on the number of checkpoints")
    header = (["checkpoint", "steps"] + [f"seed_{r.seed}" for r in records]
              + ["mean", "std", "mean_sparse_exec_freq"])
    rows = []
    for i in range(counts.pop()):
        vals = [r.checkpoints[i].mean_return for r in records]
        mean, std = mean_std(vals)
        freq = float(np.mean([r.checkpoints[i].sparse_exec_freq for r in records]))
        rows.append([str(i), str(records[0].checkpoints[i].steps)] + [_fmt(v) for v in vals]
                    + [_fmt(mean), _fmt(std), _fmt(freq)])
    return header, rows


def seed_csv_path(out: Path, seed: int) -> Path:
    return out / f"seed_{seed}.csv"


def run_experiment(config: ExperimentConfig, emit_svg: bool = True) -> list[RunRecord]:
    """Train every seed and write one episode CSV per seed plus ``aggregate.csv``."""
    out = Path(config.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ContractError(f"cannot create output directory {out}: {exc}") from None
    records = train_all(config)
    for rec in records:
        rec.write_episodes_csv(seed_csv_path(out, rec.seed))
    header, rows = aggregate_rows(records)
    _write_csv(out / "aggregate.csv", header, rows)
    (out / "config.toml").write_text(
        f"# schema {SCHEMA_VERSION}\n" + config.to_toml(), encoding="utf-8")
    if emit_svg:
        from .plots import emit_plots
        emit_plots({config.agent: records}, out)
    return records


def summarize(records: list[RunRecord]) -> dict:
    """Final score per seed (NaN without checkpoints), its mean/std and exploration frequency."""
    scores = [r.final_score() if r.checkpoints else float("nan") for r in records]
    mean, std = mean_std(scores)
    return {
        "final_mean": mean, "final_std": std, "scores": scores,
        "exploration_freq": float(np.mean([r.exploration_frequency() for r in records])),
    }


def compare(config: ExperimentConfig, agents=AGENTS) -> dict[str, list[RunRecord]]:
    """Run several agents on the same environment, each in its own subdirectory."""
    if not agents:
        raise ContractError("need at least one agent")
    out = Path(config.output_dir)
    results = {}
    for name in agents:
        # overrides belong to the agent named in the config
        extra = config.overrides if name == config.agent else {}
        sub = config.replace(agent=name, overrides=extra, output_dir=str(out / name))
        results[name] = run_experiment(sub, emit_svg=False)
    rows = []
    for name, recs in results.items():
        s = summarize(recs)
        rows.append([name, _fmt(s["final_mean"]), _fmt(s["final_std"]), _fmt(s["exploration_freq"])])
    _write_csv(out / "compare.csv", ["agent", "final_mean", "final_std", "exploration_freq"], rows)
    from .plots import emit_plots
    emit_plots(results, out)
    return results


def lambda_sweep(config: ExperimentConfig, lambdas) -> list[dict]:
    """Final score (mean of the last 5 checkpoints) per lambda, mean and std over seeds."""
    lambdas = [float(x) for x in lambdas]
    if not lambdas:
        raise ContractError("lambdas must be non-empty")
    if config.agent != "asre":
        raise ContractError("the lambda sweep applies to the asre agent")
    out = Path(config.output_dir)
    table = []
    for lam in lambdas:
        sub = config.replace(overrides={**config.overrides, "lam": lam},
                             output_dir=str(out / f"lambda_{lam!r}"))
        s = summarize(run_experiment(sub, emit_svg=False))
        table.append({"lambda": lam, "mean": s["final_mean"], "std": s["final_std"],
                      "scores": s["scores"]})
    header = ["lambda", "mean", "std"] + [f"seed_{s}" for s in config.seeds]
    rows = [[_fmt(r["lambda"]), _fmt(r["mean"]), _fmt(r["std"])] + [_fmt(v) for v in r["scores"]]
            for r in table]
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "lambda_sweep.csv", header, rows)
    return table
