"""Seeded experiment runner: training curves, reward totals and CSV output.

Run ``r`` draws its target with seed ``seed + r`` and drives its agent with
seed ``seed + 10_000 + r``, so agents and action modes can be compared on
identical targets.
"""
from __future__ import annotations

import configparser
import csv
import dataclasses
import io
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import agent as A
from . import env as E
from . import numerics as nx
from . import qnet
from .dag import random_target, serialize

log = logging.getLogger(__name__)

AGENTS = ("random", "dqn", "dqn-per")
CSV_COLUMNS = ("run", "episode", "train_reward", "greedy_success", "epsilon", "mean_loss")
OUTPUT_ENV = "DAGDQN_OUTPUT_DIR"
AGENT_SEED_OFFSET = 10_000


@dataclass
class ExperimentConfig:
    n: int = 4
    b: int = 1
    episodes: int = 10_000
    runs: int = 20
    agents: tuple[str, ...] = ("random", "dqn", "dqn-per")
    action_mode: str = E.EDGE_SET
    seed: int = 0
    output_dir: str | None = None
    workers: int = 1
    dqn: A.DqnConfig = field(default_factory=A.DqnConfig)
    dqn_per: A.DqnConfig = field(default_factory=lambda: A.DqnConfig(per_enabled=True))

    def __post_init__(self) -> None:
        if self.episodes < 1 or self.runs < 1:
            raise ValueError("episodes and runs must be >= 1")
        if self.n < 1 or self.b < 1:
            raise ValueError("n and b must be >= 1")
        unknown = set(self.agents) - set(AGENTS)
        if unknown:
            raise ValueError(f"unknown agents {sorted(unknown)}; choose from {AGENTS}")
        if self.action_mode not in E.MODES:
            raise ValueError(f"action_mode must be one of {E.MODES}")

    def agent_config(self, agent: str) -> A.DqnConfig:
        return self.dqn_per if agent == "dqn-per" else self.dqn

    def target_for(self, run: int):
        return random_target(self.n, self.b, np.random.default_rng(self.seed + run))


@dataclass
class RunResult:
    run: int
    agent: str
    target: str
    train_rewards: list[float]
    greedy_success: list[int]
    epsilons: list[float]
    mean_losses: list[float]

    @property
    def train_total(self) -> float:
        return float(sum(self.train_rewards))

    @property
    def greedy_total(self) -> int:
        return int(sum(self.greedy_success))


@dataclass
class AgentSummary:
    agent: str
    action_mode: str
    runs: list[RunResult]

    @property
    def train_totals(self) -> list[float]:
        return [r.train_total for r in self.runs]

    @property
    def mean_train_total(self) -> float:
        return float(np.mean(self.train_totals))

    @property
    def mean_greedy_total(self) -> float:
        return float(np.mean([r.greedy_total for r in self.runs]))

    def success_curve(self) -> np.ndarray:
        """Mean greedy success per episode index across runs."""
        return np.mean([r.greedy_success for r in self.runs], axis=0)


def run_single(config: ExperimentConfig, agent_name: str, run: int) -> RunResult:
    """Train one agent on run ``run``'s target, evaluating greedily after every episode.

    The random agent has no greedy policy; its greedy column repeats the
    success of its own episode.
    """
    return train_run(config, agent_name, run)[0]


def train_run(config: ExperimentConfig, agent_name: str, run: int) -> tuple[RunResult, A.DqnAgent | None]:
    target = config.target_for(run)
    env = E.EnvConfig(target, mode=config.action_mode)
    rng = np.random.default_rng(config.seed + AGENT_SEED_OFFSET + run)
    result = RunResult(run, agent_name, serialize(target), [], [], [], [])
    if agent_name == "random":
        for _ in range(config.episodes):
            rec = A.run_episode(env, A.RANDOM, rng)
            result.train_rewards.append(rec.total_reward)
            result.greedy_success.append(int(rec.success))
            result.epsilons.append(1.0)
            result.mean_losses.append(math.nan)
        return result, None
    dqn = config.agent_config(agent_name)
    agent = A.DqnAgent(env, dqn, rng)
    for episode in range(config.episodes):
        eps = dqn.epsilon(episode, config.episodes)
        rec = A.run_episode(env, A.TRAIN, rng, agent, eps)
        greedy = A.run_episode(env, A.GREEDY, rng, agent)
        result.train_rewards.append(rec.total_reward)
        result.greedy_success.append(int(greedy.success))
        result.epsilons.append(eps)
        result.mean_losses.append(rec.mean_loss)
    return result, agent


def _run_job(args: tuple[ExperimentConfig, str, int]) -> RunResult:
    return run_single(*args)


def run_agent(config: ExperimentConfig, agent_name: str) -> AgentSummary:
    jobs = [(config, agent_name, r) for r in range(config.runs)]
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = [_run_job(j) for j in jobs]
    results.sort(key=lambda r: r.run)
    return AgentSummary(agent_name, config.action_mode, results)


def _fmt(x: float) -> str:
    return repr(float(x)) if not math.isnan(x) else "nan"


def records_csv(summary: AgentSummary) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in summary.runs:
        for ep in range(len(r.train_rewards)):
            w.writerow(
                [r.run, ep, _fmt(r.train_rewards[ep]), r.greedy_success[ep], _fmt(r.epsilons[ep]), _fmt(r.mean_losses[ep])]
            )
    return buf.getvalue()


def summary_csv(summaries: Sequence[AgentSummary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["agent", "action_mode", "runs", "mean_train_total", "mean_greedy_total", "run_train_totals", "targets"])
    for s in summaries:
        w.writerow(
            [
                s.agent,
                s.action_mode,
                len(s.runs),
                _fmt(s.mean_train_total),
                _fmt(s.mean_greedy_total),
                ";".join(_fmt(t) for t in s.train_totals),
                " | ".join(r.target for r in s.runs),
            ]
        )
    return buf.getvalue()


def output_dir(config: ExperimentConfig) -> Path | None:
    d = os.environ.get(OUTPUT_ENV) or config.output_dir
    return Path(d) if d else None


def run_experiment(config: ExperimentConfig) -> list[AgentSummary]:
    """Train every configured agent on matched targets and write CSVs."""
    summaries = []
    for name in config.agents:
        log.info("running %s: n=%d b=%d, %d runs x %d episodes", name, config.n, config.b, config.runs, config.episodes)
        summaries.append(run_agent(config, name))
    out = output_dir(config)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        for s in summaries:
            (out / f"{s.agent}-{s.action_mode}.csv").write_text(records_csv(s))
        (out / "summary.csv").write_text(summary_csv(summaries))
    return summaries


def compare_action_modes(config: ExperimentConfig, agent_name: str = "dqn") -> dict[str, AgentSummary]:
    """Run one agent under both action encodings with identical targets and seeds."""
    results = {}
    for mode in E.MODES:
        cfg = dataclasses.replace(config, action_mode=mode, agents=(agent_name,), output_dir=None)
        results[mode] = run_agent(cfg, agent_name)
    out = output_dir(config)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        for mode, s in results.items():
            (out / f"{agent_name}-{mode}.csv").write_text(records_csv(s))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["episode", "edge_set_success", "single_success"])
        curves = [results[m].success_curve() for m in E.MODES]
        for ep, (x, y) in enumerate(zip(*curves)):
            w.writerow([ep, _fmt(x), _fmt(y)])
        (out / "compare-actions.csv").write_text(buf.getvalue())
        (out / "summary.csv").write_text(summary_csv(list(results.values())))
    return results


def moving_average(series: Sequence[float], window: int = 50) -> np.ndarray:
    """Trailing mean; the first ``window - 1`` entries average the available prefix."""
    if window < 1:
        raise ValueError("window must be >= 1")
    x = np.asarray(series, dtype=np.float64)
    if x.size == 0:
        raise ValueError("moving_average of an empty series")
    c = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(1, x.size + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def gradient_check(trials: int = 100, seed: int = 0, eps: float = 1e-5) -> float:
    """Worst relative error of network gradients against central differences.

    Each trial draws a random graph, random widths and random weights and
    biases; non-zero biases keep ReLU inputs away from their kink.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        b = int(rng.integers(1, 4))
        cfg = qnet.QNetConfig(b, *(int(w) for w in rng.integers(2, 7, size=3)))
        params = qnet.QNetParams({k: rng.normal(scale=0.5, size=s) for k, s in cfg.shapes().items()})
        dag = random_target(int(rng.integers(1, 7)), b, rng)
        _, grads = qnet.forward_grad(params, dag)
        err = nx.finite_diff_check(lambda a: qnet.forward(qnet.QNetParams(a), dag), params.arrays, grads, eps)
        worst = max(worst, err)
    return worst


# ---------------------------------------------------------------- config files

_EXPERIMENT_KEYS = {f.name: f for f in dataclasses.fields(ExperimentConfig) if f.name not in ("dqn", "dqn_per")}
_DQN_FIELDS = {f.name: f for f in dataclasses.fields(A.DqnConfig)}


def _coerce(text: str, current):
    if isinstance(current, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if isinstance(current, int):
        return int(text)
    if isinstance(current, float):
        return float(text)
    if isinstance(current, tuple):
        return tuple(s.strip() for s in text.split(",") if s.strip())
    if current is None and text.lower() in ("", "none"):
        return None
    return text


def _dqn_from_section(base: A.DqnConfig, section) -> A.DqnConfig:
    changes = {}
    for key, value in section.items():
        key = key.replace("-", "_")
        if key not in _DQN_FIELDS:
            raise ValueError(f"unknown dqn setting {key!r}")
        current = getattr(base, key)
        if key == "epsilon_decay_episodes":
            changes[key] = None if value.lower() in ("", "none") else int(value)
        else:
            changes[key] = _coerce(value, current)
    return dataclasses.replace(base, **changes)


def load_config(path: str | Path, overrides: dict | None = None) -> ExperimentConfig:
    """Read a key=value config with ``[experiment]``, ``[dqn]`` and ``[dqn-per]`` sections."""
    parser = configparser.ConfigParser()
    with open(path) as fh:
        parser.read_file(fh)
    base = ExperimentConfig()
    changes = {}
    if parser.has_section("experiment"):
        for key, value in parser["experiment"].items():
            key = key.replace("-", "_")
            if key not in _EXPERIMENT_KEYS:
                raise ValueError(f"unknown experiment setting {key!r}")
            changes[key] = _coerce(value, getattr(base, key))
    if parser.has_section("dqn"):
        changes["dqn"] = _dqn_from_section(base.dqn, parser["dqn"])
    if parser.has_section("dqn-per"):
        per_base = dataclasses.replace(changes.get("dqn", base.dqn), per_enabled=True)
        changes["dqn_per"] = _dqn_from_section(per_base, parser["dqn-per"])
    elif "dqn" in changes:
        changes["dqn_per"] = dataclasses.replace(changes["dqn"], per_enabled=True)
    changes.update(overrides or {})
    return dataclasses.replace(base, **changes)
