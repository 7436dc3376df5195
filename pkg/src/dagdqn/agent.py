"""Epsilon-greedy deep Q-learning with a target network and optional replay.

Updates are online: one gradient step on the transition just observed, plus
``per_replays_per_step`` replayed transitions when replay is enabled.
Replayed transitions are sampled with probability increasing in their reward
and in how recently they were stored.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import env as E
from . import numerics as nx
from . import qnet
from .dag import Dag

PER_FLOOR = 1e-3


@dataclass
class DqnConfig:
    gamma: float = 0.99
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    # None: decay over the first half of the training episodes
    epsilon_decay_episodes: int | None = None
    learning_rate: float = 1e-2
    target_sync_episodes: int = 50
    loss: str = "squared"
    per_enabled: bool = False
    per_replays_per_step: int = 30
    per_capacity: int = 10_000
    per_reward_weight: float = 10.0
    per_recency_weight: float = 1.0
    d1: int = 32
    d2: int = 32
    d3: int = 32

    def __post_init__(self) -> None:
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        for name in ("epsilon_start", "epsilon_end"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.loss not in ("squared", "absolute"):
            raise ValueError("loss must be 'squared' or 'absolute'")
        if self.learning_rate <= 0 or self.target_sync_episodes < 1:
            raise ValueError("learning_rate and target_sync_episodes must be positive")
        if self.per_replays_per_step < 0 or self.per_capacity < 1:
            raise ValueError("invalid replay settings")

    def epsilon(self, episode: int, total_episodes: int) -> float:
        """Linear decay from start to end, flat afterwards."""
        decay = self.epsilon_decay_episodes
        if decay is None:
            decay = max(1, total_episodes // 2)
        if decay <= 0 or episode >= decay:
            return self.epsilon_end
        frac = episode / decay
        return self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac


@dataclass
class Transition:
    state: Dag
    action: E.Action
    reward: float
    next_state: Dag
    terminal: bool
    priority: float = 0.0
    age: int = 0


class SGD:
    def __init__(self, learning_rate: float):
        self.learning_rate = learning_rate

    def step(self, params: qnet.QNetParams, grads: dict[str, np.ndarray]) -> None:
        for k, g in grads.items():
            params.arrays[k] -= self.learning_rate * g


def select_action(
    state: Dag, params: qnet.QNetParams, config: E.EnvConfig, epsilon: float, rng: np.random.Generator
) -> E.Action:
    actions, _ = qnet.successors(state, config)
    if rng.random() < epsilon:
        return actions[int(rng.integers(len(actions)))]
    q = qnet.evaluate_actions(params, state, actions, config)
    # np.argmax returns the first maximum, i.e. the lowest action index
    return actions[int(np.argmax(q))]


def td_target(
    reward: float, next_state: Dag, terminal: bool, target_params: qnet.QNetParams, config: E.EnvConfig, gamma: float
) -> float:
    if terminal:
        return reward
    actions, _ = qnet.successors(next_state, config)
    return reward + gamma * float(np.max(qnet.evaluate_actions(target_params, next_state, actions, config)))


def train_step(
    policy: qnet.QNetParams,
    transition: Transition,
    target_params: qnet.QNetParams,
    optimizer: SGD,
    config: E.EnvConfig,
    dqn: DqnConfig,
    y: float | None = None,
) -> float:
    """One gradient step on a single transition; returns the loss before the step.

    ``y`` is the TD target if already known; otherwise it is computed from
    ``target_params``.
    """
    if y is None:
        y = td_target(transition.reward, transition.next_state, transition.terminal, target_params, config, dqn.gamma)
    tape = nx.Tape()
    q, _ = qnet.trace(tape, policy, transition.next_state.features, transition.next_state.adj)
    delta = nx.sub(q, tape.constant(y))
    if dqn.loss == "squared":
        loss = nx.scale(nx.square(delta), 0.5)
    else:
        loss = nx.absolute(delta)
    grads = nx.backward(tape, loss)
    optimizer.step(policy, grads)
    return float(loss.value[0, 0])


class ReplayBuffer:
    """FIFO store sampled by a blend of reward and recency."""

    def __init__(self, capacity: int, reward_weight: float = 10.0, recency_weight: float = 1.0):
        self.items: deque[Transition] = deque(maxlen=capacity)
        self.reward_weight = reward_weight
        self.recency_weight = recency_weight
        self._age = 0

    def __len__(self) -> int:
        return len(self.items)

    def insert(self, transition: Transition) -> None:
        transition.age = self._age
        self._age += 1
        transition.priority = self.reward_weight * transition.reward
        self.items.append(transition)

    def weights(self) -> np.ndarray:
        ages = np.array([t.age for t in self.items], dtype=np.float64)
        rewards = np.array([t.reward for t in self.items], dtype=np.float64)
        recency = (ages - ages.min()) / (ages.max() - ages.min() + 1.0)
        return self.reward_weight * rewards + self.recency_weight * recency + PER_FLOOR

    def sample(self, m: int, rng: np.random.Generator) -> list[Transition]:
        if not self.items:
            raise IndexError("cannot sample from an empty replay buffer")
        w = self.weights()
        idx = rng.choice(len(w), size=m, replace=True, p=w / w.sum())
        return [self.items[i] for i in idx]


@dataclass
class EpisodeRecord:
    total_reward: float
    success: bool
    steps: int
    updates: int
    losses: list[float] = field(default_factory=list)
    epsilon: float = 0.0
    final_state: Dag | None = None
    actions: list = field(default_factory=list)

    @property
    def mean_loss(self) -> float:
        return float(np.mean(self.losses)) if self.losses else math.nan


class DqnAgent:
    """Policy and target networks plus optional replay, for one environment."""

    def __init__(self, config: E.EnvConfig, dqn: DqnConfig, rng: np.random.Generator):
        self.env = config
        self.dqn = dqn
        self.rng = rng
        self.policy = qnet.init_params(qnet.QNetConfig(config.b, dqn.d1, dqn.d2, dqn.d3), rng)
        self.target = self.policy.copy()
        self.optimizer = SGD(dqn.learning_rate)
        self.buffer = ReplayBuffer(dqn.per_capacity, dqn.per_reward_weight, dqn.per_recency_weight)
        self.train_episodes = 0
        # bootstrap values max_a Q_target(s, a); valid until the next sync
        self._bootstrap: dict[Dag, float] = {}

    def td_target(self, transition: Transition) -> float:
        if transition.terminal:
            return transition.reward
        s = transition.next_state
        if s not in self._bootstrap:
            self._bootstrap[s] = td_target(0.0, s, False, self.target, self.env, 1.0)
        return transition.reward + self.dqn.gamma * self._bootstrap[s]

    def _update(self, transition: Transition) -> float:
        y = self.td_target(transition)
        return train_step(self.policy, transition, self.target, self.optimizer, self.env, self.dqn, y)

    def learn(self, transition: Transition) -> list[float]:
        losses = [self._update(transition)]
        if self.dqn.per_enabled:
            self.buffer.insert(transition)
            for replay in self.buffer.sample(self.dqn.per_replays_per_step, self.rng):
                losses.append(self._update(replay))
        return losses

    def sync_target(self) -> None:
        qnet.copy_into(self.policy, self.target)
        self._bootstrap.clear()

    def end_training_episode(self) -> None:
        self.train_episodes += 1
        if self.train_episodes % self.dqn.target_sync_episodes == 0:
            self.sync_target()

    def q_values(self, state: Dag) -> tuple[tuple, np.ndarray]:
        actions, _ = qnet.successors(state, self.env)
        return actions, qnet.evaluate_actions(self.policy, state, actions, self.env)


TRAIN, GREEDY, RANDOM = "train", "greedy", "random"


def run_episode(
    config: E.EnvConfig,
    mode: str,
    rng: np.random.Generator,
    agent: DqnAgent | None = None,
    epsilon: float = 0.0,
) -> EpisodeRecord:
    """Roll out one episode.

    ``train`` acts epsilon-greedily and learns online, ``greedy`` acts with
    epsilon 0 and does not learn, ``random`` picks uniform legal actions.
    """
    if mode not in (TRAIN, GREEDY, RANDOM):
        raise ValueError(f"unknown episode mode {mode!r}")
    if mode != RANDOM and agent is None:
        raise ValueError(f"{mode} episodes need an agent")
    eps = {TRAIN: epsilon, GREEDY: 0.0, RANDOM: 1.0}[mode]
    state = E.reset(config)
    record = EpisodeRecord(0.0, False, 0, 0, epsilon=eps)
    while True:
        if mode == RANDOM:
            actions, _ = qnet.successors(state, config)
            rng.random()
            action = actions[int(rng.integers(len(actions)))]
        else:
            action = select_action(state, agent.policy, config, eps, rng)
        out = E.step(state, action, config)
        record.actions.append(action)
        if mode == TRAIN:
            losses = agent.learn(Transition(state, action, out.reward, out.next_state, out.terminal))
            record.losses.extend(losses)
            record.updates += len(losses)
        record.total_reward += out.reward
        record.steps += 1
        state = out.next_state
        if out.terminal:
            break
    if mode == TRAIN:
        agent.end_training_episode()
    record.final_state = state
    record.success = record.total_reward > 0
    return record


# ---------------------------------------------------------------- exact oracle


class QTable:
    """Optimal action values for every reachable non-terminal state."""

    def __init__(self, config: E.EnvConfig, gamma: float):
        self.config = config
        self.gamma = gamma
        self.table: dict[Dag, dict[E.Action, float]] = {}

    def q(self, state: Dag, action: E.Action) -> float:
        return self.table[state][action]

    def values(self, state: Dag) -> dict[E.Action, float]:
        return self.table[state]

    def value(self, state: Dag) -> float:
        return max(self.table[state].values())

    def best_actions(self, state: Dag, tol: float = 1e-12) -> list[E.Action]:
        row = self.table[state]
        top = max(row.values())
        return [a for a, v in row.items() if v >= top - tol]


def exact_q_iteration(config: E.EnvConfig, gamma: float, max_n: int = 5, max_b: int = 2) -> QTable:
    """Backward induction over the finite layered state graph."""
    if config.target.n > max_n or config.b > max_b:
        raise ValueError(
            f"exact Q iteration is limited to n <= {max_n}, b <= {max_b}; got n={config.target.n}, b={config.b}"
        )
    table = QTable(config, gamma)

    def solve(state: Dag) -> float:
        if state in table.table:
            return max(table.table[state].values())
        row = {}
        for a in E.legal_actions(state, config):
            out = E.step(state, a, config)
            row[a] = out.reward + (0.0 if out.terminal else gamma * solve(out.next_state))
        table.table[state] = row
        return max(row.values())

    solve(E.reset(config))
    return table
