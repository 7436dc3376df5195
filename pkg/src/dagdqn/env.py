"""DAG-building environment with a sparse isomorphism reward.

Two action encodings are supported:

``edge-set``
    each step adds one node together with its whole incoming edge set
    (``AddNodeWithEdges``); the first node takes no mask.
``single``
    each step adds either one bare node (``AddNode``) or one edge into the
    newest node (``AddEdge``).  A new node may only be added once the newest
    node has an incoming edge, so no node is left floating.

An episode ends when the graph reaches the target's node count (in single
mode, once that last node also has an incoming edge).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

from .dag import (
    Dag,
    DagError,
    add_bare_node,
    add_edge,
    add_node,
    count_isomorphic_to,
    count_terminal,
    empty_dag,
    is_isomorphic,
)

EDGE_SET = "edge-set"
SINGLE = "single"
MODES = (EDGE_SET, SINGLE)


class IllegalActionError(ValueError):
    pass


@dataclass(frozen=True)
class AddNodeWithEdges:
    t: int
    mask: int | None


@dataclass(frozen=True)
class AddNode:
    t: int


@dataclass(frozen=True)
class AddEdge:
    source: int


Action = Union[AddNodeWithEdges, AddNode, AddEdge]
RewardFn = Callable[[Dag, Dag], bool]


@dataclass(frozen=True)
class EnvConfig:
    target: Dag
    mode: str = EDGE_SET
    success_reward: float = 1.0
    # decides success of a terminal graph against the target
    matches: RewardFn = is_isomorphic

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.target.n < 1 or self.target.has_floating_nodes():
            raise DagError("target must be a non-empty terminal DAG without floating nodes")

    @property
    def b(self) -> int:
        return self.target.b


@dataclass(frozen=True)
class StepOutcome:
    next_state: Dag
    reward: float
    terminal: bool


def reset(config: EnvConfig) -> Dag:
    return empty_dag(config.b)


def is_terminal(state: Dag, config: EnvConfig) -> bool:
    if state.n != config.target.n:
        return False
    if config.mode == SINGLE and state.n > 1:
        return state.preds[-1] != 0
    return True


def legal_actions(state: Dag, config: EnvConfig) -> list[Action]:
    """Legal actions in a deterministic order (types, then masks or sources, ascending)."""
    if is_terminal(state, config):
        raise IllegalActionError("no actions are legal in a terminal state")
    k, b = state.n, config.b
    if config.mode == EDGE_SET:
        if k == 0:
            return [AddNodeWithEdges(t, None) for t in range(b)]
        return [AddNodeWithEdges(t, m) for t in range(b) for m in range(1, 1 << k)]
    actions: list[Action] = []
    newest_connected = k <= 1 or state.preds[-1] != 0
    if newest_connected and k < config.target.n:
        actions.extend(AddNode(t) for t in range(b))
    if k >= 2:
        have = state.preds[-1]
        actions.extend(AddEdge(i) for i in range(1, k) if not have >> (i - 1) & 1)
    return actions


def apply(state: Dag, action: Action, config: EnvConfig) -> Dag:
    """Successor graph of ``action``; raises if the action is illegal."""
    if is_terminal(state, config):
        raise IllegalActionError("episode already terminated")
    if config.mode == EDGE_SET:
        if not isinstance(action, AddNodeWithEdges):
            raise IllegalActionError(f"{action!r} is not an edge-set action")
        if not 0 <= action.t < config.b:
            raise IllegalActionError(f"node type {action.t} outside [0, {config.b})")
        try:
            return add_node(state, action.t, action.mask)
        except DagError as exc:
            raise IllegalActionError(str(exc)) from exc
    if isinstance(action, AddNode):
        if not 0 <= action.t < config.b:
            raise IllegalActionError(f"node type {action.t} outside [0, {config.b})")
        if state.n >= config.target.n:
            raise IllegalActionError("graph already has the target node count")
        if state.n >= 2 and state.preds[-1] == 0:
            raise IllegalActionError("newest node needs an incoming edge before adding another node")
        return add_bare_node(state, action.t)
    if isinstance(action, AddEdge):
        try:
            return add_edge(state, action.source, state.n)
        except DagError as exc:
            raise IllegalActionError(f"AddEdge must target the newest node: {exc}") from exc
    raise IllegalActionError(f"{action!r} is not a single-mode action")


def reward_of(state: Dag, config: EnvConfig) -> float:
    if is_terminal(state, config) and config.matches(state, config.target):
        return config.success_reward
    return 0.0


def step(state: Dag, action: Action, config: EnvConfig) -> StepOutcome:
    nxt = apply(state, action, config)
    terminal = is_terminal(nxt, config)
    reward = reward_of(nxt, config) if terminal else 0.0
    return StepOutcome(nxt, reward, terminal)


def random_policy_success_probability(config: EnvConfig) -> float:
    """Success probability of the uniform random policy in edge-set mode.

    Uniform choice at each step makes every construction sequence equally
    likely, so the probability is the isomorphic fraction of terminal states.
    """
    if config.mode != EDGE_SET:
        raise ValueError("the analytic random-policy probability holds only in edge-set mode")
    target = config.target
    return count_isomorphic_to(target) / count_terminal(target.n, target.b)
