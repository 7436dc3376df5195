"""Direction-aware graph convolutional Q-network.

Each of the two convolutions concatenates a node's representation with the
summed representations of its successors (``A @ H``) and predecessors
(``A.T @ H``), then applies an affine map and ReLU.  A linear map followed by
sum pooling yields the graph vector, which passes through ReLU and a linear
head to a scalar.

Q(s, a) is the score of the successor graph obtained by applying ``a`` to
``s``; action selection therefore scores every successor.
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from . import env as _env
from . import numerics as nx
from .dag import Dag

PARAM_NAMES = ("W1", "B1", "W2", "B2", "W3", "B3", "W4", "B4")


class QNetError(ValueError):
    pass


@dataclass(frozen=True)
class QNetConfig:
    b: int
    d1: int = 32
    d2: int = 32
    d3: int = 32

    def __post_init__(self) -> None:
        for f in fields(self):
            if getattr(self, f.name) < 1:
                raise QNetError(f"{f.name} must be >= 1")

    def shapes(self) -> dict[str, tuple[int, int]]:
        return {
            "W1": (3 * self.b, self.d1), "B1": (1, self.d1),
            "W2": (3 * self.d1, self.d2), "B2": (1, self.d2),
            "W3": (self.d2, self.d3), "B3": (1, self.d3),
            "W4": (self.d3, 1), "B4": (1, 1),
        }


class QNetParams:
    """Named weight and bias matrices; mutated in place by training."""

    def __init__(self, arrays: dict[str, np.ndarray]):
        missing = set(PARAM_NAMES) - set(arrays)
        if missing:
            raise QNetError(f"missing parameters: {sorted(missing)}")
        self.arrays = {k: np.array(arrays[k], dtype=np.float64) for k in PARAM_NAMES}

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def copy(self) -> "QNetParams":
        return QNetParams(self.arrays)

    def shapes(self) -> dict[str, tuple[int, int]]:
        return {k: v.shape for k, v in self.arrays.items()}

    def equals(self, other: "QNetParams") -> bool:
        return all(np.array_equal(self[k], other[k]) for k in PARAM_NAMES)


def init_params(config: QNetConfig, rng: np.random.Generator) -> QNetParams:
    """Glorot-uniform weights, zero biases."""
    arrays = {}
    for name, (rows, cols) in config.shapes().items():
        if name.startswith("W"):
            s = np.sqrt(6.0 / (rows + cols))
            arrays[name] = rng.uniform(-s, s, size=(rows, cols))
        else:
            arrays[name] = np.zeros((rows, cols))
    return QNetParams(arrays)


def copy_into(source: QNetParams, dest: QNetParams) -> None:
    if source.shapes() != dest.shapes():
        raise QNetError(f"shape mismatch: {source.shapes()} vs {dest.shapes()}")
    for k in PARAM_NAMES:
        dest.arrays[k][...] = source.arrays[k]


def _check_graph(params: QNetParams, feats: np.ndarray) -> None:
    if feats.shape[-2] == 0:
        raise QNetError("the null graph has no representation")
    if 3 * feats.shape[-1] != params["W1"].shape[0]:
        raise QNetError(f"feature width {feats.shape[-1]} does not match W1 {params['W1'].shape}")


def trace(tape: nx.Tape, params: QNetParams, feats: np.ndarray, adj: np.ndarray) -> tuple[nx.Var, nx.Var]:
    """Record the forward pass on ``tape``; return (Q, pooled graph vector)."""
    _check_graph(params, feats)
    p = {k: tape.param(k, params[k]) for k in PARAM_NAMES}
    a = tape.constant(adj)
    a_t = nx.transpose(a)
    h = tape.constant(feats)
    for w, bias in (("W1", "B1"), ("W2", "B2")):
        x = nx.concat_cols(h, nx.matmul(a, h), nx.matmul(a_t, h))
        h = nx.relu(nx.affine(x, p[w], p[bias]))
    pooled = nx.sum_rows(nx.affine(h, p["W3"], p["B3"]))
    q = nx.affine(nx.relu(pooled), p["W4"], p["B4"])
    return q, pooled


def forward(params: QNetParams, dag: Dag) -> float:
    return float(forward_arrays(params, dag.features, dag.adj))


def forward_arrays(params: QNetParams, feats: np.ndarray, adj: np.ndarray) -> float:
    tape = nx.Tape()
    q, _ = trace(tape, params, feats, adj)
    return float(q.value[0, 0])


def pooled(params: QNetParams, feats: np.ndarray, adj: np.ndarray) -> np.ndarray:
    """Graph vector after sum pooling, before the final ReLU and head."""
    _, v = trace(nx.Tape(), params, feats, adj)
    return v.value[0]


def forward_grad(params: QNetParams, dag: Dag, upstream: float = 1.0) -> tuple[float, dict[str, np.ndarray]]:
    """Q and the gradient of ``upstream * Q`` with respect to every parameter."""
    tape = nx.Tape()
    q, _ = trace(tape, params, dag.features, dag.adj)
    return float(q.value[0, 0]), nx.backward(tape, q, upstream)


def forward_batch(params: QNetParams, feats: np.ndarray, adj: np.ndarray) -> np.ndarray:
    """Untraced forward over a stack of equal-sized graphs.

    ``feats`` is ``(m, n, b)`` and ``adj`` is ``(m, n, n)``; returns ``(m,)``.
    """
    _check_graph(params, feats)
    adj_t = np.swapaxes(adj, 1, 2)
    h = feats
    for w, bias in (("W1", "B1"), ("W2", "B2")):
        x = np.concatenate([h, adj @ h, adj_t @ h], axis=2)
        h = np.maximum(x @ params[w] + params[bias], 0.0)
    g = (h @ params["W3"] + params["B3"]).sum(axis=1)
    return (np.maximum(g, 0.0) @ params["W4"] + params["B4"])[:, 0]


def stack_graphs(dags: Sequence[Dag]) -> tuple[np.ndarray, np.ndarray]:
    return np.stack([d.features for d in dags]), np.stack([d.adj for d in dags])


def forward_many(params: QNetParams, dags: Sequence[Dag]) -> np.ndarray:
    """Scores for graphs of possibly different sizes, grouped by size."""
    out = np.empty(len(dags))
    by_size: dict[int, list[int]] = {}
    for i, d in enumerate(dags):
        by_size.setdefault(d.n, []).append(i)
    for idx in by_size.values():
        feats, adj = stack_graphs([dags[i] for i in idx])
        out[idx] = forward_batch(params, feats, adj)
    return out


# ---------------------------------------------------------------- checkpoints


def save_checkpoint(params: QNetParams, path: str | Path) -> None:
    """Write ``name rows cols`` then the row-major values, one per line, in hex."""
    lines = [f"qnet v1 {len(PARAM_NAMES)}"]
    for k in PARAM_NAMES:
        a = params[k]
        lines.append(f"{k} {a.shape[0]} {a.shape[1]}")
        lines.extend(float(x).hex() for x in a.reshape(-1))
    Path(path).write_text("\n".join(lines) + "\n")


def load_checkpoint(path: str | Path) -> QNetParams:
    lines = Path(path).read_text().split("\n")
    head = lines[0].split()
    if head[:2] != ["qnet", "v1"]:
        raise QNetError(f"{path}: not a qnet checkpoint")
    pos, arrays = 1, {}
    for _ in range(int(head[2])):
        name, rows, cols = lines[pos].split()
        rows, cols = int(rows), int(cols)
        vals = [float.fromhex(x) for x in lines[pos + 1 : pos + 1 + rows * cols]]
        if len(vals) != rows * cols:
            raise QNetError(f"{path}: truncated values for {name}")
        arrays[name] = np.array(vals).reshape(rows, cols)
        pos += 1 + rows * cols
    return QNetParams(arrays)


# ---------------------------------------------------------------- action scoring


@lru_cache(maxsize=65536)
def _successors(state: Dag, config: "_env.EnvConfig") -> tuple[tuple, tuple, tuple]:
    actions = tuple(_env.legal_actions(state, config))
    succ = tuple(_env.apply(state, a, config) for a in actions)
    by_size: dict[int, list[int]] = {}
    for i, d in enumerate(succ):
        by_size.setdefault(d.n, []).append(i)
    groups = []
    for idx in by_size.values():
        feats, adj = stack_graphs([succ[i] for i in idx])
        feats.setflags(write=False)
        adj.setflags(write=False)
        groups.append((np.array(idx), feats, adj))
    return actions, succ, tuple(groups)


def successors(state: Dag, config: "_env.EnvConfig") -> tuple[tuple, tuple]:
    """Legal actions and their successor graphs, in legal-action order (cached)."""
    actions, succ, _ = _successors(state, config)
    return actions, succ


def evaluate_actions(params: QNetParams, state: Dag, actions, config: "_env.EnvConfig") -> np.ndarray:
    """Q(state, a) for each action, i.e. the score of each successor graph."""
    legal, _, groups = _successors(state, config)
    if tuple(actions) != legal:
        return forward_many(params, [_env.apply(state, a, config) for a in actions])
    if len(groups) == 1:
        return forward_batch(params, groups[0][1], groups[0][2])
    out = np.empty(len(legal))
    for idx, feats, adj in groups:
        out[idx] = forward_batch(params, feats, adj)
    return out
