"""DAG data model, edge-mask codec, typed isomorphism and the enumeration oracle.

Graphs are built in topological insertion order: node ``j`` may only receive
edges from nodes ``i < j``.  Internally every node stores its predecessor set
as an integer bitset (bit ``i`` set means an edge ``i -> j``, 0-based), which
keeps hashing and enumeration cheap.  Public node indices are 1-based, as in
the text format.
"""
from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable, Iterator

import numpy as np

DEFAULT_ENUMERATION_CAP = 10**8


class DagError(ValueError):
    """Raised for structurally invalid graphs, masks or text."""


class InvalidMaskError(DagError):
    pass


class DagParseError(DagError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class EnumerationCapError(DagError):
    pass


@dataclass(frozen=True)
class Dag:
    """An insertion-ordered DAG over ``b`` node types.

    ``types[j]`` is the type id of node ``j + 1``; ``preds[j]`` is the bitset of
    0-based predecessors of that node.  Instances are immutable.
    """

    b: int
    types: tuple[int, ...] = ()
    preds: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.b < 1:
            raise DagError(f"type count must be >= 1, got {self.b}")
        if len(self.types) != len(self.preds):
            raise DagError("types and preds must have equal length")
        for j, (t, p) in enumerate(zip(self.types, self.preds)):
            if not 0 <= t < self.b:
                raise DagError(f"node {j + 1} has type {t} outside [0, {self.b})")
            if p < 0 or p >> j:
                raise DagError(f"node {j + 1} has a predecessor not earlier in insertion order")

    @property
    def n(self) -> int:
        return len(self.types)

    @cached_property
    def adj(self) -> np.ndarray:
        """Dense ``n x n`` adjacency, ``adj[i, j] = 1`` for an edge ``i -> j`` (read-only)."""
        n = self.n
        a = np.zeros((n, n), dtype=np.float64)
        for j, p in enumerate(self.preds):
            for i in range(j):
                if p >> i & 1:
                    a[i, j] = 1.0
        a.setflags(write=False)
        return a

    @cached_property
    def features(self) -> np.ndarray:
        """One-hot ``n x b`` type matrix (read-only)."""
        f = np.zeros((self.n, self.b), dtype=np.float64)
        f[np.arange(self.n), list(self.types)] = 1.0
        f.setflags(write=False)
        return f

    def edges(self) -> list[tuple[int, int]]:
        """Edge list with 1-based indices, sorted lexicographically."""
        out = [(i + 1, j + 1) for j, p in enumerate(self.preds) for i in range(j) if p >> i & 1]
        out.sort()
        return out

    def in_degree(self, node: int) -> int:
        return bin(self.preds[node - 1]).count("1")

    def out_degree(self, node: int) -> int:
        i = node - 1
        return sum(p >> i & 1 for p in self.preds)

    @property
    def n_edges(self) -> int:
        return sum(bin(p).count("1") for p in self.preds)

    def has_floating_nodes(self) -> bool:
        """True if some node other than the first lacks incoming edges."""
        return any(p == 0 for p in self.preds[1:])

    def __str__(self) -> str:
        return serialize(self)


def empty_dag(b: int = 1) -> Dag:
    return Dag(b)


def decode_mask(mask: int, k: int) -> set[int]:
    """Source nodes selected by ``mask`` when ``k`` nodes already exist.

    Read as a ``k``-digit binary string, the leftmost digit is node 1 and the
    rightmost is node ``k``.
    """
    if k < 1 or not 1 <= mask < 1 << k:
        raise InvalidMaskError(f"mask {mask} invalid for {k} existing nodes; need 1 <= mask < {1 << k}")
    return {j for j in range(1, k + 1) if mask >> (k - j) & 1}


def encode_mask(sources: Iterable[int], k: int) -> int:
    sources = set(sources)
    if not sources:
        raise InvalidMaskError("the empty edge set is not a legal mask")
    mask = 0
    for j in sources:
        if not 1 <= j <= k:
            raise InvalidMaskError(f"source node {j} outside [1, {k}]")
        mask |= 1 << (k - j)
    return mask


def _mask_to_preds(mask: int, k: int) -> int:
    # bit (k - j) of the mask <-> 0-based predecessor j - 1
    p = 0
    for j in range(1, k + 1):
        if mask >> (k - j) & 1:
            p |= 1 << (j - 1)
    return p


def add_node(dag: Dag, node_type: int, mask: int | None) -> Dag:
    """Return a copy of ``dag`` extended by one node and its incoming edge set."""
    k = dag.n
    if k == 0:
        if mask is not None:
            raise InvalidMaskError("the first node takes no edge mask")
        preds = 0
    else:
        if mask is None:
            raise InvalidMaskError(f"an edge mask is required when {k} nodes exist")
        decode_mask(mask, k)
        preds = _mask_to_preds(mask, k)
    return Dag(dag.b, dag.types + (node_type,), dag.preds + (preds,))


def add_bare_node(dag: Dag, node_type: int) -> Dag:
    """Append a node with no incoming edges (single-step construction)."""
    return Dag(dag.b, dag.types + (node_type,), dag.preds + (0,))


def add_edge(dag: Dag, source: int, target: int) -> Dag:
    """Add edge ``source -> target`` (1-based); ``source < target`` is required."""
    if not 1 <= source < target <= dag.n:
        raise DagError(f"edge {source}->{target} violates insertion order for n={dag.n}")
    bit = 1 << (source - 1)
    p = dag.preds[target - 1]
    if p & bit:
        raise DagError(f"edge {source}->{target} already exists")
    preds = list(dag.preds)
    preds[target - 1] = p | bit
    return Dag(dag.b, dag.types, tuple(preds))


def from_edges(b: int, types: Iterable[int], edges: Iterable[tuple[int, int]]) -> Dag:
    """Build a Dag from 1-based edges; every edge must satisfy ``i < j``."""
    types = tuple(types)
    preds = [0] * len(types)
    for i, j in edges:
        if not 1 <= i < j <= len(types):
            raise DagError(f"edge {i}->{j} is not topologically ordered for n={len(types)}")
        preds[j - 1] |= 1 << (i - 1)
    return Dag(b, types, tuple(preds))


def permute(dag: Dag, order: list[int]) -> tuple[list[int], np.ndarray, np.ndarray]:
    """Relabel nodes: new node ``r`` is old node ``order[r]`` (0-based).

    The result may not be topologically ordered, so it is returned as raw
    ``(types, adjacency, features)`` rather than a Dag.
    """
    idx = np.asarray(order)
    adj = dag.adj[np.ix_(idx, idx)]
    types = [dag.types[i] for i in order]
    return types, adj, dag.features[idx]


# ---------------------------------------------------------------- isomorphism


def _succ_bits(dag: Dag) -> list[int]:
    succ = [0] * dag.n
    for j, p in enumerate(dag.preds):
        for i in range(j):
            if p >> i & 1:
                succ[i] |= 1 << j
    return succ


def _popcount(x: int) -> int:
    return bin(x).count("1")


def is_isomorphic(a: Dag, b: Dag) -> bool:
    """Typed isomorphism by backtracking over type/degree-compatible images."""
    if a.b != b.b or a.n != b.n or a.n_edges != b.n_edges:
        return False
    n = a.n
    succ_a, succ_b = _succ_bits(a), _succ_bits(b)

    def signature(d: Dag, succ: list[int], v: int) -> tuple[int, int, int]:
        return d.types[v], _popcount(d.preds[v]), _popcount(succ[v])

    sig_a = [signature(a, succ_a, v) for v in range(n)]
    sig_b = [signature(b, succ_b, v) for v in range(n)]
    if sorted(sig_a) != sorted(sig_b):
        return False
    candidates = [[w for w in range(n) if sig_b[w] == sig_a[v]] for v in range(n)]
    order = sorted(range(n), key=lambda v: len(candidates[v]))
    image = [-1] * n
    used = [False] * n

    def consistent(v: int, w: int) -> bool:
        for u in range(n):
            x = image[u]
            if x < 0:
                continue
            if (a.preds[v] >> u & 1) != (b.preds[w] >> x & 1):
                return False
            if (succ_a[v] >> u & 1) != (succ_b[w] >> x & 1):
                return False
        return True

    def extend(depth: int) -> bool:
        if depth == n:
            return True
        v = order[depth]
        for w in candidates[v]:
            if not used[w] and consistent(v, w):
                image[v] = w
                used[w] = True
                if extend(depth + 1):
                    return True
                image[v] = -1
                used[w] = False
        return False

    return extend(0)


def _refine_colors(dag: Dag, succ: list[int]) -> list[int]:
    """Colour refinement with canonical (sorted-signature) colour names."""
    n = dag.n
    colors = [(dag.types[v], _popcount(dag.preds[v]), _popcount(succ[v])) for v in range(n)]
    palette = {c: i for i, c in enumerate(sorted(set(colors)))}
    col = [palette[c] for c in colors]
    while True:
        sigs = []
        for v in range(n):
            ins = sorted(col[u] for u in range(n) if dag.preds[v] >> u & 1)
            outs = sorted(col[u] for u in range(n) if succ[v] >> u & 1)
            sigs.append((col[v], tuple(ins), tuple(outs)))
        palette = {s: i for i, s in enumerate(sorted(set(sigs)))}
        new = [palette[s] for s in sigs]
        if len(palette) == len(set(col)):
            return new
        col = new


def canonical_key(dag: Dag) -> bytes:
    """A byte string equal for two Dags iff they are isomorphic.

    Nodes are ordered by refined colour; the serialized adjacency is then
    minimized over permutations within each colour cell.
    """
    n = dag.n
    succ = _succ_bits(dag)
    col = _refine_colors(dag, succ)
    cells: dict[int, list[int]] = {}
    for v in range(n):
        cells.setdefault(col[v], []).append(v)
    cell_ids = sorted(cells)
    best: bytes | None = None
    for parts in itertools.product(*(itertools.permutations(cells[c]) for c in cell_ids)):
        order = [v for part in parts for v in part]
        pos = {v: r for r, v in enumerate(order)}
        rows = bytearray()
        for v in order:
            row = 0
            for u in range(n):
                if succ[v] >> u & 1:
                    row |= 1 << (n - 1 - pos[u])
            rows += row.to_bytes(2, "big")
        if best is None or bytes(rows) < best:
            best = bytes(rows)
    head = bytes([dag.b, n]) + bytes(dag.types[v] for v in sorted(range(n), key=lambda v: col[v]))
    head += bytes(col[v] for v in sorted(range(n), key=lambda v: col[v]))
    return head + (best or b"")


# ---------------------------------------------------------------- enumeration


def count_terminal(n: int, b: int) -> int:
    """Number of distinct (type, mask) construction sequences of ``n`` nodes."""
    if n < 1 or b < 1:
        raise DagError("count_terminal needs n >= 1 and b >= 1")
    return b**n * math.prod((1 << k) - 1 for k in range(1, n))


def iter_terminal(n: int, b: int, cap: int = DEFAULT_ENUMERATION_CAP) -> Iterator[Dag]:
    total = count_terminal(n, b)
    if total > cap:
        raise EnumerationCapError(
            f"refusing to enumerate {total} terminal states for n={n}, b={b} (cap {cap})"
        )

    def walk(types: tuple[int, ...], preds: tuple[int, ...]) -> Iterator[Dag]:
        k = len(types)
        if k == n:
            yield Dag(b, types, preds)
            return
        for t in range(b):
            if k == 0:
                yield from walk((t,), (0,))
                continue
            for p in range(1, 1 << k):
                # every non-empty predecessor bitset is exactly one legal mask
                yield from walk(types + (t,), preds + (p,))

    return walk((), ())


def enumerate_terminal(
    n: int, b: int, visitor: Callable[[Dag], object] | None = None, cap: int = DEFAULT_ENUMERATION_CAP
) -> int:
    """Visit every terminal construction once; return the visit count."""
    count = 0
    for dag in iter_terminal(n, b, cap):
        if visitor is not None:
            visitor(dag)
        count += 1
    return count


def count_isomorphic_to(target: Dag, cap: int = DEFAULT_ENUMERATION_CAP) -> int:
    """Exact number of terminal constructions isomorphic to ``target``."""
    n_edges = target.n_edges
    type_counts = sorted(target.types)
    hits = 0
    for dag in iter_terminal(target.n, target.b, cap):
        if dag.n_edges != n_edges or sorted(dag.types) != type_counts:
            continue
        if is_isomorphic(dag, target):
            hits += 1
    return hits


def random_target(n: int, b: int, rng: np.random.Generator) -> Dag:
    """Draw a terminal Dag with a uniform type and uniform mask at each step."""
    if n < 1:
        raise DagError("random_target needs n >= 1")
    dag = empty_dag(b)
    for k in range(n):
        t = int(rng.integers(b))
        mask = None if k == 0 else int(rng.integers(1, 1 << k))
        dag = add_node(dag, t, mask)
    return dag


# ---------------------------------------------------------------- text format

_FORMAT = re.compile(
    r"dag v1; n=(?P<n>\d+); b=(?P<b>\d+); types=(?P<types>[0-9,]*); edges=(?P<edges>[0-9,>\-]*)"
)


def serialize(dag: Dag) -> str:
    """``dag v1; n=<n>; b=<b>; types=<t1,...>; edges=<i->j,...>`` (1-based nodes)."""
    types = ",".join(str(t) for t in dag.types)
    edges = ",".join(f"{i}->{j}" for i, j in dag.edges())
    return f"dag v1; n={dag.n}; b={dag.b}; types={types}; edges={edges}"


def parse(text: str) -> Dag:
    text = text.strip()
    m = _FORMAT.fullmatch(text)
    if m is None:
        raise DagParseError("malformed dag text", _first_bad_position(text))
    n, b = int(m["n"]), int(m["b"])
    types = [int(t) for t in m["types"].split(",")] if m["types"] else []
    if len(types) != n:
        raise DagParseError(f"expected {n} types, found {len(types)}", m.start("types"))
    edges = []
    offset = m.start("edges")
    if m["edges"]:
        for item in m["edges"].split(","):
            em = re.fullmatch(r"(\d+)->(\d+)", item)
            if em is None:
                raise DagParseError(f"bad edge {item!r}", offset)
            i, j = int(em[1]), int(em[2])
            if not 1 <= i < j <= n:
                raise DagParseError(f"edge {i}->{j} is not topologically ordered", offset)
            edges.append((i, j))
            offset += len(item) + 1
    if edges != sorted(set(edges)):
        raise DagParseError("edges must be unique and sorted", m.start("edges"))
    try:
        return from_edges(b, types, edges)
    except DagError as exc:
        raise DagParseError(str(exc), 0) from exc


def _first_bad_position(text: str) -> int:
    # longest prefix that still matches some valid document, found by truncation
    for end in range(len(text), -1, -1):
        probe = text[:end]
        if re.fullmatch(r"dag v1; n=\d*(; b=\d*(; types=[0-9,]*(; edges=[0-9,>\-]*)?)?)?", probe) or (
            "dag v1; n=".startswith(probe)
        ):
            return end
    return 0
