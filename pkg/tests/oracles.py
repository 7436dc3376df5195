"""Independent brute-force oracles used only by the tests."""
import itertools

import numpy as np


def brute_isomorphic(a, b) -> bool:
    """Try every permutation; no pruning."""
    if a.n != b.n or a.b != b.b:
        return False
    A, B = a.adj, b.adj
    for perm in itertools.permutations(range(a.n)):
        if any(a.types[i] != b.types[perm[i]] for i in range(a.n)):
            continue
        p = list(perm)
        # node i of a maps to node perm[i] of b
        if np.array_equal(A, B[np.ix_(p, p)]):
            return True
    return False


def has_cycle(adj: np.ndarray) -> bool:
    """Kahn's algorithm on a dense adjacency."""
    n = adj.shape[0]
    indeg = adj.sum(axis=0).astype(int)
    queue = [v for v in range(n) if indeg[v] == 0]
    seen = 0
    while queue:
        v = queue.pop()
        seen += 1
        for w in range(n):
            if adj[v, w]:
                indeg[w] -= 1
                if indeg[w] == 0:
                    queue.append(w)
    return seen != n


def all_labeled_constructions(n: int, b: int):
    """Every (type, mask) sequence, built by itertools.product over choices."""
    from dagdqn.dag import add_node, empty_dag

    choices = [[(t, None) for t in range(b)]] + [
        [(t, m) for t in range(b) for m in range(1, 2**k)] for k in range(1, n)
    ]
    for seq in itertools.product(*choices):
        d = empty_dag(b)
        for t, m in seq:
            d = add_node(d, t, m)
        yield d
