"""A small reverse-mode differentiation kernel over dense float64 matrices.

Values are 2-D numpy arrays.  A :class:`Tape` records each primitive as it
is applied; :func:`backward` replays the records in reverse to accumulate
gradients.  There is no broadcasting other than adding a bias row.
"""
from __future__ import annotations

from typing import Callable, Mapping

import numpy as np


class ShapeError(ValueError):
    pass


class Var:
    """A traced matrix: a value, a gradient slot and the tape it lives on."""

    __slots__ = ("value", "grad", "tape", "needs_grad")

    def __init__(self, value: np.ndarray, tape: "Tape", needs_grad: bool = False):
        self.value = value
        self.grad: np.ndarray | None = None
        self.tape = tape
        self.needs_grad = needs_grad

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def _accumulate(self, g: np.ndarray) -> None:
        if not self.needs_grad:
            return
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g


class Tape:
    def __init__(self) -> None:
        self.records: list[tuple[Var, Callable[[np.ndarray], None]]] = []
        self.params: dict[str, Var] = {}

    def constant(self, value) -> Var:
        return Var(_as_matrix(value), self)

    def param(self, name: str, value) -> Var:
        """Register a differentiable leaf whose gradient :func:`backward` returns.

        The value is not copied; it must not be mutated while the tape is live.
        """
        v = Var(_as_matrix(value), self, needs_grad=True)
        self.params[name] = v
        return v

    def record(self, out: Var, pullback: Callable[[np.ndarray], None], *inputs: Var) -> Var:
        # outputs that depend only on constants stay constant and are not replayed
        for v in inputs:
            if v.needs_grad:
                out.needs_grad = True
                self.records.append((out, pullback))
                break
        return out


def _as_matrix(value) -> np.ndarray:
    if isinstance(value, np.ndarray) and value.ndim == 2 and value.dtype == np.float64:
        return value
    a = np.array(value, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1)
    elif a.ndim != 2:
        raise ShapeError(f"expected a matrix, got shape {a.shape}")
    return a


def _check(cond: bool, op: str, *shapes) -> None:
    if not cond:
        raise ShapeError(f"{op}: incompatible shapes " + " and ".join(str(s) for s in shapes))


def matmul(a: Var, b: Var) -> Var:
    if a.value.shape[1] != b.value.shape[0]:
        _check(False, "matmul", a.shape, b.shape)
    out = Var(a.value @ b.value, a.tape)

    def pullback(g: np.ndarray) -> None:
        if a.needs_grad:
            a._accumulate(g @ b.value.T)
        if b.needs_grad:
            b._accumulate(a.value.T @ g)

    return a.tape.record(out, pullback, a, b)


def transpose(a: Var) -> Var:
    out = Var(a.value.T.copy(), a.tape)
    return a.tape.record(out, lambda g: a._accumulate(g.T), a)


def concat_cols(*parts: Var) -> Var:
    rows = {p.value.shape[0] for p in parts}
    _check(len(rows) == 1, "concat_cols", *(p.shape for p in parts))
    out = Var(np.concatenate([p.value for p in parts], axis=1), parts[0].tape)
    bounds = np.cumsum([0] + [p.value.shape[1] for p in parts])

    def pullback(g: np.ndarray) -> None:
        for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
            p._accumulate(g[:, lo:hi])

    return parts[0].tape.record(out, pullback, *parts)


def relu(a: Var) -> Var:
    # gradient at exactly 0 is taken as 0
    on = a.value > 0
    out = Var(np.where(on, a.value, 0.0), a.tape)
    return a.tape.record(out, lambda g: a._accumulate(g * on), a)


def add_row_bias(a: Var, bias: Var) -> Var:
    if bias.value.shape != (1, a.value.shape[1]):
        _check(False, "add_row_bias", a.shape, bias.shape)
    out = Var(a.value + bias.value, a.tape)

    def pullback(g: np.ndarray) -> None:
        a._accumulate(g)
        bias._accumulate(g.sum(axis=0, keepdims=True))

    return a.tape.record(out, pullback, a, bias)


def sum_rows(a: Var) -> Var:
    """Column-wise sum over rows, giving a ``1 x cols`` row vector."""
    out = Var(a.value.sum(axis=0, keepdims=True), a.tape)
    n = a.shape[0]
    return a.tape.record(out, lambda g: a._accumulate(np.repeat(g, n, axis=0)), a)


def affine(x: Var, w: Var, b: Var) -> Var:
    return add_row_bias(matmul(x, w), b)


def sub(a: Var, b: Var) -> Var:
    _check(a.shape == b.shape, "sub", a.shape, b.shape)
    out = Var(a.value - b.value, a.tape)

    def pullback(g: np.ndarray) -> None:
        a._accumulate(g)
        b._accumulate(-g)

    return a.tape.record(out, pullback, a, b)


def scale(a: Var, c: float) -> Var:
    out = Var(a.value * c, a.tape)
    return a.tape.record(out, lambda g: a._accumulate(g * c), a)


def square(a: Var) -> Var:
    out = Var(a.value * a.value, a.tape)
    return a.tape.record(out, lambda g: a._accumulate(2.0 * a.value * g), a)


def absolute(a: Var) -> Var:
    out = Var(np.abs(a.value), a.tape)
    return a.tape.record(out, lambda g: a._accumulate(np.sign(a.value) * g), a)


def backward(tape: Tape, output: Var, upstream: float = 1.0) -> dict[str, np.ndarray]:
    """Back-propagate from a ``1 x 1`` output; return gradients of every param.

    Params the output does not depend on get zero gradients.
    """
    if output.shape != (1, 1):
        raise ShapeError(f"backward needs a scalar output, got shape {output.shape}")
    for v, _ in tape.records:
        v.grad = None
    for p in tape.params.values():
        p.grad = None
    output.grad = np.full((1, 1), float(upstream))
    for v, pullback in reversed(tape.records):
        if v.grad is not None:
            pullback(v.grad)
    return {
        name: (p.grad if p.grad is not None else np.zeros_like(p.value))
        for name, p in tape.params.items()
    }


def finite_diff_check(
    f: Callable[[Mapping[str, np.ndarray]], float],
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    eps: float = 1e-5,
) -> float:
    """Max relative error between ``grads`` and central differences of ``f``.

    The denominator is ``max(|analytic|, |numeric|, 1e-8)``.
    """
    work = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    worst = 0.0
    for name, value in work.items():
        flat = value.reshape(-1)
        g = np.asarray(grads[name], dtype=np.float64).reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = f(work)
            flat[i] = orig - eps
            down = f(work)
            flat[i] = orig
            numeric = (up - down) / (2 * eps)
            err = abs(g[i] - numeric) / max(abs(g[i]), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
