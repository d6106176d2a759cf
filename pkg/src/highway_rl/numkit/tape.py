"""Reverse-mode automatic differentiation on a recorded op tape.

Forward ops compute with numpy float64 and append a backward closure to a
``Tape``. ``Tape.backward`` replays the closures in reverse, accumulating
gradients into ``Param`` leaves. Passing ``tape=None`` runs the same forward
math without recording, for inference.

Vector ops (``affine``, ``recurrent_step``) accept a single input ``(d,)`` or
a batch ``(B, d)``; reductions and softmax-family ops work on the last axis.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence, Union

import numpy as np

from ..errors import ConfigurationError, ContractViolation

ArrayLike = Union[np.ndarray, "Var", float, Sequence[float]]


class Var:
    """A node in the compute graph: a float64 array plus its gradient."""

    __slots__ = ("value", "grad")

    def __init__(self, value: ArrayLike):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Var(shape={self.value.shape})"


class Param(Var):
    """A trainable leaf tensor. Gradients persist until the optimizer zeroes them."""

    def __repr__(self) -> str:
        return f"Param(shape={self.value.shape})"


class Tape:
    """Ordered record of a forward pass, sufficient to replay backward once."""

    __slots__ = ("_records", "_outputs")

    def __init__(self):
        self._records: list[Callable[[], None]] = []
        self._outputs: list[Var] = []

    def __len__(self) -> int:
        return len(self._records)

    def record(self, out: Var, backward_fn: Callable[[], None]) -> None:
        """Register an op output and the closure that propagates its gradient."""
        self._outputs.append(out)
        self._records.append(backward_fn)

    def backward(self, loss: Var, seed: float = 1.0) -> None:
        """Propagate d(loss) through every recorded op, newest first.

        Non-leaf gradients are reset before the pass, so calling backward
        again adds exactly one more gradient contribution to each Param.
        """
        if not self._records:
            raise ContractViolation("backward called before any op was recorded")
        if loss.value.ndim != 0:
            raise ContractViolation(f"loss must be scalar, got shape {loss.value.shape}")
        for out in self._outputs:
            out.grad[...] = 0.0
        loss.grad[...] = seed
        for fn in reversed(self._records):
            fn()


def _value(x: ArrayLike) -> np.ndarray:
    if isinstance(x, Var):
        return x.value
    return np.asarray(x, dtype=np.float64)


def affine(tape: Tape | None, x: ArrayLike, w: Param, b: Param) -> Var:
    """w @ x + b for a single input, or x @ w.T + b for a batch. w is (out, in)."""
    xv = _value(x)
    if w.value.ndim != 2 or b.value.ndim != 1 or w.value.shape[0] != b.value.shape[0]:
        raise ConfigurationError(
            f"affine expects w (out, in) and b (out,), got {w.value.shape} and {b.value.shape}"
        )
    if xv.shape[-1] != w.value.shape[1]:
        raise ConfigurationError(
            f"affine input dim {xv.shape[-1]} does not match w columns {w.value.shape[1]}"
        )
    out = Var(xv @ w.value.T + b.value)
    if tape is not None:
        def backward():
            g = out.grad
            if g.ndim == 1:
                w.grad += np.outer(g, xv)
                b.grad += g
            else:
                w.grad += g.T @ xv
                b.grad += g.sum(axis=0)
            if isinstance(x, Var):
                x.grad += g @ w.value
        tape.record(out, backward)
    return out


def recurrent_step(
    tape: Tape | None,
    x: ArrayLike,
    h: ArrayLike,
    w_ih: Param,
    w_hh: Param,
    b: Param,
) -> Var:
    """Vanilla tanh cell: new hidden = tanh(w_ih @ x + w_hh @ h + b)."""
    xv = _value(x)
    hv = _value(h)
    if xv.shape[-1] != w_ih.value.shape[1]:
        raise ConfigurationError(
            f"recurrent input dim {xv.shape[-1]} does not match w_ih columns {w_ih.value.shape[1]}"
        )
    if hv.shape[-1] != w_hh.value.shape[1]:
        raise ConfigurationError(
            f"hidden dim {hv.shape[-1]} does not match w_hh columns {w_hh.value.shape[1]}"
        )
    out = Var(np.tanh(xv @ w_ih.value.T + hv @ w_hh.value.T + b.value))
    if tape is not None:
        def backward():
            d = (1.0 - out.value * out.value) * out.grad
            if d.ndim == 1:
                w_ih.grad += np.outer(d, xv)
                w_hh.grad += np.outer(d, hv)
                b.grad += d
            else:
                w_ih.grad += d.T @ xv
                w_hh.grad += d.T @ hv
                b.grad += d.sum(axis=0)
            if isinstance(h, Var):
                h.grad += d @ w_hh.value
            if isinstance(x, Var):
                x.grad += d @ w_ih.value
        tape.record(out, backward)
    return out


def relu(tape: Tape | None, x: Var) -> Var:
    out = Var(np.maximum(x.value, 0.0))
    if tape is not None:
        def backward():
            x.grad += (x.value > 0.0) * out.grad
        tape.record(out, backward)
    return out


def tanh(tape: Tape | None, x: Var) -> Var:
    out = Var(np.tanh(x.value))
    if tape is not None:
        def backward():
            x.grad += (1.0 - out.value * out.value) * out.grad
        tape.record(out, backward)
    return out


def softmax(tape: Tape | None, z: ArrayLike) -> Var:
    """Max-shifted softmax over the last axis; outputs are positive and sum to 1."""
    zv = _value(z)
    shifted = zv - zv.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = Var(e / e.sum(axis=-1, keepdims=True))
    if tape is not None:
        def backward():
            s = out.value
            g = out.grad
            inner = (g * s).sum(axis=-1, keepdims=True)
            if isinstance(z, Var):
                z.grad += s * (g - inner)
        tape.record(out, backward)
    return out


def log_softmax(tape: Tape | None, z: ArrayLike) -> Var:
    """log(softmax(z)) computed via max shift, stable for widely spread logits."""
    zv = _value(z)
    shifted = zv - zv.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out = Var(shifted - lse)
    if tape is not None:
        def backward():
            g = out.grad
            if isinstance(z, Var):
                z.grad += g - np.exp(out.value) * g.sum(axis=-1, keepdims=True)
        tape.record(out, backward)
    return out


def log_sum_exp(tape: Tape | None, terms: ArrayLike) -> Var:
    """ln sum(exp(terms)) over the last axis, max-subtracted. Terms may be -inf."""
    tv = _value(terms)
    if tv.shape[-1] == 0:
        raise ContractViolation("log_sum_exp of an empty vector")
    m = tv.max(axis=-1, keepdims=True)
    safe_m = np.where(np.isfinite(m), m, 0.0)  # all -inf slice -> result -inf
    e = np.exp(tv - safe_m)
    s = e.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore"):
        raw = safe_m + np.log(s)
    value = np.where(np.isfinite(m[..., 0]), raw[..., 0], -np.inf)
    out = Var(value)
    if tape is not None:
        def backward():
            if isinstance(terms, Var):
                terms.grad += (e / s) * np.expand_dims(out.grad, -1)
        tape.record(out, backward)
    return out


def add(tape: Tape | None, a: Var, b: Var) -> Var:
    out = Var(a.value + b.value)
    if tape is not None:
        def backward():
            a.grad += out.grad
            b.grad += out.grad
        tape.record(out, backward)
    return out


def sub(tape: Tape | None, a: Var, b: ArrayLike) -> Var:
    out = Var(a.value - _value(b))
    if tape is not None:
        def backward():
            a.grad += out.grad
            if isinstance(b, Var):
                b.grad -= out.grad
        tape.record(out, backward)
    return out


def mul(tape: Tape | None, a: Var, b: Var) -> Var:
    out = Var(a.value * b.value)
    if tape is not None:
        def backward():
            a.grad += b.value * out.grad
            b.grad += a.value * out.grad
        tape.record(out, backward)
    return out


def square(tape: Tape | None, x: Var) -> Var:
    out = Var(x.value * x.value)
    if tape is not None:
        def backward():
            x.grad += 2.0 * x.value * out.grad
        tape.record(out, backward)
    return out


def exp(tape: Tape | None, x: Var) -> Var:
    out = Var(np.exp(x.value))
    if tape is not None:
        def backward():
            x.grad += out.value * out.grad
        tape.record(out, backward)
    return out


def log(tape: Tape | None, x: Var) -> Var:
    out = Var(np.log(x.value))
    if tape is not None:
        def backward():
            x.grad += out.grad / x.value
        tape.record(out, backward)
    return out


def scale(tape: Tape | None, x: Var, c: float) -> Var:
    out = Var(x.value * c)
    if tape is not None:
        def backward():
            x.grad += c * out.grad
        tape.record(out, backward)
    return out


def shift(tape: Tape | None, x: Var, c: float) -> Var:
    out = Var(x.value + c)
    if tape is not None:
        def backward():
            x.grad += out.grad
        tape.record(out, backward)
    return out


def gather(tape: Tape | None, q: Var, idx: np.ndarray) -> Var:
    """Pick q[i, idx[i]] per batch row; gradient scatters back to the picked cells."""
    rows = np.arange(q.value.shape[0])
    out = Var(q.value[rows, idx])
    if tape is not None:
        def backward():
            np.add.at(q.grad, (rows, idx), out.grad)
        tape.record(out, backward)
    return out


def mean(tape: Tape | None, x: Var) -> Var:
    out = Var(x.value.mean())
    if tape is not None:
        def backward():
            x.grad += out.grad / x.value.size
        tape.record(out, backward)
    return out


def total(tape: Tape | None, x: Var) -> Var:
    out = Var(x.value.sum())
    if tape is not None:
        def backward():
            x.grad += out.grad
        tape.record(out, backward)
    return out


def uniform_init(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Weight init uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    bound = 1.0 / np.sqrt(cols)
    return rng.uniform(-bound, bound, size=(rows, cols))


def check_finite(params: Iterable[tuple[str, Param]]) -> None:
    for name, p in params:
        if not np.all(np.isfinite(p.value)):
            raise ContractViolation(f"parameter {name!r} contains non-finite values")
