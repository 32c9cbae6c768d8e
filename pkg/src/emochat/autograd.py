"""Reverse-mode automatic differentiation over small dense arrays.

The engine is deliberately minimal. Tensors wrap numpy arrays (float32 for
training, float64 for gradient checking). Primitive ops record onto an
explicit Tape while one is active; Tape.backward walks the records in
reverse execution order and accumulates gradients with += into every tensor
that contributed. Parameters are named leaf tensors with persistent
gradient buffers, owned by a ParameterStore that also handles seeded
initialization.

Gradient buffers are never mutated in place during backward; accumulation
rebinds (grad = grad + piece), so backward closures may safely return views
of the upstream gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32
INIT_RANGE = 0.08


def _shape_error(op: str, *shapes) -> ValueError:
    described = " vs ".join(str(tuple(int(d) for d in s)) for s in shapes)
    return ValueError(f"{op}: incompatible shapes {described}")


class Tensor:
    """A dense float array plus a gradient slot filled in by backward()."""

    __slots__ = ("data", "grad")

    def __init__(self, data, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype})"


class Parameter(Tensor):
    """Named trainable leaf. Its grad buffer persists across tapes until
    zero_grad, so gradients accumulate over repeated use."""

    __slots__ = ("name",)

    def __init__(self, name: str, data, dtype=None):
        super().__init__(data, dtype)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


# --- tape ------------------------------------------------------------------

_TAPES: list["Tape"] = []


class Tape:
    """Execution-ordered record of primitive ops for one forward pass."""

    def __init__(self):
        self._nodes: list[tuple[Tensor, tuple, Callable]] = []
        self._used = False

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _TAPES.pop()
        return False

    def __len__(self) -> int:
        return len(self._nodes)

    def backward(self, loss: Tensor) -> None:
        """Seed d(loss)/d(loss)=1 and propagate through the tape in reverse.

        A tape can only be walked once; rebuild the graph for another pass.
        """
        if self._used:
            raise RuntimeError("backward already ran on this tape; record a new forward pass first")
        if not self._nodes:
            raise RuntimeError("backward on an empty tape")
        if loss.data.size != 1:
            raise ValueError(f"backward expects a scalar loss, got shape {loss.shape}")
        self._used = True
        loss.grad = np.ones_like(loss.data)
        for out, inputs, bwd in reversed(self._nodes):
            g = out.grad
            if g is None:
                continue
            for tensor, piece in zip(inputs, bwd(g)):
                if piece is None:
                    continue
                tensor.grad = piece if tensor.grad is None else tensor.grad + piece


def _record(out: Tensor, inputs: tuple, bwd: Callable) -> Tensor:
    if _TAPES:
        _TAPES[-1]._nodes.append((out, inputs, bwd))
    return out


def constant(values, dtype=None) -> Tensor:
    """Non-trainable tensor for targets, masks turned dense, zero states."""
    return Tensor(np.asarray(values), dtype=dtype)


# --- primitives -------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Product for the three layouts used here: (m,n)@(n,), (m,)@(m,n), (m,n)@(n,p)."""
    ad, bd = a.data, b.data
    if ad.ndim == 2 and bd.ndim == 1:
        if ad.shape[1] != bd.shape[0]:
            raise _shape_error("matmul", ad.shape, bd.shape)
        out = Tensor(ad @ bd)

        def bwd(g):
            return np.outer(g, bd), ad.T @ g

    elif ad.ndim == 1 and bd.ndim == 2:
        if ad.shape[0] != bd.shape[0]:
            raise _shape_error("matmul", ad.shape, bd.shape)
        out = Tensor(ad @ bd)

        def bwd(g):
            return bd @ g, np.outer(ad, g)

    elif ad.ndim == 2 and bd.ndim == 2:
        if ad.shape[1] != bd.shape[0]:
            raise _shape_error("matmul", ad.shape, bd.shape)
        out = Tensor(ad @ bd)

        def bwd(g):
            return g @ bd.T, ad.T @ g

    else:
        raise _shape_error("matmul", ad.shape, bd.shape)
    return _record(out, (a, b), bwd)


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise _shape_error("transpose", x.data.shape)
    out = Tensor(x.data.T)

    def bwd(g):
        return (g.T,)

    return _record(out, (x,), bwd)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise _shape_error("add", a.data.shape, b.data.shape)
    out = Tensor(a.data + b.data)

    def bwd(g):
        return g, g

    return _record(out, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise _shape_error("mul", a.data.shape, b.data.shape)
    out = Tensor(a.data * b.data)
    ad, bd = a.data, b.data

    def bwd(g):
        return g * bd, g * ad

    return _record(out, (a, b), bwd)


def scale(x: Tensor, c: float) -> Tensor:
    out = Tensor(x.data * c)

    def bwd(g):
        return (g * c,)

    return _record(out, (x,), bwd)


def add_scalar(x: Tensor, c: float) -> Tensor:
    out = Tensor(x.data + c)

    def bwd(g):
        return (g,)

    return _record(out, (x,), bwd)


def concat(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate two 1-D tensors."""
    if a.data.ndim != 1 or b.data.ndim != 1:
        raise _shape_error("concat", a.data.shape, b.data.shape)
    out = Tensor(np.concatenate([a.data, b.data]))
    n = a.data.shape[0]

    def bwd(g):
        return g[:n], g[n:]

    return _record(out, (a, b), bwd)


def sigmoid(x: Tensor) -> Tensor:
    xd = x.data
    out_d = np.empty_like(xd)
    pos = xd >= 0
    out_d[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    ex = np.exp(xd[~pos])
    out_d[~pos] = ex / (1.0 + ex)
    out = Tensor(out_d)

    def bwd(g):
        return (g * out_d * (1.0 - out_d),)

    return _record(out, (x,), bwd)


def tanh(x: Tensor) -> Tensor:
    out_d = np.tanh(x.data)
    out = Tensor(out_d)

    def bwd(g):
        return (g * (1.0 - out_d * out_d),)

    return _record(out, (x,), bwd)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    xd = x.data
    shifted = xd - xd.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_d = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(out_d)

    def bwd(g):
        dot = (g * out_d).sum(axis=axis, keepdims=True)
        return (out_d * (g - dot),)

    return _record(out, (x,), bwd)


def masked_softmax(x: Tensor, mask: np.ndarray) -> Tensor:
    """Softmax over the unmasked entries of a 1-D tensor.

    Masked positions get weight exactly 0.0 and receive zero gradient;
    unmasked positions match a plain softmax over the surviving entries.
    """
    xd = x.data
    if xd.ndim != 1:
        raise _shape_error("masked_softmax", xd.shape)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != xd.shape:
        raise _shape_error("masked_softmax", xd.shape, mask.shape)
    if not mask.any():
        raise ValueError("masked_softmax: every position is masked")
    out_d = np.zeros_like(xd)
    kept = xd[mask]
    e = np.exp(kept - kept.max())
    out_d[mask] = e / e.sum()
    out = Tensor(out_d)

    def bwd(g):
        dot = (g * out_d).sum()
        return (out_d * (g - dot),)  # zero where out_d is zero

    return _record(out, (x,), bwd)


def log(x: Tensor) -> Tensor:
    xd = x.data
    out = Tensor(np.log(xd))

    def bwd(g):
        return (g / xd,)

    return _record(out, (x,), bwd)


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clip values to [lo, hi]; clipped entries get zero gradient."""
    xd = x.data
    out = Tensor(np.clip(xd, lo, hi))
    inside = ((xd > lo) & (xd < hi)).astype(xd.dtype)

    def bwd(g):
        return (g * inside,)

    return _record(out, (x,), bwd)


def embed_row(table: Tensor, token_id: int) -> Tensor:
    """Row lookup into an embedding table of shape (vocab, dim)."""
    if table.data.ndim != 2:
        raise _shape_error("embed_row", table.data.shape)
    if not 0 <= token_id < table.data.shape[0]:
        raise ValueError(f"embed_row: id {token_id} outside table of {table.data.shape[0]} rows")
    out = Tensor(table.data[token_id].copy())
    vocab = table.data.shape[0]

    def bwd(g):
        gt = np.zeros((vocab, g.shape[0]), dtype=g.dtype)
        gt[token_id] = g
        return (gt,)

    return _record(out, (table,), bwd)


def rows_stack(rows: Sequence[Tensor]) -> Tensor:
    """Stack T equal-length vectors into a (T, dim) matrix."""
    if not rows:
        raise ValueError("rows_stack: empty sequence")
    out = Tensor(np.stack([r.data for r in rows]))

    def bwd(g):
        return tuple(g[i] for i in range(len(rows)))

    return _record(out, tuple(rows), bwd)


def add_rowvec(m: Tensor, v: Tensor) -> Tensor:
    """Add a (dim,) vector to every row of a (T, dim) matrix."""
    if m.data.ndim != 2 or v.data.ndim != 1 or m.data.shape[1] != v.data.shape[0]:
        raise _shape_error("add_rowvec", m.data.shape, v.data.shape)
    out = Tensor(m.data + v.data[None, :])

    def bwd(g):
        return g, g.sum(axis=0)

    return _record(out, (m, v), bwd)


def vsum(x: Tensor) -> Tensor:
    """Sum of all entries, as a scalar tensor."""
    out = Tensor(np.asarray(x.data.sum()))
    shape = x.data.shape

    def bwd(g):
        return (np.full(shape, g, dtype=g.dtype),)

    return _record(out, (x,), bwd)


def log_softmax(x: Tensor) -> Tensor:
    xd = x.data
    if xd.ndim != 1:
        raise _shape_error("log_softmax", xd.shape)
    shifted = xd - xd.max()
    lse = np.log(np.exp(shifted).sum())
    out_d = shifted - lse
    out = Tensor(out_d)
    probs = np.exp(out_d)

    def bwd(g):
        return (g - probs * g.sum(),)

    return _record(out, (x,), bwd)


def pick(x: Tensor, index: int) -> Tensor:
    """Select one entry of a 1-D tensor as a scalar."""
    xd = x.data
    if xd.ndim != 1:
        raise _shape_error("pick", xd.shape)
    if not 0 <= index < xd.shape[0]:
        raise ValueError(f"pick: index {index} outside vector of length {xd.shape[0]}")
    out = Tensor(np.asarray(xd[index]))
    n = xd.shape[0]

    def bwd(g):
        gx = np.zeros(n, dtype=g.dtype)
        gx[index] = g
        return (gx,)

    return _record(out, (x,), bwd)


def mean_tensors(terms: Sequence[Tensor]) -> Tensor:
    """Arithmetic mean of scalar tensors."""
    if not terms:
        raise ValueError("mean_tensors: empty sequence")
    total = terms[0]
    for t in terms[1:]:
        total = add(total, t)
    return scale(total, 1.0 / len(terms))


# --- GRU cell ----------------------------------------------------------------


@dataclass
class GRUCellParams:
    """Weight set for one gated recurrent cell.

    Gates follow the standard form: update z and reset r from sigmoid
    affine maps, candidate from tanh with the reset applied to the previous
    state before its recurrent matmul, new state (1-z)*h + z*candidate.
    """

    w_z: Parameter
    u_z: Parameter
    b_z: Parameter
    w_r: Parameter
    u_r: Parameter
    b_r: Parameter
    w_h: Parameter
    u_h: Parameter
    b_h: Parameter

    def all(self) -> list[Parameter]:
        return [self.w_z, self.u_z, self.b_z, self.w_r, self.u_r, self.b_r,
                self.w_h, self.u_h, self.b_h]


def gru_cell(x: Tensor, h_prev: Tensor, p: GRUCellParams) -> Tensor:
    """One recurrence step: (input, previous state) -> new state."""
    z = sigmoid(add(add(matmul(p.w_z, x), matmul(p.u_z, h_prev)), p.b_z))
    r = sigmoid(add(add(matmul(p.w_r, x), matmul(p.u_r, h_prev)), p.b_r))
    cand = tanh(add(add(matmul(p.w_h, x), matmul(p.u_h, mul(r, h_prev))), p.b_h))
    keep = add_scalar(scale(z, -1.0), 1.0)
    return add(mul(keep, h_prev), mul(z, cand))


# --- parameter store ---------------------------------------------------------


class ParameterStore:
    """Registry of named parameters with seeded uniform initialization.

    Creation order is preserved and defines the serialization order.
    Initial values are drawn in float64 and cast, so a float32 model and its
    float64 check-mode twin start from identical values.
    """

    def __init__(self, seed: int = 0, dtype=DEFAULT_DTYPE):
        self.dtype = np.dtype(dtype)
        self._rng = np.random.default_rng([seed, 0])
        self._params: dict[str, Parameter] = {}

    def create(self, name: str, shape: tuple[int, ...]) -> Parameter:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        values = self._rng.uniform(-INIT_RANGE, INIT_RANGE, size=shape)
        p = Parameter(name, values.astype(self.dtype))
        self._params[name] = p
        return p

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def names(self) -> list[str]:
        return list(self._params)

    def parameters(self) -> list[Parameter]:
        return list(self._params.values())

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.zero_grad()


# --- optimization and checking ------------------------------------------------


def sgd_step(params: Iterable[Parameter], learning_rate: float,
             clip_norm: float | None = None) -> float:
    """In-place SGD update with optional global-norm gradient clipping.

    Returns the pre-clip global gradient norm.
    """
    if learning_rate <= 0:
        raise ValueError(f"learning_rate must be positive, got {learning_rate}")
    params = list(params)
    total = math.sqrt(sum(float((p.grad * p.grad).sum()) for p in params))
    factor = 1.0
    if clip_norm is not None:
        if clip_norm <= 0:
            raise ValueError(f"clip_norm must be positive, got {clip_norm}")
        if total > clip_norm:
            factor = clip_norm / total
    step = learning_rate * factor
    for p in params:
        p.data -= step * p.grad
    return total


@dataclass
class GradCheckResult:
    max_rel_error: float
    param_name: str
    index: tuple[int, ...]
    entries: int

    def passed(self, threshold: float = 1e-2) -> bool:
        return self.max_rel_error < threshold


def finite_diff_check(loss_fn: Callable[[], Tensor], params: Iterable[Parameter],
                      epsilon: float = 1e-3, denom_floor: float = 1e-4,
                      mutate_grads: Callable[[dict], None] | None = None) -> GradCheckResult:
    """Compare tape gradients against central finite differences.

    loss_fn must rebuild the forward graph from current parameter values and
    be bit-deterministic; that is verified by evaluating it twice up front.
    Relative error per entry is |ad - fd| / max(|fd|, denom_floor); the floor
    keeps finite-difference truncation noise on near-zero gradients from
    registering as failures. Run on a float64 store: float32 parameters lose
    the perturbation to rounding.

    mutate_grads, when given, may edit the name->gradient dict before the
    comparison; the fault-injection path of the gradcheck command uses it.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    params = list(params)
    if not params:
        raise ValueError("finite_diff_check: no parameters to check")
    base = loss_fn().item()
    again = loss_fn().item()
    if base != again:
        raise RuntimeError(
            f"loss_fn is not deterministic: {base!r} != {again!r}; a finite-difference check is meaningless")

    for p in params:
        p.zero_grad()
    with Tape() as tape:
        tape.backward(loss_fn())
    grads = {p.name: p.grad.copy() for p in params}
    if mutate_grads is not None:
        mutate_grads(grads)

    worst_rel = -1.0
    worst_name = params[0].name
    worst_index: tuple[int, ...] = ()
    entries = 0
    for p in params:
        flat = p.data.reshape(-1)
        gflat = grads[p.name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            f_plus = loss_fn().item()
            flat[i] = orig - epsilon
            f_minus = loss_fn().item()
            flat[i] = orig
            fd = (f_plus - f_minus) / (2.0 * epsilon)
            rel = abs(float(gflat[i]) - fd) / max(abs(fd), denom_floor)
            entries += 1
            if rel > worst_rel:
                worst_rel = rel
                worst_name = p.name
                worst_index = tuple(int(j) for j in np.unravel_index(i, p.data.shape))
    return GradCheckResult(worst_rel, worst_name, worst_index, entries)
