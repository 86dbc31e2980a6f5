"""Minimal reverse-mode autodiff on dense numpy arrays.

The model needs a closed set of array operations, so instead of a general
graph compiler this module keeps an explicit tape: every op executed while
a Tape is active appends one record, and backward() replays the records in
reverse. Values are float64 in test/check mode and float32 in training
mode; the dtype is fixed when the leaf tensors are created and ops refuse
to mix dtypes silently.

Gradient conventions: relu'(0) = 0, broadcasting gradients are summed over
the broadcast axes, and accumulation order follows tape order, so two
backward passes over identical tapes are bitwise identical.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "ParamStore",
    "as_tensor",
    "matmul",
    "add",
    "scale",
    "relu",
    "log",
    "concat_last_dim",
    "reduce_sum",
    "softmax_over_flat",
    "masked_softmax",
    "gather_rows",
    "elementwise_mul",
    "reshape",
    "finite_diff_check",
]

F32 = np.float32
F64 = np.float64


class Tensor:
    """A dense array with an optional gradient slot.

    Tensors are created either as leaves (constants or trainable
    parameters) or as op outputs. The gradient slot, when filled, always
    has the same shape and dtype as the values.
    """

    __slots__ = ("values", "grad", "trainable", "name")

    def __init__(self, values, trainable=False, name=None):
        self.values = np.asarray(values)
        self.grad = None
        self.trainable = trainable
        self.name = name

    @property
    def shape(self):
        return self.values.shape

    @property
    def dtype(self):
        return self.values.dtype

    @property
    def size(self):
        return self.values.size

    def item(self):
        if self.values.size != 1:
            raise ValueError(f"item() on tensor of shape {self.shape}")
        return float(self.values.reshape(())[()])

    def zero_grad(self):
        self.grad = np.zeros_like(self.values)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag})"


def as_tensor(x, dtype=F64):
    """Wrap a numpy array or scalar as a constant Tensor of the given dtype."""
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


class _OpRecord:
    __slots__ = ("kind", "inputs", "output", "ctx")

    def __init__(self, kind, inputs, output, ctx):
        self.kind = kind
        self.inputs = inputs
        self.output = output
        self.ctx = ctx


_TAPE_STACK: list["Tape"] = []


def _record(kind, inputs, output, ctx):
    if _TAPE_STACK:
        _TAPE_STACK[-1].ops.append(_OpRecord(kind, inputs, output, ctx))
    return output


def _check_same_dtype(kind, *tensors):
    dtypes = {t.dtype for t in tensors}
    if len(dtypes) > 1:
        raise ValueError(f"{kind}: mixed dtypes {sorted(map(str, dtypes))}")


class Tape:
    """Records forward ops so backward() can replay them in reverse.

    Use as a context manager; ops executed with no active tape still
    compute values but are not recorded (cheap inference mode).
    """

    def __init__(self):
        self.ops: list[_OpRecord] = []

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    def backward(self, loss: Tensor, seed: float = 1.0):
        """Propagate d(loss)/d(tensor) to every tensor on the tape.

        Trainable tensors accumulate into their .grad slot (summing with
        whatever is already there); intermediate gradients live only for
        the duration of the walk.
        """
        if loss.size != 1:
            raise ValueError(f"backward: loss must be scalar, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {
            id(loss): np.full_like(loss.values, seed)
        }
        for rec in reversed(self.ops):
            g = grads.pop(id(rec.output), None)
            if g is None:
                continue
            for inp, gi in zip(rec.inputs, _BACKWARD[rec.kind](rec, g)):
                if gi is None:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] += gi
                else:
                    grads[key] = gi
        # leaves keep their accumulated entries; fold trainable ones into .grad
        seen = set()
        leaves = [inp for rec in self.ops for inp in rec.inputs]
        if loss.trainable:
            leaves.append(loss)
        for inp in leaves:
            if inp.trainable and id(inp) not in seen and id(inp) in grads:
                seen.add(id(inp))
                if inp.grad is None:
                    inp.grad = grads[id(inp)].copy()
                else:
                    inp.grad += grads[id(inp)]


def backward(tape: Tape, loss: Tensor, seed: float = 1.0):
    tape.backward(loss, seed)


# ---------------------------------------------------------------------------
# ops
# ---------------------------------------------------------------------------


def _unbroadcast(grad, shape):
    """Sum gradient over axes that were broadcast to reach grad.shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def matmul(a: Tensor, b: Tensor, trans_a: bool = False, trans_b: bool = False) -> Tensor:
    """Matrix product, BLAS-style transpose flags on 2-D operands.

    Also accepts a stacked left operand (..., k) @ (k, m) with no flags,
    which is how per-edge projections are applied in one call.
    """
    _check_same_dtype("matmul", a, b)
    av, bv = a.values, b.values
    if av.ndim == 2 and bv.ndim == 2:
        am = av.T if trans_a else av
        bm = bv.T if trans_b else bv
        if am.shape[1] != bm.shape[0]:
            raise ValueError(
                f"matmul: inner dims disagree, {av.shape}(T={trans_a}) @ {bv.shape}(T={trans_b})"
            )
        out = Tensor(am @ bm)
    elif av.ndim > 2 and bv.ndim == 2:
        if trans_a or trans_b:
            raise ValueError("matmul: transpose flags only supported for 2-D operands")
        if av.shape[-1] != bv.shape[0]:
            raise ValueError(f"matmul: inner dims disagree, {av.shape} @ {bv.shape}")
        out = Tensor(av @ bv)
    else:
        raise ValueError(f"matmul: unsupported ranks {av.shape} @ {bv.shape}")
    return _record("matmul", (a, b), out, {"ta": trans_a, "tb": trans_b})


def _matmul_bwd(rec, g):
    a, b = rec.inputs
    av, bv = a.values, b.values
    ta, tb = rec.ctx["ta"], rec.ctx["tb"]
    if av.ndim == 2:
        am = av.T if ta else av
        bm = bv.T if tb else bv
        ga_m = g @ bm.T
        gb_m = am.T @ g
        ga = ga_m.T if ta else ga_m
        gb = gb_m.T if tb else gb_m
        return ga, gb
    # stacked (..., k) @ (k, m)
    ga = g @ bv.T
    k = av.shape[-1]
    gb = av.reshape(-1, k).T @ g.reshape(-1, g.shape[-1])
    return ga, gb


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum with numpy broadcasting."""
    _check_same_dtype("add", a, b)
    try:
        out = Tensor(a.values + b.values)
    except ValueError:
        raise ValueError(f"add: shapes {a.shape} and {b.shape} do not broadcast")
    return _record("add", (a, b), out, {})


def _add_bwd(rec, g):
    a, b = rec.inputs
    return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a python scalar constant (not a differentiable input)."""
    out = Tensor(a.values * a.dtype.type(c))
    return _record("scale", (a,), out, {"c": c})


def _scale_bwd(rec, g):
    return (g * rec.inputs[0].dtype.type(rec.ctx["c"]),)


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.values, 0))
    return _record("relu", (a,), out, {})


def _relu_bwd(rec, g):
    # subgradient 0 at the kink
    return (g * (rec.inputs[0].values > 0),)


def log(a: Tensor) -> Tensor:
    """Elementwise natural log; the caller guarantees positive inputs."""
    out = Tensor(np.log(a.values))
    return _record("log", (a,), out, {})


def _log_bwd(rec, g):
    return (g / rec.inputs[0].values,)


def elementwise_mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product with numpy broadcasting."""
    _check_same_dtype("elementwise_mul", a, b)
    try:
        out = Tensor(a.values * b.values)
    except ValueError:
        raise ValueError(
            f"elementwise_mul: shapes {a.shape} and {b.shape} do not broadcast"
        )
    return _record("elementwise_mul", (a, b), out, {})


def _mul_bwd(rec, g):
    a, b = rec.inputs
    return (
        _unbroadcast(g * b.values, a.shape),
        _unbroadcast(g * a.values, b.shape),
    )


def concat_last_dim(tensors) -> Tensor:
    """Concatenate along the last axis; all other axes must agree."""
    tensors = tuple(tensors)
    _check_same_dtype("concat_last_dim", *tensors)
    lead = {t.shape[:-1] for t in tensors}
    if len(lead) > 1:
        raise ValueError(f"concat_last_dim: leading shapes differ: {sorted(lead)}")
    out = Tensor(np.concatenate([t.values for t in tensors], axis=-1))
    sizes = [t.shape[-1] for t in tensors]
    return _record("concat_last_dim", tensors, out, {"sizes": sizes})


def _concat_bwd(rec, g):
    splits = np.cumsum(rec.ctx["sizes"])[:-1]
    return tuple(np.split(g, splits, axis=-1))


def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = Tensor(a.values.sum(axis=axis, keepdims=keepdims))
    return _record("reduce_sum", (a,), out, {"axis": axis, "keepdims": keepdims})


def _reduce_sum_bwd(rec, g):
    a = rec.inputs[0]
    axis, keepdims = rec.ctx["axis"], rec.ctx["keepdims"]
    if axis is None:
        return (np.full_like(a.values, 1.0) * g.reshape((1,) * a.values.ndim),)
    if not keepdims:
        g = np.expand_dims(g, axis)
    return (np.broadcast_to(g, a.shape).copy(),)


def reshape(a: Tensor, shape) -> Tensor:
    out = Tensor(a.values.reshape(shape))
    return _record("reshape", (a,), out, {})


def _reshape_bwd(rec, g):
    return (g.reshape(rec.inputs[0].shape),)


def concat_rows(tensors) -> Tensor:
    """Stack 2-D tensors along axis 0, composed from reshape + concat_last_dim
    (row-major flattening makes the row blocks contiguous)."""
    tensors = [t for t in tensors if t.shape[0] > 0]
    if not tensors:
        raise ValueError("concat_rows: nothing to stack")
    if len(tensors) == 1:
        return tensors[0]
    cols = {t.shape[1] for t in tensors}
    if len(cols) > 1:
        raise ValueError(f"concat_rows: column counts differ: {sorted(cols)}")
    c = cols.pop()
    flat = concat_last_dim([reshape(t, (1, t.shape[0] * c)) for t in tensors])
    return reshape(flat, (flat.shape[1] // c, c))


def gather_rows(a: Tensor, indices) -> Tensor:
    """Select rows along axis 0; repeated indices accumulate gradient."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise ValueError(f"gather_rows: indices must be 1-D, got shape {idx.shape}")
    if a.values.ndim < 1:
        raise ValueError("gather_rows: input must have at least one axis")
    out = Tensor(a.values[idx])
    return _record("gather_rows", (a,), out, {"idx": idx})


def _gather_rows_bwd(rec, g):
    a = rec.inputs[0]
    ga = np.zeros_like(a.values)
    np.add.at(ga, rec.ctx["idx"], g)
    return (ga,)


def _masked_softmax_values(x, finite, axis):
    """Shared forward kernel; `finite` marks allowed entries."""
    neg = np.where(finite, x, -np.inf)
    if axis is None:
        if not finite.any():
            raise ValueError("masked_softmax: all entries masked")
        m = neg.max()
        e = np.where(finite, np.exp(neg - m), 0.0)
        return e / e.sum()
    alive = finite.any(axis=axis)
    if not alive.all():
        raise ValueError(
            f"masked_softmax: fully masked slice along axis {axis} "
            "(environment bug: no feasible entry)"
        )
    m = neg.max(axis=axis, keepdims=True)
    e = np.where(finite, np.exp(neg - m), 0.0)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_over_flat(a: Tensor) -> Tensor:
    """Softmax over every entry jointly; output keeps the input shape."""
    finite = np.ones(a.shape, dtype=bool)
    out = Tensor(_masked_softmax_values(a.values, finite, None))
    return _record("softmax", (a,), out, {"axis": None})


def masked_softmax(a: Tensor, mask, axis=None) -> Tensor:
    """Softmax with an additive log-binary mask (entries in {0, -inf}).

    Masked entries come out exactly 0 and pass no gradient. `axis=None`
    normalizes over the whole tensor; an integer axis normalizes each
    slice along it independently. A fully masked slice is rejected.
    """
    mv = mask.values if isinstance(mask, Tensor) else np.asarray(mask)
    if mv.shape != a.shape:
        raise ValueError(f"masked_softmax: mask shape {mv.shape} != input {a.shape}")
    bad = ~((mv == 0) | np.isneginf(mv))
    if bad.any():
        raise ValueError("masked_softmax: mask entries must be 0 or -inf")
    finite = mv == 0
    out = Tensor(_masked_softmax_values(a.values, finite, axis))
    return _record("softmax", (a,), out, {"axis": axis})


def _softmax_bwd(rec, g):
    p = rec.output.values
    axis = rec.ctx["axis"]
    if axis is None:
        dot = (g * p).sum()
    else:
        dot = (g * p).sum(axis=axis, keepdims=True)
    return (p * (g - dot),)


_BACKWARD = {
    "matmul": _matmul_bwd,
    "add": _add_bwd,
    "scale": _scale_bwd,
    "relu": _relu_bwd,
    "log": _log_bwd,
    "elementwise_mul": _mul_bwd,
    "concat_last_dim": _concat_bwd,
    "reduce_sum": _reduce_sum_bwd,
    "reshape": _reshape_bwd,
    "gather_rows": _gather_rows_bwd,
    "softmax": _softmax_bwd,
}


# ---------------------------------------------------------------------------
# parameter store
# ---------------------------------------------------------------------------


class ParamStore:
    """Ordered map of hierarchical names to trainable tensors.

    Iteration order is insertion order, which makes optimizer updates,
    checkpoint layout and finite-difference sweeps deterministic.
    """

    def __init__(self, dtype=F32):
        self.dtype = np.dtype(dtype)
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, values) -> Tensor:
        if name in self._params:
            raise ValueError(f"parameter {name!r} already registered")
        t = Tensor(np.asarray(values, dtype=self.dtype), trainable=True, name=name)
        self._params[name] = t
        return t

    def __contains__(self, name):
        return name in self._params

    def __getitem__(self, name) -> Tensor:
        return self._params[name]

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params.keys())

    def items(self):
        return self._params.items()

    def total_count(self) -> int:
        return sum(t.size for t in self._params.values())

    def count(self, prefix: str) -> int:
        return sum(
            t.size for n, t in self._params.items() if n.startswith(prefix)
        )

    def zero_grads(self):
        for t in self._params.values():
            t.zero_grad()

    def clear_grads(self):
        for t in self._params.values():
            t.grad = None

    def state_arrays(self):
        """Name -> value array, in registration order (copies not taken)."""
        return {n: t.values for n, t in self._params.items()}

    def load_arrays(self, arrays: dict):
        for n, v in arrays.items():
            t = self._params[n]
            v = np.asarray(v, dtype=self.dtype)
            if v.shape != t.shape:
                raise ValueError(
                    f"parameter {n!r}: shape {v.shape} does not match {t.shape}"
                )
            t.values = v.copy()


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------


def finite_diff_check(f, store: ParamStore, epsilon: float = 1e-5):
    """Max relative error between tape gradients and central differences.

    `f` must rebuild its forward pass from the current parameter values on
    every call and return a scalar Tensor. Relative error per entry is
    |analytic - fd| / (|fd| + 1e-12); parameters the loss does not depend
    on produce bitwise-equal perturbed evaluations, hence fd = 0 = analytic
    and contribute nothing.
    """
    if not (0.0 < epsilon <= 1e-2):
        raise ValueError(f"epsilon must be in (0, 1e-2], got {epsilon}")
    if store.dtype != np.dtype(F64):
        raise ValueError("finite_diff_check requires a float64 parameter store")

    store.zero_grads()
    with Tape() as tape:
        loss = f()
    if not np.isfinite(loss.values).all():
        raise FloatingPointError("finite_diff_check: non-finite loss at base point")
    tape.backward(loss)

    worst = 0.0
    for name, p in store.items():
        grad = p.grad if p.grad is not None else np.zeros_like(p.values)
        flat = p.values.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            f_plus = f().item()
            flat[i] = orig - epsilon
            f_minus = f().item()
            flat[i] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise FloatingPointError(
                    f"finite_diff_check: non-finite evaluation perturbing {name}[{i}]"
                )
            fd = (f_plus - f_minus) / (2.0 * epsilon)
            rel = abs(gflat[i] - fd) / (abs(fd) + 1e-12)
            if rel > worst:
                worst = rel
    return worst
