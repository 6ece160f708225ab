"""Minimal dense-tensor reverse-mode automatic differentiation.

Exactly the operators the models need: affine maps, the usual pointwise
nonlinearities, concatenation/subtraction, an LSTM step, dropout, and a
weighted binary cross-entropy, plus momentum SGD. Values are float64
throughout; inputs may be single vectors ``(n,)`` or batches ``(B, n)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, TrainingError

check_finite = False  # set True in tests to assert the all-finite invariant


class Tensor:
    """A dense array plus the recorded backward rule that produced it."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, name=None, parents=(), backward_fn=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name
        self._parents = tuple(parents)
        self._backward = backward_fn

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        tag = self.name or ("param" if self.requires_grad else "tensor")
        return f"Tensor({tag}, shape={self.data.shape})"


def constant(data) -> Tensor:
    return Tensor(data)


def parameter(data, name=None) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def _wants_grad(t: Tensor) -> bool:
    return t.requires_grad or bool(t._parents)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not _wants_grad(t):
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64)  # copy: g may alias a live buffer
    else:
        t.grad += g


def _node(data, parents, backward_fn) -> Tensor:
    if check_finite and not np.isfinite(data).all():
        raise TrainingError("non-finite value produced by an operation")
    if any(_wants_grad(p) for p in parents):
        return Tensor(data, parents=parents, backward_fn=backward_fn)
    return Tensor(data)


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op}: operand shapes {a.data.shape} and {b.data.shape} differ")


# ---------------------------------------------------------------------------
# Operators


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")

    def backward_fn(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return _node(a.data + b.data, (a, b), backward_fn)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")

    def backward_fn(g):
        _accumulate(a, g)
        _accumulate(b, -g)

    return _node(a.data - b.data, (a, b), backward_fn)


def mul(a: Tensor, b) -> Tensor:
    """Elementwise product with another tensor, an array constant, or a scalar."""
    if isinstance(b, Tensor):
        _same_shape(a, b, "mul")

        def backward_fn(g):
            _accumulate(a, g * b.data)
            _accumulate(b, g * a.data)

        return _node(a.data * b.data, (a, b), backward_fn)

    factor = np.asarray(b, dtype=np.float64)
    if factor.shape not in ((), a.data.shape):
        raise ShapeError(f"mul: constant shape {factor.shape} incompatible with {a.data.shape}")

    def backward_fn(g):
        _accumulate(a, g * factor)

    return _node(a.data * factor, (a,), backward_fn)


def rsub(c, a: Tensor) -> Tensor:
    """Constant minus tensor, elementwise."""
    base = np.asarray(c, dtype=np.float64)

    def backward_fn(g):
        _accumulate(a, -g)

    return _node(base - a.data, (a,), backward_fn)


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)

    def backward_fn(g):
        _accumulate(x, g * (1.0 - out * out))

    return _node(out, (x,), backward_fn)


def sigmoid(x: Tensor) -> Tensor:
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))  # overflow-free formulation

    def backward_fn(g):
        _accumulate(x, g * out * (1.0 - out))

    return _node(out, (x,), backward_fn)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0  # subgradient 0 at 0

    def backward_fn(g):
        _accumulate(x, g * mask)

    return _node(np.where(mask, x.data, 0.0), (x,), backward_fn)


def absolute(x: Tensor) -> Tensor:
    sign = np.sign(x.data)  # subgradient 0 at 0

    def backward_fn(g):
        _accumulate(x, g * sign)

    return _node(np.abs(x.data), (x,), backward_fn)


def log(x: Tensor) -> Tensor:
    def backward_fn(g):
        _accumulate(x, g / x.data)

    return _node(np.log(x.data), (x,), backward_fn)


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    inside = (x.data > lo) & (x.data < hi)

    def backward_fn(g):
        _accumulate(x, g * inside)

    return _node(np.clip(x.data, lo, hi), (x,), backward_fn)


def concat(parts: list[Tensor], axis: int = -1) -> Tensor:
    if not parts:
        raise ShapeError("concat: empty input list")
    ndim = parts[0].data.ndim
    for p in parts:
        if p.data.ndim != ndim:
            raise ShapeError("concat: mixed ranks")
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def backward_fn(g):
        for p, piece in zip(parts, np.split(g, splits, axis=axis)):
            _accumulate(p, piece)

    return _node(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), backward_fn)


def slice_last(x: Tensor, start: int, end: int) -> Tensor:
    """Contiguous slice along the last axis."""
    if not 0 <= start < end <= x.data.shape[-1]:
        raise ShapeError(f"slice_last: [{start}:{end}] out of {x.data.shape}")

    def backward_fn(g):
        full = np.zeros_like(x.data)
        full[..., start:end] = g
        _accumulate(x, full)

    return _node(x.data[..., start:end].copy(), (x,), backward_fn)


def sum_all(x: Tensor) -> Tensor:
    def backward_fn(g):
        _accumulate(x, np.full_like(x.data, float(g)))

    return _node(x.data.sum(), (x,), backward_fn)


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: scale survivors by 1/(1-rate); identity at inference."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = (rng.random(x.data.shape) >= rate) / (1.0 - rate)

    def backward_fn(g):
        _accumulate(x, g * keep)

    return _node(x.data * keep, (x,), backward_fn)


_ELEMENTWISE = {"tanh": tanh, "sigmoid": sigmoid, "relu": relu, "abs": absolute}


def elementwise(op: str, *inputs: Tensor) -> Tensor:
    """Dispatch by operator name; `sub` takes two inputs, `concat` any number."""
    if op in _ELEMENTWISE:
        (x,) = inputs
        return _ELEMENTWISE[op](x)
    if op == "sub":
        a, b = inputs
        return sub(a, b)
    if op == "concat":
        return concat(list(inputs))
    raise ValueError(f"unknown elementwise op {op!r}")


# ---------------------------------------------------------------------------
# Dense and LSTM layers


@dataclass
class DenseParams:
    """Fully connected layer y = A x + b."""

    A: Tensor
    b: Tensor

    def params(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.A": self.A, f"{prefix}.b": self.b}


def affine(params: DenseParams, x: Tensor) -> Tensor:
    A, b = params.A, params.b
    out_dim, in_dim = A.data.shape
    if x.data.ndim == 1:
        if x.data.shape[0] != in_dim:
            raise ShapeError(f"affine: input {x.data.shape} vs weight {A.data.shape}")

        def backward_fn(g):
            _accumulate(A, np.outer(g, x.data))
            _accumulate(b, g)
            _accumulate(x, A.data.T @ g)

        return _node(A.data @ x.data + b.data, (A, b, x), backward_fn)
    if x.data.ndim == 2:
        if x.data.shape[1] != in_dim:
            raise ShapeError(f"affine: input {x.data.shape} vs weight {A.data.shape}")

        def backward_fn(g):
            _accumulate(A, g.T @ x.data)
            _accumulate(b, g.sum(axis=0))
            _accumulate(x, g @ A.data)

        return _node(x.data @ A.data.T + b.data, (A, b, x), backward_fn)
    raise ShapeError(f"affine: rank-{x.data.ndim} input unsupported")


@dataclass
class LSTMCellParams:
    """Gate weights over the concatenated [input, hidden] vector."""

    input_gate: DenseParams
    forget_gate: DenseParams
    output_gate: DenseParams
    candidate: DenseParams

    @property
    def hidden_size(self) -> int:
        return self.input_gate.A.data.shape[0]

    def params(self, prefix: str) -> dict[str, Tensor]:
        out = {}
        for gate_name in ("input_gate", "forget_gate", "output_gate", "candidate"):
            out.update(getattr(self, gate_name).params(f"{prefix}.{gate_name}"))
        return out


def _fused_gates(cell: LSTMCellParams) -> DenseParams:
    """All four gate layers as one stacked affine (a single GEMM per step).

    Gradients flow back into the individual gate matrices through the concat.
    """
    return DenseParams(
        A=concat(
            [cell.input_gate.A, cell.forget_gate.A, cell.output_gate.A, cell.candidate.A],
            axis=0,
        ),
        b=concat(
            [cell.input_gate.b, cell.forget_gate.b, cell.output_gate.b, cell.candidate.b],
            axis=0,
        ),
    )


def lstm_step(cell: LSTMCellParams, x: Tensor, h: Tensor, c: Tensor, fused=None):
    """One forget-gate LSTM step; returns (h', c')."""
    hidden = cell.hidden_size
    z = concat([x, h], axis=-1)
    pre = affine(fused if fused is not None else _fused_gates(cell), z)
    i = sigmoid(slice_last(pre, 0, hidden))
    f = sigmoid(slice_last(pre, hidden, 2 * hidden))
    o = sigmoid(slice_last(pre, 2 * hidden, 3 * hidden))
    g = tanh(slice_last(pre, 3 * hidden, 4 * hidden))
    c_next = add(mul(f, c), mul(i, g))
    h_next = mul(o, tanh(c_next))
    return h_next, c_next


def lstm_last(cell: LSTMCellParams, xs: list[Tensor]) -> Tensor:
    """Fold lstm_step over a sequence from the zero state; final hidden state."""
    if not xs:
        raise ShapeError("lstm_last: empty sequence")
    hidden = cell.hidden_size
    first = xs[0].data
    state_shape = (hidden,) if first.ndim == 1 else (first.shape[0], hidden)
    h = constant(np.zeros(state_shape))
    c = constant(np.zeros(state_shape))
    fused = _fused_gates(cell)
    for x in xs:
        h, c = lstm_step(cell, x, h, c, fused=fused)
    return h


# ---------------------------------------------------------------------------
# Loss


def weighted_bce(y, yhat: Tensor, z: float, eps: float = 1e-7) -> Tensor:
    """-sum_i [z y_i log p_i + (1-z)(1-y_i) log(1-p_i)], probabilities clamped."""
    if not 0.0 <= z <= 1.0:
        raise ValueError(f"positive-class weight must be in [0, 1], got {z}")
    labels = np.asarray(y, dtype=np.float64)
    if labels.shape != yhat.data.shape:
        raise ShapeError(f"weighted_bce: labels {labels.shape} vs predictions {yhat.data.shape}")
    p = clamp(yhat, eps, 1.0 - eps)
    pos_term = mul(log(p), z * labels)
    neg_term = mul(log(rsub(1.0, p)), (1.0 - z) * (1.0 - labels))
    return mul(sum_all(add(pos_term, neg_term)), -1.0)


def bce(y, yhat: Tensor, eps: float = 1e-7) -> Tensor:
    """Unweighted binary cross-entropy (sum over elements)."""
    return mul(weighted_bce(y, yhat, 0.5, eps=eps), 2.0)


# ---------------------------------------------------------------------------
# Backward pass


def backward(loss: Tensor) -> None:
    """Populate .grad on every reachable requires_grad tensor; clears the tape."""
    if loss.data.size != 1:
        raise ShapeError(f"backward expects a scalar loss, got shape {loss.data.shape}")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    for node in topo:
        node._parents = ()
        node._backward = None
        if not node.requires_grad:
            node.grad = None


# ---------------------------------------------------------------------------
# Optimizer


class SGDState:
    """Momentum SGD: v <- mu v - lr g; p <- p + v."""

    def __init__(self, learning_rate: float = 0.01, momentum: float = 0.9):
        if learning_rate <= 0:
            raise ValueError(f"learning rate must be positive, got {learning_rate}")
        if not 0.0 <= momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {momentum}")
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.velocity: dict[str, np.ndarray] = {}


def sgd_step(state: SGDState, params: dict[str, Tensor], grads=None) -> None:
    """Apply one update in place; gradients default to each tensor's .grad."""
    for name in params:
        p = params[name]
        g = grads[name] if grads is not None else p.grad
        if g is None:
            g = np.zeros_like(p.data)
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.data.shape:
            raise ShapeError(f"sgd_step: gradient shape {g.shape} vs {p.data.shape} for {name}")
        if not np.isfinite(g).all():
            raise TrainingError(f"non-finite gradient for parameter {name!r}")
        v = state.velocity.get(name)
        if v is None:
            v = np.zeros_like(p.data)
        v = state.momentum * v - state.learning_rate * g
        state.velocity[name] = v
        p.data += v
        p.grad = None


# ---------------------------------------------------------------------------
# Initialization


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_dense(rng: np.random.Generator, in_dim: int, out_dim: int, name: str) -> DenseParams:
    return DenseParams(
        A=parameter(glorot_uniform(rng, in_dim, out_dim, (out_dim, in_dim)), name=f"{name}.A"),
        b=parameter(np.zeros(out_dim), name=f"{name}.b"),
    )


def init_lstm(rng: np.random.Generator, input_dim: int, hidden: int, name: str) -> LSTMCellParams:
    """Glorot-uniform gate matrices, zero biases, forget-gate bias +1."""
    total = input_dim + hidden

    def gate(gate_name, bias_value=0.0):
        return DenseParams(
            A=parameter(
                glorot_uniform(rng, total, hidden, (hidden, total)),
                name=f"{name}.{gate_name}.A",
            ),
            b=parameter(np.full(hidden, bias_value), name=f"{name}.{gate_name}.b"),
        )

    return LSTMCellParams(
        input_gate=gate("input_gate"),
        forget_gate=gate("forget_gate", bias_value=1.0),
        output_gate=gate("output_gate"),
        candidate=gate("candidate"),
    )


# ---------------------------------------------------------------------------
# Checkpoints

_MAGIC = b"BEE1"
_VERSION = 1


def save_tensors(path, tensors: dict[str, np.ndarray]) -> None:
    """Versioned little-endian blob of named float64 arrays."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(tensors)))
        for name, arr in tensors.items():
            arr = np.asarray(arr, dtype=np.float64)
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.astype("<f8").tobytes())


def load_tensors(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise TrainingError(f"{path}: not a checkpoint file")
        version, count = struct.unpack("<II", fh.read(8))
        if version != _VERSION:
            raise TrainingError(f"{path}: unsupported checkpoint version {version}")
        out = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim)) if ndim else ()
            size = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(8 * size), dtype="<f8").reshape(shape)
            out[name] = np.array(data, dtype=np.float64)
        return out


# ---------------------------------------------------------------------------
# Finite-difference gradient checking


def gradient_check(build, params: dict[str, Tensor], eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``build`` must deterministically reconstruct the scalar loss from the
    current parameter values. Relative error uses max(|a|, |n|, 1e-3) as
    the scale so that zero-gradient (disconnected) parameters compare clean.
    """
    loss = build()
    backward(loss)
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in params.items()
    }
    for p in params.values():
        p.grad = None
    worst = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        numeric = np.zeros(flat.size)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + eps
            up = float(build().data)
            flat[idx] = orig - eps
            down = float(build().data)
            flat[idx] = orig
            numeric[idx] = (up - down) / (2.0 * eps)
        a = analytic[name].reshape(-1)
        scale = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-3)
        err = np.abs(a - numeric) / scale
        if err.size:
            worst = max(worst, float(err.max()))
    return worst
