"""Dense float64 tensors with tape-based reverse-mode differentiation.

Everything trainable in this package (grid vectors, generator parameters,
scene vectors, network weights) lives in a :class:`Tensor`.  Ops record a
backward closure on a tape; :func:`backward` replays it in reverse
topological order, summing contributions when a tensor feeds several
consumers.  Computation is float64 throughout; 32-bit floats appear only in
serialized files.

There is deliberately no broadcasting in the elementwise ops: shapes must
match exactly, and the few broadcast patterns the models need (bias columns,
per-column scaling) are explicit ops with explicit adjoints.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DeterminismError, OptimizerError, ShapeError

__all__ = [
    "Tensor",
    "add",
    "sub",
    "mul",
    "scale",
    "add_col",
    "scale_columns",
    "matmul",
    "leaky_relu",
    "tanh",
    "sigmoid",
    "tensor_sum",
    "mse_loss",
    "concat_rows",
    "concat_cols",
    "gather_columns",
    "reshape",
    "backward",
    "Adam",
    "adam_step",
    "GradCheckReport",
    "check_gradients",
]


class Tensor:
    """A dense float64 array plus gradient storage and tape bookkeeping.

    Attributes:
        data: the value, a C-contiguous float64 ndarray.
        grad: accumulated gradient, same shape as ``data``, zero-initialized.
        requires_grad: whether backward should reach this tensor.
        name: optional label used in optimizer and grad-check reports.
    """

    __slots__ = ("data", "_grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: str | None = None,
        _parents: tuple["Tensor", ...] = (),
        _backward: Callable[[np.ndarray], tuple] | None = None,
    ):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self._grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents = _parents
        self._backward = _backward

    @property
    def grad(self) -> np.ndarray:
        # Allocated on first touch; intermediates in a pure forward pass
        # never pay for a gradient buffer.
        if self._grad is None:
            self._grad = np.zeros_like(self.data)
        return self._grad

    @grad.setter
    def grad(self, value) -> None:
        self._grad = np.ascontiguousarray(value, dtype=np.float64).reshape(self.data.shape)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        if self._grad is not None:
            self._grad[...] = 0.0

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        tag = self.name or "tensor"
        return f"Tensor({tag}, shape={self.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; the named functions below are the primary API.
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    def __rmul__(self, other) -> "Tensor":
        return scale(self, float(other))

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


def _check_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: operand shapes differ, {a.shape} vs {b.shape}")


def _node(data, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    req = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=req, _parents=parents, _backward=backward_fn)


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("add", a, b)
    return _node(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("sub", a, b)
    return _node(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("mul", a, b)
    return _node(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _node(a.data * c, (a,), lambda g: (g * c,))


def add_col(a: Tensor, bias: Tensor) -> Tensor:
    """Add a length-m bias vector to every column of an m x n matrix."""
    if a.data.ndim != 2 or bias.data.ndim != 1 or a.shape[0] != bias.shape[0]:
        raise ShapeError(f"add_col: need (m, n) and (m,), got {a.shape} and {bias.shape}")
    return _node(a.data + bias.data[:, None], (a, bias), lambda g: (g, g.sum(axis=1)))


def scale_columns(a: Tensor, w: Tensor) -> Tensor:
    """Scale column j of an m x n matrix by w[j]."""
    if a.data.ndim != 2 or w.data.ndim != 1 or a.shape[1] != w.shape[0]:
        raise ShapeError(f"scale_columns: need (m, n) and (n,), got {a.shape} and {w.shape}")
    return _node(
        a.data * w.data[None, :],
        (a, w),
        lambda g: (g * w.data[None, :], (g * a.data).sum(axis=0)),
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul: operands must be 2-D, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} vs {b.shape}")
    return _node(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def leaky_relu(a: Tensor, slope: float = 0.1) -> Tensor:
    # Derivative at exactly 0 is defined as the slope.
    deriv = np.where(a.data > 0.0, 1.0, slope)
    return _node(np.where(a.data > 0.0, a.data, slope * a.data), (a,), lambda g: (g * deriv,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _node(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a: Tensor) -> Tensor:
    # Evaluate through exp(-|x|) so large |x| cannot overflow.
    e = np.exp(-np.abs(a.data))
    out = np.where(a.data >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _node(out, (a,), lambda g: (g * out * (1.0 - out),))


def tensor_sum(a: Tensor) -> Tensor:
    return _node(
        np.asarray(a.data.sum()).reshape(()),
        (a,),
        lambda g: (np.full(a.shape, float(g.reshape(()))),),
    )


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean of squared differences over all elements; scalar output."""
    _check_same_shape("mse_loss", pred, target)
    diff = pred.data - target.data
    n = diff.size

    def bwd(g):
        coeff = float(g.reshape(())) * (2.0 / n)
        return (coeff * diff, -coeff * diff)

    return _node(np.asarray((diff * diff).mean()).reshape(()), (pred, target), bwd)


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    """Stack 2-D tensors with equal column counts along axis 0."""
    parts = tuple(parts)
    cols = {p.shape[1] for p in parts if p.data.ndim == 2}
    if any(p.data.ndim != 2 for p in parts) or len(cols) != 1:
        raise ShapeError(f"concat_rows: need 2-D parts with equal columns, got {[p.shape for p in parts]}")
    offsets = np.cumsum([0] + [p.shape[0] for p in parts])

    def bwd(g):
        return tuple(g[lo:hi] for lo, hi in zip(offsets[:-1], offsets[1:]))

    return _node(np.concatenate([p.data for p in parts], axis=0), parts, bwd)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    """Stack 2-D tensors with equal row counts along axis 1."""
    parts = tuple(parts)
    rows = {p.shape[0] for p in parts if p.data.ndim == 2}
    if any(p.data.ndim != 2 for p in parts) or len(rows) != 1:
        raise ShapeError(f"concat_cols: need 2-D parts with equal rows, got {[p.shape for p in parts]}")
    offsets = np.cumsum([0] + [p.shape[1] for p in parts])

    def bwd(g):
        return tuple(g[:, lo:hi] for lo, hi in zip(offsets[:-1], offsets[1:]))

    return _node(np.concatenate([p.data for p in parts], axis=1), parts, bwd)


def gather_columns(a: Tensor, idx) -> Tensor:
    """Select columns of an m x N matrix; repeated indices sum in backward."""
    if a.data.ndim != 2:
        raise ShapeError(f"gather_columns: need a 2-D tensor, got {a.shape}")
    idx = np.asarray(idx, dtype=np.intp)

    def bwd(g):
        out = np.zeros(a.shape)
        np.add.at(out, (slice(None), idx), g)
        return (out,)

    return _node(a.data[:, idx], (a,), bwd)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = a.shape
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every requires_grad leaf's ``grad``.

    The loss must be scalar.  Leaf grads add up, so repeated calls without
    zeroing accumulate, and a tensor feeding several consumers receives the
    sum of their contributions.  Messages for interior nodes flow through a
    private dict (their ``grad`` buffers are never allocated), which also
    keeps a second backward over the same graph from double counting.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward: loss must be scalar, got shape {loss.shape}")

    # Iterative topological order over the requires_grad subgraph.
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad:
                stack.append((p, False))

    msgs: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = msgs.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad += g  # leaf: accumulate
            continue
        for p, contrib in zip(node._parents, node._backward(g)):
            if contrib is None or not p.requires_grad:
                continue
            prev = msgs.get(id(p))
            # Never mutate a stored message in place: closures may alias them.
            msgs[id(p)] = contrib if prev is None else prev + contrib


class Adam:
    """Adam with bias correction over a fixed list of parameter tensors.

    Moments live in float64 arrays shaped like their parameters;
    ``step_count`` increases by one per :meth:`step`.  Gradients are left
    untouched; callers zero them.
    """

    def __init__(
        self,
        params: Sequence[Tensor],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ):
        self.params = list(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.epsilon = float(epsilon)
        self.step_count = 0
        self.first_moment = [np.zeros_like(p.data) for p in self.params]
        self.second_moment = [np.zeros_like(p.data) for p in self.params]
        # Scratch buffers keep the update allocation-free; the arithmetic is
        # the standard bias-corrected form, evaluated in place.
        self._scratch_m = [np.empty_like(p.data) for p in self.params]
        self._scratch_v = [np.empty_like(p.data) for p in self.params]

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            g = p.grad
            if not np.isfinite(g).all():
                label = p.name or f"param {i}"
                raise OptimizerError(f"non-finite gradient in parameter {i} ({label})")
            m = self.first_moment[i]
            v = self.second_moment[i]
            m *= b1
            m += (1.0 - b1) * g
            sv = self._scratch_v[i]
            np.multiply(g, g, out=sv)
            v *= b2
            sv *= 1.0 - b2
            v += sv
            # m_hat / (sqrt(v_hat) + eps), built in the scratch buffers.
            sm = self._scratch_m[i]
            np.multiply(m, 1.0 / (1.0 - b1**t), out=sm)
            np.multiply(v, 1.0 / (1.0 - b2**t), out=sv)
            np.sqrt(sv, out=sv)
            sv += self.epsilon
            sm /= sv
            sm *= self.lr
            p.data -= sm

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def state_arrays(self, prefix: str = "adam") -> dict[str, np.ndarray]:
        """Flat name -> array view of the moments, for checkpointing."""
        out: dict[str, np.ndarray] = {}
        for i, (m, v) in enumerate(zip(self.first_moment, self.second_moment)):
            out[f"{prefix}.m{i}"] = m
            out[f"{prefix}.v{i}"] = v
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray], prefix: str = "adam") -> None:
        for i in range(len(self.params)):
            self.first_moment[i][...] = arrays[f"{prefix}.m{i}"].reshape(self.first_moment[i].shape)
            self.second_moment[i][...] = arrays[f"{prefix}.v{i}"].reshape(self.second_moment[i].shape)


def adam_step(params: Sequence[Tensor], state: Adam, lr: float) -> None:
    """One Adam update at the given learning rate on ``state``'s parameters.

    ``params`` must be the same tensors the state was built over; the check
    is by identity so a mismatched call fails loudly instead of silently
    updating the wrong moments.
    """
    if len(params) != len(state.params) or any(a is not b for a, b in zip(params, state.params)):
        raise ContractError("adam_step: params do not match the optimizer state")
    state.lr = float(lr)
    state.step()


@dataclass
class GradCheckReport:
    """Outcome of a finite-difference gradient check."""

    eps: float
    threshold: float
    per_param: dict[str, float] = field(default_factory=dict)
    flagged: list[str] = field(default_factory=list)

    @property
    def max_rel_err(self) -> float:
        return max(self.per_param.values()) if self.per_param else 0.0

    @property
    def ok(self) -> bool:
        return not self.flagged

    def __str__(self) -> str:
        lines = [f"gradient check: eps={self.eps:g} threshold={self.threshold:g}"]
        for name, err in self.per_param.items():
            mark = "FLAG" if name in self.flagged else "ok"
            lines.append(f"  {name}: max rel err {err:.3e} [{mark}]")
        return "\n".join(lines)


def check_gradients(
    build_loss: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-5,
    threshold: float = 1e-4,
) -> GradCheckReport:
    """Compare tape gradients against central finite differences.

    ``build_loss`` must rebuild the scalar loss from the current contents of
    ``params`` and be deterministic; the check evaluates it twice up front
    and raises :class:`DeterminismError` if the values differ.

    Relative error per element is |analytic - central| / max(1e-8, |central|);
    the report keeps the max per parameter and flags entries above
    ``threshold``.
    """
    l1 = build_loss()
    l2 = build_loss()
    if l1.item() != l2.item():
        raise DeterminismError(
            f"loss is not deterministic at identical parameters: {l1.item()!r} vs {l2.item()!r}"
        )

    for p in params:
        p.zero_grad()
    backward(build_loss())
    analytic = [p.grad.copy() for p in params]

    report = GradCheckReport(eps=eps, threshold=threshold)
    for i, p in enumerate(params):
        name = p.name or f"param_{i}"
        worst = 0.0
        flat = p.data.reshape(-1)
        an = analytic[i].reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            up = build_loss().item()
            flat[j] = orig - eps
            down = build_loss().item()
            flat[j] = orig
            central = (up - down) / (2.0 * eps)
            rel = abs(an[j] - central) / max(1e-8, abs(central))
            worst = max(worst, rel)
        report.per_param[name] = worst
        if worst > threshold:
            report.flagged.append(name)
    return report
