"""Small fully-connected stacks built on the autodiff tensors.

Images here are tiny (at most 32 x 32), so every network in the package is a
dense stack over flattened inputs; there are no convolutions.  Data flows as
columns: a batch of n inputs is an (in_dim, n) matrix.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

__all__ = ["DenseStack"]

_ACTIVATIONS = ("leaky_relu", "tanh", "sigmoid", "linear")


def _he_scale(fan_in: int) -> float:
    return float(np.sqrt(2.0 / fan_in))


class DenseStack:
    """A stack of affine layers with a fixed hidden and output activation.

    ``sizes`` lists the layer widths including input and output, e.g.
    ``[34, 256, 512, 1728]``.  Weights are He-scaled normal draws from the
    provided generator, biases start at zero.
    """

    def __init__(
        self,
        sizes: list[int],
        rng: np.random.Generator,
        hidden_activation: str = "leaky_relu",
        output_activation: str = "sigmoid",
        leaky_slope: float = 0.1,
        name: str = "net",
    ):
        if len(sizes) < 2:
            raise ValueError("DenseStack needs at least input and output sizes")
        for act in (hidden_activation, output_activation):
            if act not in _ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")
        self.sizes = list(sizes)
        self.hidden_activation = hidden_activation
        self.output_activation = output_activation
        self.leaky_slope = float(leaky_slope)
        self.name = name
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            w = rng.standard_normal((fan_out, fan_in)) * _he_scale(fan_in)
            self.weights.append(Tensor(w, requires_grad=True, name=f"{name}.w{i}"))
            self.biases.append(Tensor(np.zeros(fan_out), requires_grad=True, name=f"{name}.b{i}"))

    def parameters(self) -> list[Tensor]:
        return [*self.weights, *self.biases]

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def _activate(self, x: Tensor, act: str) -> Tensor:
        if act == "leaky_relu":
            return ad.leaky_relu(x, self.leaky_slope)
        if act == "tanh":
            return ad.tanh(x)
        if act == "sigmoid":
            return ad.sigmoid(x)
        return x

    def forward(self, x: Tensor) -> Tensor:
        """Differentiable forward over a column batch (in_dim, n)."""
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = ad.add_col(ad.matmul(w, h), b)
            h = self._activate(h, self.output_activation if i == last else self.hidden_activation)
        return h

    def forward_array(self, x: np.ndarray) -> np.ndarray:
        """Plain-numpy forward, bitwise identical to :meth:`forward`."""
        h = np.asarray(x, dtype=np.float64)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = w.data @ h + b.data[:, None]
            act = self.output_activation if i == last else self.hidden_activation
            if act == "leaky_relu":
                h = np.where(h > 0.0, h, self.leaky_slope * h)
            elif act == "tanh":
                h = np.tanh(h)
            elif act == "sigmoid":
                e = np.exp(-np.abs(h))
                h = np.where(h >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))
        return h

    def state_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{prefix}.w{i}"] = w.data
            out[f"{prefix}.b{i}"] = b.data
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray], prefix: str) -> None:
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            w.data[...] = arrays[f"{prefix}.w{i}"].reshape(w.shape)
            b.data[...] = arrays[f"{prefix}.b{i}"].reshape(b.shape)
