"""Skew-symmetric block-diagonal generators and the rotations they generate.

A :class:`GeneratorMatrix` stores only the strict upper triangle of each
diagonal block; the materialized matrix B is skew-symmetric by construction
(B[i, j] = +p, B[j, i] = -p), so exp(B * delta) is orthogonal and the family
over delta is a one-parameter rotation group.  Small shifts are applied with
the cheap second-order expansion I + B*d + 0.5*B^2*d^2; finite shifts use the
exact exponential via per-block scaling and squaring.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

__all__ = ["GeneratorMatrix", "lie_exp", "taylor_rotate", "taylor_apply", "expm_skew"]

# Cache of +/-1 embedding matrices keyed by (dim, block_size).  Each row of
# the (d*d, n_params) embedding has exactly one nonzero, so materializing via
# matmul is exact (no accumulation error) and differentiable.
_EMBED_CACHE: dict[tuple[int, int], np.ndarray] = {}


def _param_positions(dim: int, block_size: int) -> list[tuple[int, int]]:
    """(i, j) with i < j for every in-block strict-upper-triangle entry."""
    positions = []
    for b0 in range(0, dim, block_size):
        for i in range(block_size):
            for j in range(i + 1, block_size):
                positions.append((b0 + i, b0 + j))
    return positions


def _embedding(dim: int, block_size: int) -> np.ndarray:
    key = (dim, block_size)
    emb = _EMBED_CACHE.get(key)
    if emb is None:
        positions = _param_positions(dim, block_size)
        emb = np.zeros((dim * dim, len(positions)))
        for k, (i, j) in enumerate(positions):
            emb[i * dim + j, k] = 1.0
            emb[j * dim + i, k] = -1.0
        _EMBED_CACHE[key] = emb
    return emb


def n_generator_params(dim: int, block_size: int) -> int:
    return (dim // block_size) * (block_size * (block_size - 1) // 2)


class GeneratorMatrix:
    """Learnable skew-symmetric block-diagonal d x d matrix.

    Parameters are the strict upper triangles of the d/s diagonal blocks,
    flattened block by block, row-major within a block.
    """

    def __init__(self, dim: int, block_size: int, params: Tensor | np.ndarray, name: str = "generator"):
        if dim <= 0 or block_size <= 0 or dim % block_size != 0:
            raise ValueError(f"block size {block_size} must divide dim {dim}")
        self.dim = dim
        self.block_size = block_size
        expected = n_generator_params(dim, block_size)
        if isinstance(params, Tensor):
            self.params = params
        else:
            self.params = Tensor(params, requires_grad=True, name=f"{name}.params")
        if self.params.size != expected:
            raise ValueError(f"need {expected} params for dim {dim} block {block_size}, got {self.params.size}")
        self.name = name

    @classmethod
    def random(
        cls,
        dim: int,
        block_size: int,
        rng: np.random.Generator,
        std: float = 0.01,
        name: str = "generator",
    ) -> "GeneratorMatrix":
        n = n_generator_params(dim, block_size)
        return cls(dim, block_size, rng.standard_normal(n) * std, name=name)

    def materialize(self) -> Tensor:
        """Differentiable d x d skew-symmetric block-diagonal matrix."""
        emb = Tensor(_embedding(self.dim, self.block_size))
        col = ad.reshape(self.params, (self.params.size, 1))
        return ad.reshape(ad.matmul(emb, col), (self.dim, self.dim))

    def matrix(self) -> np.ndarray:
        """Materialized value without tape bookkeeping."""
        d = self.dim
        out = np.zeros((d, d))
        flat = self.params.data.reshape(-1)
        for k, (i, j) in enumerate(_param_positions(d, self.block_size)):
            out[i, j] = flat[k]
            out[j, i] = -flat[k]
        return out

    def lie_exp(self, delta: float) -> np.ndarray:
        return lie_exp(self, delta)

    def blocks(self) -> list[np.ndarray]:
        m = self.matrix()
        s = self.block_size
        return [m[i : i + s, i : i + s] for i in range(0, self.dim, s)]


def expm_skew(a: np.ndarray, taylor_terms: int = 16) -> np.ndarray:
    """exp(a) by scaling and squaring with a truncated Taylor series.

    Scales the matrix down to spectral-norm order <= 0.25, evaluates the
    series in Horner form, and squares back up.  For skew-symmetric input the
    result is orthogonal to ~1e-13.
    """
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[0]
    nrm = np.linalg.norm(a, ord=np.inf)
    squarings = 0
    if nrm > 0.25:
        squarings = int(np.ceil(np.log2(nrm / 0.25)))
    m = a / (2.0**squarings)
    eye = np.eye(n)
    out = eye + m / taylor_terms
    for k in range(taylor_terms - 1, 0, -1):
        out = eye + (m / k) @ out
    for _ in range(squarings):
        out = out @ out
    return out


def lie_exp(gen: GeneratorMatrix, delta: float) -> np.ndarray:
    """exp(B * delta), exact up to ~1e-12, computed independently per block."""
    d, s = gen.dim, gen.block_size
    out = np.zeros((d, d))
    for i, block in enumerate(gen.blocks()):
        lo = i * s
        out[lo : lo + s, lo : lo + s] = expm_skew(block * float(delta))
    return out


def taylor_rotate(gen: GeneratorMatrix, delta: float, v: np.ndarray) -> np.ndarray:
    """(I + B*d + 0.5*B^2*d^2) v via two matrix-vector products.

    Second-order stand-in for lie_exp, valid for |delta| up to about one
    grid spacing; B^2 is never materialized.
    """
    b = gen.matrix()
    v = np.asarray(v, dtype=np.float64)
    delta = float(delta)
    w1 = b @ v
    w2 = b @ w1
    return (v + w1 * delta) + w2 * (0.5 * (delta * delta))


def taylor_apply(b: Tensor, deltas: np.ndarray, v: Tensor) -> Tensor:
    """Differentiable batched second-order rotation.

    ``v`` holds one d-vector per column and ``deltas`` one shift per column;
    column j becomes (I + B*deltas[j] + 0.5*B^2*deltas[j]^2) v[:, j].  Uses
    the same operation order as :func:`taylor_rotate`, so the two paths agree
    to floating-point rounding.
    """
    deltas = np.asarray(deltas, dtype=np.float64).reshape(-1)
    d1 = Tensor(deltas)
    d2 = Tensor(0.5 * (deltas * deltas))
    w1 = ad.matmul(b, v)
    w2 = ad.matmul(b, w1)
    return ad.add(ad.add(v, ad.scale_columns(w1, d1)), ad.scale_columns(w2, d2))
