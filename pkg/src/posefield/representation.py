"""Per-DOF grids of unit vectors whose shifts are generator rotations.

Each degree of freedom of the camera pose owns a 1-D grid over its range;
every grid point stores a learnable unit d-vector, and a shared
:class:`~posefield.liegroup.GeneratorMatrix` rotates a stored vector to any
off-grid coordinate through the second-order expansion of exp(B * delta).
Encoding anchors a coordinate to its nearest grid point; decoding inverts
that by nearest-vector search plus golden-section refinement.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, RangeError
from .liegroup import GeneratorMatrix, lie_exp, taylor_apply, taylor_rotate

__all__ = [
    "DofGrid",
    "PoseVectorSystem",
    "encode_dof",
    "decode_dof",
    "rotation_loss",
    "renormalize",
]

# Canonical concatenation order for the six possible degrees of freedom.
# Turntable datasets use the two orientation slots under their own names.
DOF_ORDER = ("x", "y", "z", "alpha", "beta", "gamma", "theta", "phi")

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def _unit_columns(rng: np.random.Generator, dim: int, n: int) -> np.ndarray:
    v = rng.standard_normal((dim, n))
    return v / np.linalg.norm(v, axis=0, keepdims=True)


class DofGrid:
    """One degree of freedom: a vector grid plus its movement generator.

    Angles are periodic over [lo, hi) with spacing (hi - lo) / n_grid;
    positions are clamped ranges with spacing (hi - lo) / (n_grid - 1) so the
    grid includes both endpoints.
    """

    def __init__(
        self,
        label: str,
        lo: float,
        hi: float,
        n_grid: int,
        periodic: bool,
        vectors: Tensor,
        generator: GeneratorMatrix,
        pair_max_delta: float | None = None,
    ):
        if hi <= lo:
            raise ValueError(f"{label}: empty range [{lo}, {hi}]")
        if n_grid < 2:
            raise ValueError(f"{label}: need at least 2 grid points")
        self.label = label
        self.lo = float(lo)
        self.hi = float(hi)
        self.n_grid = int(n_grid)
        self.periodic = bool(periodic)
        self.vectors = vectors
        self.generator = generator
        if vectors.shape != (generator.dim, n_grid):
            raise ValueError(
                f"{label}: vectors shape {vectors.shape} does not match "
                f"(dim={generator.dim}, n_grid={n_grid})"
            )
        self.pair_max_delta = 2.0 * self.spacing if pair_max_delta is None else float(pair_max_delta)

    @classmethod
    def random(
        cls,
        label: str,
        lo: float,
        hi: float,
        n_grid: int,
        dim: int,
        block_size: int,
        rng: np.random.Generator,
        periodic: bool = False,
        generator_std: float = 0.01,
    ) -> "DofGrid":
        vectors = Tensor(_unit_columns(rng, dim, n_grid), requires_grad=True, name=f"{label}.vectors")
        gen = GeneratorMatrix.random(dim, block_size, rng, std=generator_std, name=f"{label}.gen")
        return cls(label, lo, hi, n_grid, periodic, vectors, gen)

    @classmethod
    def from_rotations(
        cls,
        label: str,
        lo: float,
        hi: float,
        n_grid: int,
        periodic: bool,
        generator: GeneratorMatrix,
        v0: np.ndarray,
    ) -> "DofGrid":
        """Grid whose vectors are exactly exp(B * (grid_k - lo)) v0."""
        v0 = np.asarray(v0, dtype=np.float64)
        v0 = v0 / np.linalg.norm(v0)
        grid = cls(
            label,
            lo,
            hi,
            n_grid,
            periodic,
            Tensor(np.zeros((generator.dim, n_grid)), requires_grad=True, name=f"{label}.vectors"),
            generator,
        )
        cols = [lie_exp(generator, g - lo) @ v0 for g in grid.grid_values]
        grid.vectors.data[...] = np.stack(cols, axis=1)
        return grid

    @property
    def dim(self) -> int:
        return self.generator.dim

    @property
    def span(self) -> float:
        return self.hi - self.lo

    @property
    def spacing(self) -> float:
        return self.span / self.n_grid if self.periodic else self.span / (self.n_grid - 1)

    @property
    def grid_values(self) -> np.ndarray:
        return self.lo + np.arange(self.n_grid) * self.spacing

    def wrap(self, value):
        """Map values into the primary range (no-op when not periodic)."""
        if not self.periodic:
            return value
        return self.lo + np.mod(np.asarray(value, dtype=np.float64) - self.lo, self.span)

    def anchor_batch(self, values) -> tuple[np.ndarray, np.ndarray]:
        """Nearest grid index and signed residual for each value.

        Residuals satisfy |delta| <= spacing / 2.  Non-periodic values outside
        [lo, hi] raise :class:`RangeError` naming the DOF.
        """
        values = np.atleast_1d(np.asarray(values, dtype=np.float64))
        h = self.spacing
        if self.periodic:
            w = np.mod(values - self.lo, self.span)
            k = np.floor(w / h + 0.5).astype(np.intp)
            delta = w - k * h
            k = np.mod(k, self.n_grid)
            return k, delta
        slack = 1e-9 * self.span
        if np.any(values < self.lo - slack) or np.any(values > self.hi + slack):
            bad = values[(values < self.lo - slack) | (values > self.hi + slack)][0]
            raise RangeError(f"{self.label}: value {bad!r} outside range [{self.lo}, {self.hi}]")
        w = np.clip(values, self.lo, self.hi) - self.lo
        k = np.floor(w / h + 0.5).astype(np.intp)
        k = np.clip(k, 0, self.n_grid - 1)
        return k, w - k * h

    def anchor(self, value: float) -> tuple[int, float]:
        k, delta = self.anchor_batch([value])
        return int(k[0]), float(delta[0])

    def encode_batch_tensor(self, values, b: Tensor | None = None) -> Tensor:
        """Differentiable encodings as columns of a (dim, n) tensor."""
        idx, delta = self.anchor_batch(values)
        if b is None:
            b = self.generator.materialize()
        return taylor_apply(b, delta, ad.gather_columns(self.vectors, idx))

    def renormalize(self, rng: np.random.Generator | None = None) -> None:
        """Project every stored vector back to unit norm."""
        norms = np.linalg.norm(self.vectors.data, axis=0)
        dead = norms == 0.0
        if dead.any():
            rng = rng or np.random.default_rng(0)
            fresh = _unit_columns(rng, self.dim, int(dead.sum()))
            self.vectors.data[:, dead] = fresh
            norms = np.linalg.norm(self.vectors.data, axis=0)
        self.vectors.data /= norms[None, :]


def encode_dof(grid: DofGrid, value: float) -> np.ndarray:
    """Taylor-rotate the nearest stored vector to the requested coordinate."""
    k, delta = grid.anchor(value)
    return taylor_rotate(grid.generator, delta, grid.vectors.data[:, k])


def decode_dof(grid: DofGrid, v_hat: np.ndarray) -> float:
    """Coordinate whose encoding is nearest to ``v_hat``.

    Coarse pass over all stored grid vectors (ties toward the smaller
    coordinate), then golden-section refinement of the residual inside the
    winning half-open cell, to resolution spacing / 64.
    """
    v_hat = np.asarray(v_hat, dtype=np.float64).reshape(-1)
    grid_vecs = grid.vectors.data
    d2 = ((grid_vecs - v_hat[:, None]) ** 2).sum(axis=0)
    k = int(np.argmin(d2))  # first minimum = smaller coordinate
    if d2[k] == 0.0:
        return float(grid.grid_values[k])

    b = grid.generator.matrix()
    v = grid_vecs[:, k]
    w1 = b @ v
    w2 = b @ w1

    def cost(delta: float) -> float:
        enc = (v + w1 * delta) + w2 * (0.5 * (delta * delta))
        r = enc - v_hat
        return float(r @ r)

    h = grid.spacing
    center = grid.lo + k * h
    a, c = -0.5 * h, 0.5 * h
    if not grid.periodic:
        a = max(a, grid.lo - center)
        c = min(c, grid.hi - center)

    tol = h / 64.0
    x1 = c - _GOLDEN * (c - a)
    x2 = a + _GOLDEN * (c - a)
    f1, f2 = cost(x1), cost(x2)
    while (c - a) > tol:
        if f1 <= f2:
            c, x2, f2 = x2, x1, f1
            x1 = c - _GOLDEN * (c - a)
            f1 = cost(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (c - a)
            f2 = cost(x2)
    delta = 0.5 * (a + c)

    value = center + delta
    if grid.periodic:
        return float(grid.wrap(value))
    return float(np.clip(value, grid.lo, grid.hi))


class PoseVectorSystem:
    """Ordered per-DOF grids; encodings concatenate in a fixed DOF order."""

    def __init__(self, grids: list[DofGrid]):
        labels = [g.label for g in grids]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate DOF labels: {labels}")
        known = [lbl for lbl in labels if lbl in DOF_ORDER]
        if known != sorted(known, key=DOF_ORDER.index):
            raise ValueError(f"grids must follow the canonical DOF order, got {labels}")
        self.grids = list(grids)

    @property
    def labels(self) -> list[str]:
        return [g.label for g in self.grids]

    @property
    def dim(self) -> int:
        return sum(g.dim for g in self.grids)

    def slices(self) -> dict[str, slice]:
        out: dict[str, slice] = {}
        lo = 0
        for g in self.grids:
            out[g.label] = slice(lo, lo + g.dim)
            lo += g.dim
        return out

    def grid(self, label: str) -> DofGrid:
        for g in self.grids:
            if g.label == label:
                return g
        raise KeyError(label)

    def parameters(self) -> list[Tensor]:
        out: list[Tensor] = []
        for g in self.grids:
            out.append(g.vectors)
            out.append(g.generator.params)
        return out

    def encode_pose(self, values) -> np.ndarray:
        """Concatenated encoding of one pose tuple (eval path, no tape)."""
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        if values.size != len(self.grids):
            raise ValueError(f"expected {len(self.grids)} components, got {values.size}")
        parts = []
        for g, val in zip(self.grids, values):
            try:
                parts.append(encode_dof(g, float(val)))
            except RangeError as err:
                raise RangeError(f"pose component {g.label}: {err}") from err
        return np.concatenate(parts)

    def encode_batch_tensor(self, poses: np.ndarray) -> Tensor:
        """Differentiable encodings for an (n, n_dofs) pose array."""
        poses = np.asarray(poses, dtype=np.float64)
        parts = [g.encode_batch_tensor(poses[:, i]) for i, g in enumerate(self.grids)]
        return parts[0] if len(parts) == 1 else ad.concat_rows(parts)

    def decode_pose(self, v_hat: np.ndarray) -> tuple[float, ...]:
        v_hat = np.asarray(v_hat, dtype=np.float64).reshape(-1)
        if v_hat.size != self.dim:
            raise ValueError(f"expected vector of length {self.dim}, got {v_hat.size}")
        out = []
        for g, sl in zip(self.grids, self.slices().values()):
            out.append(decode_dof(g, v_hat[sl]))
        return tuple(out)

    def sample_rotation_pairs(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Anchor poses uniform over range, per-DOF shifts uniform within bounds.

        Shift magnitudes stay within each grid's ``pair_max_delta`` and, for
        non-periodic DOFs, inside the coordinate range.
        """
        d = len(self.grids)
        poses = np.empty((n, d))
        deltas = np.empty((n, d))
        for i, g in enumerate(self.grids):
            lo, hi, m = g.lo, g.hi, g.pair_max_delta
            p = rng.uniform(lo, hi, size=n)
            if g.periodic:
                dl = rng.uniform(-m, m, size=n)
            else:
                dl = rng.uniform(np.maximum(-m, lo - p), np.minimum(m, hi - p))
            poses[:, i] = p
            deltas[:, i] = dl
        return poses, deltas

    def renormalize(self, rng: np.random.Generator | None = None) -> None:
        for g in self.grids:
            g.renormalize(rng)


def rotation_loss(system: PoseVectorSystem, poses: np.ndarray, deltas: np.ndarray) -> Tensor:
    """Consistency of encodings under generator rotations (scalar tensor).

    For every pair (p, dp) and every DOF: || v(l + dl) - R(dl) v(l) ||^2 with
    R the second-order expansion of exp(B * dl); the result is the mean over
    pairs and DOFs.  Shifts beyond a grid's ``pair_max_delta`` are a caller
    bug and raise :class:`ContractError`.
    """
    poses = np.asarray(poses, dtype=np.float64)
    deltas = np.asarray(deltas, dtype=np.float64)
    if poses.ndim != 2 or poses.shape != deltas.shape or poses.shape[1] != len(system.grids):
        raise ValueError(
            f"need matching (n, {len(system.grids)}) pose and delta arrays, "
            f"got {poses.shape} and {deltas.shape}"
        )
    n = poses.shape[0]
    per_dof: list[Tensor] = []
    for i, g in enumerate(system.grids):
        dl = deltas[:, i]
        too_big = np.abs(dl) > g.pair_max_delta + 1e-12
        if too_big.any():
            raise ContractError(
                f"{g.label}: shift {dl[too_big][0]!r} exceeds pair_max_delta {g.pair_max_delta!r}"
            )
        b = g.generator.materialize()
        start = g.encode_batch_tensor(poses[:, i], b=b)
        target = g.encode_batch_tensor(g.wrap(poses[:, i] + dl), b=b)
        moved = taylor_apply(b, dl, start)
        diff = ad.sub(target, moved)
        per_dof.append(ad.scale(ad.tensor_sum(ad.mul(diff, diff)), 1.0 / n))
    total = per_dof[0]
    for extra in per_dof[1:]:
        total = ad.add(total, extra)
    return ad.scale(total, 1.0 / len(per_dof))


def renormalize(system: PoseVectorSystem, rng: np.random.Generator | None = None) -> None:
    """Project all grid vectors of the system back to unit norm."""
    system.renormalize(rng)


def gram_matrix(grid: DofGrid) -> np.ndarray:
    """Inner products of the stored grid vectors, G[i, j] = <v_i, v_j>."""
    v = grid.vectors.data
    return v.T @ v


def gram_circulant_deviation(gram: np.ndarray) -> float:
    """Max over offsets of the stddev of G[i, i+o] (periodic indexing).

    A translation-invariant representation makes the Gram matrix circulant,
    so every diagonal-with-wraparound is constant and this value is ~0.
    """
    n = gram.shape[0]
    worst = 0.0
    for o in range(n):
        vals = gram[np.arange(n), (np.arange(n) + o) % n]
        worst = max(worst, float(np.std(vals)))
    return worst
