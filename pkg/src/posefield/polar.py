"""Polar position representation for 2-D movement.

Positions (x, y) share a single vector grid; a movement of length dr along
heading theta rotates the position vector by the heading-dependent generator
B(theta), and heading changes rotate B itself by a learned matrix C:

    v(x + dx) ~ (I + B(theta) dr + 0.5 B(theta)^2 dr^2) v(x)
    B(theta + dtheta) ~ (I + C dtheta) B(theta)

The bank stores B(theta_k) independently on a uniform periodic theta grid,
and the second relation is enforced as a loss rather than hard-coded, so
off-grid B(theta) values (anchor entry rotated by exp(C dtheta)) are only
approximately skew-symmetric until that loss converges.  Left-multiplication
by exp(C dtheta) is deliberate: conjugation would preserve skewness exactly,
but the model couples heading to movement through one-sided rotation.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, RangeError
from .liegroup import GeneratorMatrix, expm_skew, n_generator_params

__all__ = [
    "PolarPositionSystem",
    "theta_generator",
    "encode_position",
    "decode_position",
    "polar_losses",
]

_TWO_PI = 2.0 * np.pi


class PolarPositionSystem:
    """Unit-vector grid over a square range plus a heading generator bank."""

    def __init__(
        self,
        lo: float,
        hi: float,
        n_grid: int,
        vectors: Tensor,
        theta_bank: list[GeneratorMatrix],
        c: GeneratorMatrix,
    ):
        if hi <= lo:
            raise ValueError(f"empty position range [{lo}, {hi}]")
        if n_grid < 2:
            raise ValueError("need at least a 2 x 2 position grid")
        self.lo = float(lo)
        self.hi = float(hi)
        self.n_grid = int(n_grid)
        self.vectors = vectors
        self.theta_bank = list(theta_bank)
        self.c = c
        dims = {g.dim for g in self.theta_bank} | {c.dim}
        if len(dims) != 1:
            raise ValueError(f"bank and C dimensions disagree: {sorted(dims)}")
        if vectors.shape != (c.dim, n_grid * n_grid):
            raise ValueError(f"vectors shape {vectors.shape} != ({c.dim}, {n_grid * n_grid})")

    @classmethod
    def random(
        cls,
        lo: float,
        hi: float,
        n_grid: int,
        dim: int,
        block_size: int,
        n_theta: int,
        rng: np.random.Generator,
        generator_std: float = 0.01,
    ) -> "PolarPositionSystem":
        v = rng.standard_normal((dim, n_grid * n_grid))
        v /= np.linalg.norm(v, axis=0, keepdims=True)
        vectors = Tensor(v, requires_grad=True, name="xy.vectors")
        bank = [
            GeneratorMatrix.random(dim, block_size, rng, std=generator_std, name=f"xy.bank{k}")
            for k in range(n_theta)
        ]
        c = GeneratorMatrix.random(dim, block_size, rng, std=generator_std, name="xy.C")
        return cls(lo, hi, n_grid, vectors, bank, c)

    @property
    def dim(self) -> int:
        return self.c.dim

    @property
    def n_theta(self) -> int:
        return len(self.theta_bank)

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / (self.n_grid - 1)

    @property
    def theta_spacing(self) -> float:
        return _TWO_PI / self.n_theta

    @property
    def cell_diagonal(self) -> float:
        return self.spacing * np.sqrt(2.0)

    def grid_index(self, ix: int, iy: int) -> int:
        return ix * self.n_grid + iy

    def grid_point(self, index: int) -> tuple[float, float]:
        ix, iy = divmod(int(index), self.n_grid)
        return (self.lo + ix * self.spacing, self.lo + iy * self.spacing)

    def anchor_theta(self, theta: float) -> tuple[int, float]:
        """Nearest bank entry and signed residual, theta wrapped mod 2 pi."""
        w = float(np.mod(theta, _TWO_PI))
        h = self.theta_spacing
        k = int(np.floor(w / h + 0.5))
        delta = w - k * h
        return k % self.n_theta, delta

    def anchor_position(self, xy) -> tuple[int, float, float]:
        """Nearest grid column index and the residual displacement (dx, dy)."""
        x, y = float(xy[0]), float(xy[1])
        slack = 1e-9 * (self.hi - self.lo)
        for name, v in (("x", x), ("y", y)):
            if v < self.lo - slack or v > self.hi + slack:
                raise RangeError(f"position {name}={v!r} outside range [{self.lo}, {self.hi}]")
        h = self.spacing
        ix = int(np.clip(np.floor((x - self.lo) / h + 0.5), 0, self.n_grid - 1))
        iy = int(np.clip(np.floor((y - self.lo) / h + 0.5), 0, self.n_grid - 1))
        return self.grid_index(ix, iy), x - (self.lo + ix * h), y - (self.lo + iy * h)

    def parameters(self) -> list[Tensor]:
        return [self.vectors, *(g.params for g in self.theta_bank), self.c.params]

    def renormalize(self, rng: np.random.Generator | None = None) -> None:
        norms = np.linalg.norm(self.vectors.data, axis=0)
        dead = norms == 0.0
        if dead.any():
            rng = rng or np.random.default_rng(0)
            fresh = rng.standard_normal((self.dim, int(dead.sum())))
            self.vectors.data[:, dead] = fresh / np.linalg.norm(fresh, axis=0, keepdims=True)
            norms = np.linalg.norm(self.vectors.data, axis=0)
        self.vectors.data /= norms[None, :]

    # Differentiable building blocks -------------------------------------

    def _c_rotation_tensor(self, dtheta: float) -> Tensor:
        """Second-order expansion of exp(C * dtheta) as a tensor."""
        cm = self.c.materialize()
        eye = Tensor(np.eye(self.dim))
        out = ad.add(eye, ad.scale(cm, float(dtheta)))
        return ad.add(out, ad.scale(ad.matmul(cm, cm), 0.5 * float(dtheta) ** 2))

    def theta_generator_tensor(self, theta: float) -> Tensor:
        """Differentiable off-grid B(theta) used inside the losses."""
        k, dtheta = self.anchor_theta(theta)
        bk = self.theta_bank[k].materialize()
        if dtheta == 0.0:
            return bk
        return ad.matmul(self._c_rotation_tensor(dtheta), bk)

    def encode_position_tensor(self, xy) -> Tensor:
        """Differentiable (dim, 1) encoding of a single position."""
        idx, dx, dy = self.anchor_position(xy)
        col = ad.gather_columns(self.vectors, [idx])
        dr = float(np.hypot(dx, dy))
        if dr == 0.0:
            return col
        b = self.theta_generator_tensor(float(np.arctan2(dy, dx)))
        w1 = ad.matmul(b, col)
        w2 = ad.matmul(b, w1)
        return ad.add(ad.add(col, ad.scale(w1, dr)), ad.scale(w2, 0.5 * dr * dr))


def theta_generator(system: PolarPositionSystem, theta: float) -> np.ndarray:
    """B(theta): the anchored bank entry rotated by the exact exp(C dtheta)."""
    k, dtheta = system.anchor_theta(theta)
    bk = system.theta_bank[k].matrix()
    if dtheta == 0.0:
        return bk
    return expm_skew(system.c.matrix() * dtheta) @ bk


def encode_position(system: PolarPositionSystem, xy) -> np.ndarray:
    """(I + B(theta) dr + 0.5 B(theta)^2 dr^2) applied to the anchor vector."""
    idx, dx, dy = system.anchor_position(xy)
    v = system.vectors.data[:, idx]
    dr = float(np.hypot(dx, dy))
    if dr == 0.0:
        return v.copy()
    b = theta_generator(system, float(np.arctan2(dy, dx)))
    w1 = b @ v
    w2 = b @ w1
    return (v + w1 * dr) + w2 * (0.5 * dr * dr)


def decode_position(system: PolarPositionSystem, v_hat: np.ndarray) -> tuple[float, float]:
    """Position whose encoding is nearest to ``v_hat``.

    Coarse scan over all stored grid vectors, then a dense search of the
    3 x 3 cell neighborhood of the winner at step spacing / 16.  Ties break
    toward the lexicographically smaller (x, y).
    """
    v_hat = np.asarray(v_hat, dtype=np.float64).reshape(-1)
    d2 = ((system.vectors.data - v_hat[:, None]) ** 2).sum(axis=0)
    win = int(np.argmin(d2))  # column order is lexicographic in (x, y)
    cx, cy = system.grid_point(win)

    h = system.spacing
    step = h / 16.0
    offs = np.arange(-24, 25) * step  # covers the 3x3 cell neighborhood
    xs = np.clip(cx + offs, system.lo, system.hi)
    ys = np.clip(cy + offs, system.lo, system.hi)
    best = (float("inf"), cx, cy)
    for x in xs:
        for y in ys:
            enc = encode_position(system, (x, y))
            err = float(((enc - v_hat) ** 2).sum())
            if err < best[0] - 1e-18:
                best = (err, float(x), float(y))
    return best[1], best[2]


def _pair_term(system: PolarPositionSystem, xy, dxy) -> Tensor:
    dxy = np.asarray(dxy, dtype=np.float64)
    dr = float(np.hypot(dxy[0], dxy[1]))
    start = system.encode_position_tensor(xy)
    target = system.encode_position_tensor((xy[0] + dxy[0], xy[1] + dxy[1]))
    if dr == 0.0:
        moved = start
    else:
        b = system.theta_generator_tensor(float(np.arctan2(dxy[1], dxy[0])))
        w1 = ad.matmul(b, start)
        w2 = ad.matmul(b, w1)
        moved = ad.add(ad.add(start, ad.scale(w1, dr)), ad.scale(w2, 0.5 * dr * dr))
    diff = ad.sub(target, moved)
    return ad.tensor_sum(ad.mul(diff, diff))


def polar_losses(
    system: PolarPositionSystem,
    pos_pairs: tuple[np.ndarray, np.ndarray] | None,
    theta_pairs: tuple[np.ndarray, np.ndarray] | None,
) -> tuple[Tensor, Tensor]:
    """(L_rot_x, L_rot_theta) over the supplied Monte Carlo pairs.

    ``pos_pairs`` is (positions (n, 2), displacements (n, 2)) with each
    displacement length at most twice the cell diagonal; ``theta_pairs`` is
    (headings (m,), heading shifts (m,)) with shifts at most twice the bank
    spacing.  Either may be None to skip that term (returns a zero scalar).
    """
    zero = Tensor(np.zeros(()))
    l_x = zero
    if pos_pairs is not None:
        xs, dxs = (np.asarray(a, dtype=np.float64) for a in pos_pairs)
        if xs.shape != dxs.shape or xs.ndim != 2 or xs.shape[1] != 2:
            raise ValueError(f"position pairs must be (n, 2) arrays, got {xs.shape} and {dxs.shape}")
        dr = np.hypot(dxs[:, 0], dxs[:, 1])
        if np.any(dr > 2.0 * system.cell_diagonal + 1e-12):
            raise ContractError(
                f"position shift {dr.max()!r} exceeds 2 * cell diagonal {2 * system.cell_diagonal!r}"
            )
        terms = [_pair_term(system, xs[i], dxs[i]) for i in range(xs.shape[0])]
        acc = terms[0]
        for t in terms[1:]:
            acc = ad.add(acc, t)
        l_x = ad.scale(acc, 1.0 / len(terms))

    l_theta = zero
    if theta_pairs is not None:
        ths, dths = (np.asarray(a, dtype=np.float64).reshape(-1) for a in theta_pairs)
        if ths.shape != dths.shape:
            raise ValueError("theta pairs must be equal-length 1-D arrays")
        if np.any(np.abs(dths) > 2.0 * system.theta_spacing + 1e-12):
            raise ContractError(
                f"heading shift {np.abs(dths).max()!r} exceeds 2 * theta spacing {2 * system.theta_spacing!r}"
            )
        terms = []
        for th, dth in zip(ths, dths):
            target = system.theta_generator_tensor(th + dth)
            moved = ad.matmul(system._c_rotation_tensor(float(dth)), system.theta_generator_tensor(th))
            diff = ad.sub(target, moved)
            terms.append(ad.tensor_sum(ad.mul(diff, diff)))
        acc = terms[0]
        for t in terms[1:]:
            acc = ad.add(acc, t)
        l_theta = ad.scale(acc, 1.0 / len(terms))

    return l_x, l_theta


def sample_position_pairs(
    system: PolarPositionSystem, n: int, rng: np.random.Generator, max_step: float | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Anchors uniform over the square; moves uniform in heading and length.

    Targets falling outside the range are clamped back in, which keeps every
    pair valid and deterministic at a small boundary bias.
    """
    r_max = 1.5 * system.spacing if max_step is None else float(max_step)
    xs = rng.uniform(system.lo, system.hi, size=(n, 2))
    heading = rng.uniform(0.0, _TWO_PI, size=n)
    dr = rng.uniform(0.0, r_max, size=n)
    dxs = np.stack([dr * np.cos(heading), dr * np.sin(heading)], axis=1)
    targets = np.clip(xs + dxs, system.lo, system.hi)
    return xs, targets - xs


def sample_theta_pairs(
    system: PolarPositionSystem, n: int, rng: np.random.Generator, max_step: float | None = None
) -> tuple[np.ndarray, np.ndarray]:
    t_max = 2.0 * system.theta_spacing if max_step is None else float(max_step)
    return rng.uniform(0.0, _TWO_PI, size=n), rng.uniform(-t_max, t_max, size=n)
