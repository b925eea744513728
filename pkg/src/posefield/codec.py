"""Pose <-> vector codecs tied to the dataset kinds.

:class:`PoseRepresentation` bundles the learned pieces for one dataset kind:
a polar position system for toyroom (x, y) plus one grid per remaining DOF,
concatenated position-first.  :class:`CoordinateCodec` is the comparison
object: the same interface but emitting raw range-normalized coordinates,
with nothing to learn.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError
from .liegroup import GeneratorMatrix, n_generator_params
from .polar import (
    PolarPositionSystem,
    decode_position,
    encode_position,
    polar_losses,
    sample_position_pairs,
    sample_theta_pairs,
)
from .representation import DofGrid, PoseVectorSystem, rotation_loss
from .scenes import KIND_DOFS

__all__ = ["RepresentationConfig", "PoseRepresentation", "CoordinateCodec", "build_representation"]


@dataclass
class RepresentationConfig:
    """Dimensions and grid counts for the learned representation.

    Paper-scale values are dim 96 with six 16 x 16 blocks; the desk-scale
    defaults keep the same structure at dim 16 with two 8 x 8 blocks.
    Orientation grids cover 10 degrees each; the turntable tilt spans 120
    degrees, hence 13 points at the same density.
    """

    dim: int = 16
    block: int = 8
    angle_grids: int = 36
    phi_grids: int = 13
    position_grids: int = 20
    n_theta: int = 36
    generator_std: float = 0.01

    def validate(self) -> None:
        if self.dim <= 0 or self.block <= 0 or self.dim % self.block != 0:
            raise ConfigError(f"representation block {self.block} must divide dim {self.dim}")
        for name in ("angle_grids", "phi_grids", "position_grids", "n_theta"):
            if getattr(self, name) < 2:
                raise ConfigError(f"representation {name} must be at least 2")


class PoseRepresentation:
    """Learned encoder/decoder between pose coordinates and vectors."""

    def __init__(self, kind: str, dof_system: PoseVectorSystem, polar: PolarPositionSystem | None):
        self.kind = kind
        self.dof_system = dof_system
        self.polar = polar
        self.coord_names: list[str] = []
        if polar is not None:
            self.coord_names += ["x", "y"]
        self.coord_names += dof_system.labels

    @property
    def dim(self) -> int:
        return (self.polar.dim if self.polar else 0) + self.dof_system.dim

    def part_slices(self) -> dict[str, slice]:
        """Vector slice per part; the polar part is labeled 'xy'."""
        out: dict[str, slice] = {}
        lo = 0
        if self.polar is not None:
            out["xy"] = slice(0, self.polar.dim)
            lo = self.polar.dim
        for label, sl in self.dof_system.slices().items():
            out[label] = slice(lo + sl.start, lo + sl.stop)
        return out

    def parameters(self) -> list[Tensor]:
        out: list[Tensor] = []
        if self.polar is not None:
            out += self.polar.parameters()
        out += self.dof_system.parameters()
        return out

    def renormalize(self, rng: np.random.Generator | None = None) -> None:
        if self.polar is not None:
            self.polar.renormalize(rng)
        self.dof_system.renormalize(rng)

    def _split_coords(self, coords: np.ndarray) -> tuple[np.ndarray | None, np.ndarray]:
        coords = np.asarray(coords, dtype=np.float64)
        if coords.shape[-1] != len(self.coord_names):
            raise ValueError(f"expected coords {self.coord_names}, got shape {coords.shape}")
        if self.polar is not None:
            return coords[..., :2], coords[..., 2:]
        return None, coords

    def encode(self, coords) -> np.ndarray:
        """Concatenated pose vector for one coordinate tuple (no tape)."""
        xy, rest = self._split_coords(np.atleast_1d(np.asarray(coords, dtype=np.float64)))
        parts = []
        if xy is not None:
            parts.append(encode_position(self.polar, xy))
        if self.dof_system.grids:
            parts.append(self.dof_system.encode_pose(rest))
        return np.concatenate(parts)

    def encode_batch(self, coords: np.ndarray) -> np.ndarray:
        return np.stack([self.encode(c) for c in np.asarray(coords, dtype=np.float64)], axis=1)

    def encode_batch_tensor(self, coords: np.ndarray) -> Tensor:
        """Differentiable encodings as columns of a (dim, n) tensor."""
        xy, rest = self._split_coords(np.asarray(coords, dtype=np.float64))
        parts: list[Tensor] = []
        if xy is not None:
            cols = [self.polar.encode_position_tensor(xy[i]) for i in range(xy.shape[0])]
            parts.append(cols[0] if len(cols) == 1 else ad.concat_cols(cols))
        if self.dof_system.grids:
            parts.append(self.dof_system.encode_batch_tensor(rest))
        return parts[0] if len(parts) == 1 else ad.concat_rows(parts)

    def decode(self, v_hat: np.ndarray) -> np.ndarray:
        """Coordinates whose encoding is nearest to each vector slice."""
        v_hat = np.asarray(v_hat, dtype=np.float64).reshape(-1)
        if v_hat.size != self.dim:
            raise ValueError(f"expected vector of length {self.dim}, got {v_hat.size}")
        out: list[float] = []
        offset = 0
        if self.polar is not None:
            out.extend(decode_position(self.polar, v_hat[: self.polar.dim]))
            offset = self.polar.dim
        if self.dof_system.grids:
            out.extend(self.dof_system.decode_pose(v_hat[offset:]))
        return np.array(out)

    def rotation_loss_terms(
        self,
        rng: np.random.Generator,
        n_pairs: int,
        n_theta_pairs: int,
    ) -> tuple[Tensor | None, Tensor | None, Tensor | None]:
        """Freshly sampled (L_rot, L_rot_x, L_rot_theta); None where absent."""
        l_rot = None
        if self.dof_system.grids:
            poses, deltas = self.dof_system.sample_rotation_pairs(n_pairs, rng)
            l_rot = rotation_loss(self.dof_system, poses, deltas)
        l_x = l_theta = None
        if self.polar is not None:
            pos_pairs = sample_position_pairs(self.polar, n_pairs, rng)
            theta_pairs = sample_theta_pairs(self.polar, n_theta_pairs, rng)
            l_x, l_theta = polar_losses(self.polar, pos_pairs, theta_pairs)
        return l_rot, l_x, l_theta

    def state_arrays(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        if self.polar is not None:
            out["polar.vectors"] = self.polar.vectors.data
            for k, g in enumerate(self.polar.theta_bank):
                out[f"polar.bank{k}"] = g.params.data
            out["polar.C"] = self.polar.c.params.data
        for g in self.dof_system.grids:
            out[f"dof.{g.label}.vectors"] = g.vectors.data
            out[f"dof.{g.label}.gen"] = g.generator.params.data
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, arr in self.state_arrays().items():
            arr[...] = arrays[name].reshape(arr.shape)

    def describe(self) -> dict:
        """Shape summary embedded in checkpoint headers."""
        desc: dict = {"kind": self.kind, "coord_names": self.coord_names, "dim": self.dim}
        if self.polar is not None:
            desc["polar"] = {
                "lo": self.polar.lo,
                "hi": self.polar.hi,
                "n_grid": self.polar.n_grid,
                "dim": self.polar.dim,
                "block": self.polar.c.block_size,
                "n_theta": self.polar.n_theta,
            }
        desc["dofs"] = [
            {
                "label": g.label,
                "lo": g.lo,
                "hi": g.hi,
                "n_grid": g.n_grid,
                "periodic": g.periodic,
                "dim": g.dim,
                "block": g.generator.block_size,
            }
            for g in self.dof_system.grids
        ]
        return desc


class CoordinateCodec:
    """Raw normalized coordinates behind the same interface.

    Each coordinate maps linearly to [-1, 1] over its range; there are no
    learnable parameters and no rotation structure.  This is the baseline
    the learned representation is compared against.
    """

    def __init__(self, kind: str):
        if kind not in KIND_DOFS:
            raise ConfigError(f"unknown dataset kind {kind!r}")
        self.kind = kind
        self.coord_names = list(KIND_DOFS[kind])
        self.ranges = KIND_DOFS[kind]

    @property
    def dim(self) -> int:
        return len(self.coord_names)

    def parameters(self) -> list[Tensor]:
        return []

    def renormalize(self, rng=None) -> None:
        pass

    def _normalize(self, coords: np.ndarray) -> np.ndarray:
        coords = np.asarray(coords, dtype=np.float64)
        out = np.empty_like(coords)
        for i, name in enumerate(self.coord_names):
            lo, hi, _ = self.ranges[name]
            out[..., i] = (coords[..., i] - lo) / (hi - lo) * 2.0 - 1.0
        return out

    def encode(self, coords) -> np.ndarray:
        return self._normalize(np.atleast_1d(np.asarray(coords, dtype=np.float64)))

    def encode_batch(self, coords: np.ndarray) -> np.ndarray:
        return self._normalize(coords).T.copy()

    def encode_batch_tensor(self, coords: np.ndarray) -> Tensor:
        return Tensor(self.encode_batch(coords))

    def decode(self, v_hat: np.ndarray) -> np.ndarray:
        v_hat = np.asarray(v_hat, dtype=np.float64).reshape(-1)
        out = np.empty(self.dim)
        for i, name in enumerate(self.coord_names):
            lo, hi, periodic = self.ranges[name]
            val = (v_hat[i] + 1.0) / 2.0 * (hi - lo) + lo
            out[i] = lo + np.mod(val - lo, hi - lo) if periodic else np.clip(val, lo, hi)
        return out

    def rotation_loss_terms(self, rng, n_pairs, n_theta_pairs):
        return None, None, None

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {}

    def load_state_arrays(self, arrays) -> None:
        pass

    def describe(self) -> dict:
        return {"kind": self.kind, "coord_names": self.coord_names, "dim": self.dim, "coordinate": True}


def representation_from_description(desc: dict):
    """Reconstruct a codec skeleton from a checkpoint description.

    Arrays come back zeroed; callers fill them with
    :meth:`PoseRepresentation.load_state_arrays`.
    """
    if desc.get("coordinate"):
        return CoordinateCodec(desc["kind"])
    polar = None
    if "polar" in desc:
        p = desc["polar"]
        n_params = n_generator_params(p["dim"], p["block"])
        polar = PolarPositionSystem(
            p["lo"],
            p["hi"],
            p["n_grid"],
            Tensor(np.zeros((p["dim"], p["n_grid"] ** 2)), requires_grad=True, name="xy.vectors"),
            [
                GeneratorMatrix(p["dim"], p["block"], np.zeros(n_params), name=f"xy.bank{k}")
                for k in range(p["n_theta"])
            ],
            GeneratorMatrix(p["dim"], p["block"], np.zeros(n_params), name="xy.C"),
        )
    grids = []
    for d in desc["dofs"]:
        grids.append(
            DofGrid(
                d["label"],
                d["lo"],
                d["hi"],
                d["n_grid"],
                d["periodic"],
                Tensor(np.zeros((d["dim"], d["n_grid"])), requires_grad=True, name=f"{d['label']}.vectors"),
                GeneratorMatrix(
                    d["dim"],
                    d["block"],
                    np.zeros(n_generator_params(d["dim"], d["block"])),
                    name=f"{d['label']}.gen",
                ),
            )
        )
    return PoseRepresentation(desc["kind"], PoseVectorSystem(grids), polar)


def build_representation(
    kind: str, cfg: RepresentationConfig, rng: np.random.Generator
) -> PoseRepresentation:
    """Fresh randomly initialized representation for a dataset kind."""
    cfg.validate()
    if kind not in KIND_DOFS:
        raise ConfigError(f"unknown dataset kind {kind!r}")
    polar = None
    grids: list[DofGrid] = []
    for name, (lo, hi, periodic) in KIND_DOFS[kind].items():
        if kind == "toyroom" and name in ("x", "y"):
            continue  # handled jointly by the polar system
        n_grid = cfg.angle_grids if periodic else cfg.phi_grids
        grids.append(
            DofGrid.random(
                name,
                lo,
                hi,
                n_grid,
                cfg.dim,
                cfg.block,
                rng,
                periodic=periodic,
                generator_std=cfg.generator_std,
            )
        )
    if kind == "toyroom":
        lo, hi, _ = KIND_DOFS[kind]["x"]
        polar = PolarPositionSystem.random(
            lo,
            hi,
            cfg.position_grids,
            cfg.dim,
            cfg.block,
            cfg.n_theta,
            rng,
            generator_std=cfg.generator_std,
        )
    return PoseRepresentation(kind, PoseVectorSystem(grids), polar)
