"""View synthesis: scene vectors, decoder, combined loss, noise robustness.

The decoder maps concat(scene vector u, pose vector v(p)) to pixels through
a fully-connected stack with a sigmoid output.  Training minimizes

    L = lambda1 * L_rec + lambda2 * L_rot + lambda3 * L_rot_x + lambda4 * L_rot_theta

alternating updates: the pose representation system steps every iteration,
the decoder and scene vectors step once per ``pose_updates_per_decoder``
iterations (k = 1 recovers joint updates).  All unit-norm constraints are
re-projected after every optimizer step.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, Tensor, backward
from .codec import CoordinateCodec, PoseRepresentation, RepresentationConfig, build_representation
from .errors import ConfigError, ShapeError, TrainingDiverged
from .nn import DenseStack
from .parallel import eval_map
from .scenes import SceneDataset, stream

__all__ = [
    "TrainConfig",
    "SynthesisModel",
    "SynthesisTrainer",
    "train_synthesis",
    "psnr",
    "noise_eval",
    "mean_image_baseline",
    "eval_synthesis_psnr",
]

# RNG stream tags (shared namespace with scenes tags 1..3).
_TAG_INIT, _TAG_BATCH, _TAG_ROT, _TAG_NOISE, _TAG_RENORM = 10, 11, 12, 13, 14

METRICS_HEADER = ["step", "L_total", "L_rec", "L_rot_sum", "L_rot_x", "L_rot_theta"]


@dataclass
class TrainConfig:
    """Hyperparameters for view-synthesis training.

    The loss weights and learning rates default to the published values
    (lambda1 0.05, lambda2 = lambda3 = 100, lambda4 0.8, pose lr 0.01,
    decoder lr 1e-4); everything else is desk-scale plumbing.
    """

    iterations: int = 4000
    batch_scenes: int = 8
    batch_views: int = 4
    rotation_pairs: int = 128
    theta_pairs: int = 16
    pose_updates_per_decoder: int = 3
    lambda1: float = 0.05
    lambda2: float = 100.0
    lambda3: float = 100.0
    lambda4: float = 0.8
    lr_pose: float = 0.01
    lr_decoder: float = 1e-4
    lr_schedule: str = "cosine"  # 'cosine' decays to 1% of base; or 'constant'
    scene_dim: int = 32
    hidden: tuple[int, ...] = (256, 512)
    seed: int = 0
    log_every: int = 50
    representation: str = "learned"  # or 'coordinate' (baseline, no rotation terms)
    rep: RepresentationConfig = field(default_factory=RepresentationConfig)

    def validate(self) -> None:
        if self.iterations <= 0:
            raise ConfigError("synthesis iterations must be positive")
        if self.pose_updates_per_decoder < 1:
            raise ConfigError("pose_updates_per_decoder must be >= 1")
        for name in ("lambda1", "lambda2", "lambda3", "lambda4"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.lr_schedule not in ("cosine", "constant"):
            raise ConfigError(f"lr_schedule must be 'cosine' or 'constant', got {self.lr_schedule!r}")
        if self.representation not in ("learned", "coordinate"):
            raise ConfigError(f"representation must be 'learned' or 'coordinate', got {self.representation!r}")
        self.rep.validate()


class SynthesisModel:
    """Decoder plus per-scene unit vectors, bound to a pose codec."""

    def __init__(
        self,
        representation,
        n_scenes: int,
        width: int,
        height: int,
        scene_dim: int,
        hidden: tuple[int, ...],
        rng: np.random.Generator,
    ):
        self.representation = representation
        self.width = width
        self.height = height
        u = rng.standard_normal((scene_dim, n_scenes))
        u /= np.linalg.norm(u, axis=0, keepdims=True)
        self.scene_vectors = Tensor(u, requires_grad=True, name="scene_vectors")
        sizes = [scene_dim + representation.dim, *hidden, width * height * 3]
        self.decoder = DenseStack(sizes, rng, output_activation="sigmoid", name="decoder")

    @property
    def n_scenes(self) -> int:
        return self.scene_vectors.shape[1]

    @property
    def scene_dim(self) -> int:
        return self.scene_vectors.shape[0]

    def parameters(self) -> list[Tensor]:
        return [*self.decoder.parameters(), self.scene_vectors]

    def renormalize_scene_vectors(self) -> None:
        norms = np.linalg.norm(self.scene_vectors.data, axis=0)
        norms[norms == 0.0] = 1.0
        self.scene_vectors.data /= norms[None, :]

    def forward_batch(self, scene_idx: np.ndarray, pose_vecs: Tensor) -> Tensor:
        """Differentiable predicted pixel columns for a training batch."""
        u = ad.gather_columns(self.scene_vectors, scene_idx)
        return self.decoder.forward(ad.concat_rows([u, pose_vecs]))

    def decode_from_vector(self, scene_index: int, pose_vec: np.ndarray) -> np.ndarray:
        """Image (H, W, 3) decoded from an explicit pose vector (no tape)."""
        x = np.concatenate([self.scene_vectors.data[:, scene_index], np.asarray(pose_vec, dtype=np.float64)])
        out = self.decoder.forward_array(x[:, None])[:, 0]
        return out.reshape(self.height, self.width, 3)

    def decode_view(self, scene_index: int, coords) -> np.ndarray:
        """Image decoded from pose coordinates; deterministic."""
        return self.decode_from_vector(scene_index, self.representation.encode(coords))

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {"scene_vectors": self.scene_vectors.data}
        out.update(self.decoder.state_arrays("decoder"))
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.scene_vectors.data[...] = arrays["scene_vectors"].reshape(self.scene_vectors.shape)
        self.decoder.load_state_arrays(arrays, "decoder")


def _schedule(base: float, kind: str, step: int, total: int) -> float:
    if kind == "constant":
        return base
    # Cosine decay from base to base / 100 across the run.
    frac = min(max(step / max(total, 1), 0.0), 1.0)
    return base * (0.01 + 0.99 * 0.5 * (1.0 + np.cos(np.pi * frac)))


class SynthesisTrainer:
    """Stateful training loop with explicit, checkpointable state."""

    def __init__(self, cfg: TrainConfig, dataset: SceneDataset | None, representation=None):
        cfg.validate()
        self.cfg = cfg
        self.dataset = dataset
        if dataset is None and cfg.lambda1 != 0.0:
            raise ConfigError("training without a dataset requires lambda1 == 0 (rotation-only)")
        if dataset is None and representation is None:
            raise ConfigError("training without a dataset requires an explicit representation")

        init_rng = stream(cfg.seed, _TAG_INIT)
        if representation is None:
            if cfg.representation == "coordinate":
                representation = CoordinateCodec(dataset.kind)
            else:
                representation = build_representation(dataset.kind, cfg.rep, init_rng)
        self.representation = representation

        self.model: SynthesisModel | None = None
        self.adam_decoder: Adam | None = None
        if dataset is not None:
            self.model = SynthesisModel(
                representation,
                n_scenes=len(dataset.scenes),
                width=dataset.width,
                height=dataset.height,
                scene_dim=cfg.scene_dim,
                hidden=tuple(cfg.hidden),
                rng=init_rng,
            )
            self.adam_decoder = Adam(self.model.parameters(), lr=cfg.lr_decoder)
            self._train_items = dataset.split_items("train")
            if not self._train_items:
                raise ConfigError("dataset has no training views")
            self._train_by_scene = {
                si: [vi for s, vi in self._train_items if s == si] for si in range(len(dataset.scenes))
            }

        pose_params = representation.parameters()
        self.adam_pose = Adam(pose_params, lr=cfg.lr_pose) if pose_params else None
        self.step = 0

    def _sample_batch(self, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        ds = self.dataset
        scene_ids = [si for si in range(len(ds.scenes)) if self._train_by_scene[si]]
        take = min(self.cfg.batch_scenes, len(scene_ids))
        chosen = rng.choice(len(scene_ids), size=take, replace=False)
        items = []
        for ci in chosen:
            si = scene_ids[int(ci)]
            views = self._train_by_scene[si]
            k = min(self.cfg.batch_views, len(views))
            picks = rng.choice(len(views), size=k, replace=False)
            items.extend((si, views[int(vi)]) for vi in picks)
        scene_idx = np.array([si for si, _ in items], dtype=np.intp)
        poses = ds.pose_array(items)
        targets = ds.image_columns(items)
        return scene_idx, poses, targets

    def step_once(self) -> dict[str, float]:
        cfg = self.cfg
        step = self.step
        components = {"L_rec": 0.0, "L_rot_sum": 0.0, "L_rot_x": 0.0, "L_rot_theta": 0.0}

        terms: list[Tensor] = []
        weights: list[float] = []
        if cfg.lambda1 != 0.0:
            scene_idx, poses, targets = self._sample_batch(stream(cfg.seed, _TAG_BATCH, step))
            pose_vecs = self.representation.encode_batch_tensor(poses)
            pred = self.model.forward_batch(scene_idx, pose_vecs)
            l_rec = ad.mse_loss(pred, Tensor(targets))
            components["L_rec"] = l_rec.item()
            terms.append(l_rec)
            weights.append(cfg.lambda1)

        rot_rng = stream(cfg.seed, _TAG_ROT, step)
        l_rot, l_x, l_theta = self.representation.rotation_loss_terms(
            rot_rng, cfg.rotation_pairs, cfg.theta_pairs
        )
        for term, lam, key in ((l_rot, cfg.lambda2, "L_rot_sum"), (l_x, cfg.lambda3, "L_rot_x"), (l_theta, cfg.lambda4, "L_rot_theta")):
            if term is None:
                continue
            components[key] = term.item()
            if lam != 0.0:
                terms.append(term)
                weights.append(lam)

        if not terms:
            raise ConfigError("nothing to optimize: all loss terms are disabled")
        total = ad.scale(terms[0], weights[0])
        for t, w in zip(terms[1:], weights[1:]):
            total = ad.add(total, ad.scale(t, w))
        total_value = total.item()
        components["L_total"] = total_value
        if not np.isfinite(total_value):
            raise TrainingDiverged(f"non-finite loss at step {step}: {components}")

        backward(total)
        if self.adam_pose is not None:
            self.adam_pose.lr = _schedule(cfg.lr_pose, cfg.lr_schedule, step, cfg.iterations)
            self.adam_pose.step()
            self.adam_pose.zero_grad()
        if self.adam_decoder is not None and cfg.lambda1 != 0.0 and (step + 1) % cfg.pose_updates_per_decoder == 0:
            self.adam_decoder.lr = _schedule(cfg.lr_decoder, cfg.lr_schedule, step, cfg.iterations)
            self.adam_decoder.step()
        if self.adam_decoder is not None:
            self.adam_decoder.zero_grad()

        self.representation.renormalize(stream(cfg.seed, _TAG_RENORM, step))
        if self.model is not None:
            self.model.renormalize_scene_vectors()
        self.step += 1
        return components

    def run(self, until_step: int, metrics_writer=None) -> dict[str, float]:
        last: dict[str, float] = {}
        while self.step < until_step:
            step_index = self.step
            last = self.step_once()
            if metrics_writer is not None and (
                step_index % self.cfg.log_every == 0 or self.step == until_step
            ):
                metrics_writer.writerow(
                    [step_index]
                    + [f"{last[k]:.10g}" for k in ("L_total", "L_rec", "L_rot_sum", "L_rot_x", "L_rot_theta")]
                )
        return last

    # Checkpointable state ------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = dict(self.representation.state_arrays())
        if self.model is not None:
            out.update(self.model.state_arrays())
        if self.adam_pose is not None:
            out.update(self.adam_pose.state_arrays("adam_pose"))
        if self.adam_decoder is not None:
            out.update(self.adam_decoder.state_arrays("adam_decoder"))
        return out

    def counters(self) -> dict[str, int]:
        out = {"step": self.step}
        if self.adam_pose is not None:
            out["adam_pose_steps"] = self.adam_pose.step_count
        if self.adam_decoder is not None:
            out["adam_decoder_steps"] = self.adam_decoder.step_count
        return out

    def load_state(self, arrays: dict[str, np.ndarray], counters: dict[str, int]) -> None:
        self.representation.load_state_arrays(arrays)
        if self.model is not None:
            self.model.load_state_arrays(arrays)
        if self.adam_pose is not None:
            self.adam_pose.load_state_arrays(arrays, "adam_pose")
            self.adam_pose.step_count = int(counters["adam_pose_steps"])
        if self.adam_decoder is not None:
            self.adam_decoder.load_state_arrays(arrays, "adam_decoder")
            self.adam_decoder.step_count = int(counters["adam_decoder_steps"])
        self.step = int(counters["step"])


def train_synthesis(
    cfg: TrainConfig,
    dataset: SceneDataset | None,
    representation=None,
    metrics_path: str | Path | None = None,
):
    """Train to ``cfg.iterations``; returns (model, representation).

    ``model`` is None for dataset-free rotation-only training.  Loss
    components go to ``metrics_path`` as CSV when given.
    """
    trainer = SynthesisTrainer(cfg, dataset, representation)
    if metrics_path is None:
        trainer.run(cfg.iterations)
    else:
        with open(metrics_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(METRICS_HEADER)
            trainer.run(cfg.iterations, writer)
    return trainer.model, trainer.representation


def trainer_checkpoint_meta(trainer: SynthesisTrainer, dataset: SceneDataset | None) -> dict:
    meta = {
        "type": "synthesis",
        "modules": ["representation"] + (["synthesis"] if trainer.model is not None else []),
        "representation": trainer.representation.describe(),
        "counters": trainer.counters(),
        "seed": trainer.cfg.seed,
    }
    if dataset is not None:
        meta["dataset"] = {"kind": dataset.kind, "width": dataset.width, "height": dataset.height}
    if trainer.model is not None:
        meta["model"] = {
            "scene_dim": trainer.model.scene_dim,
            "hidden": list(trainer.cfg.hidden),
            "n_scenes": trainer.model.n_scenes,
            "width": trainer.model.width,
            "height": trainer.model.height,
        }
    return meta


def save_trainer_checkpoint(path, trainer: SynthesisTrainer, dataset: SceneDataset | None) -> None:
    from .checkpoint import save_checkpoint

    save_checkpoint(path, trainer_checkpoint_meta(trainer, dataset), trainer.state_arrays())


def load_model_checkpoint(path):
    """(meta, representation, model or None) from a synthesis checkpoint."""
    from .checkpoint import load_checkpoint
    from .codec import representation_from_description
    from .errors import IncompatibleError

    meta, arrays = load_checkpoint(path)
    if meta.get("type") != "synthesis":
        raise IncompatibleError(f"{path}: checkpoint type {meta.get('type')!r}, expected 'synthesis'")
    representation = representation_from_description(meta["representation"])
    representation.load_state_arrays(arrays)
    model = None
    if "model" in meta:
        m = meta["model"]
        model = SynthesisModel(
            representation,
            n_scenes=m["n_scenes"],
            width=m["width"],
            height=m["height"],
            scene_dim=m["scene_dim"],
            hidden=tuple(m["hidden"]),
            rng=stream(0, 999),
        )
        model.load_state_arrays(arrays)
    return meta, representation, model


def ensure_dataset_compatible(meta: dict, dataset: SceneDataset) -> None:
    from .errors import IncompatibleError

    want = meta.get("dataset")
    if want is None:
        return
    have = {"kind": dataset.kind, "width": dataset.width, "height": dataset.height}
    if want != have:
        raise IncompatibleError(f"checkpoint was trained on {want}, dataset is {have}")
    if "model" in meta and meta["model"]["n_scenes"] != len(dataset.scenes):
        raise IncompatibleError(
            f"checkpoint has {meta['model']['n_scenes']} scene vectors, dataset has {len(dataset.scenes)} scenes"
        )


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for images in [0, 1].

    10 * log10(1 / mse), capped at 99 dB once mse drops below 1e-10.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"psnr: image shapes differ, {a.shape} vs {b.shape}")
    mse = float(((a - b) ** 2).mean())
    if mse < 1e-10:
        return 99.0
    return float(10.0 * np.log10(1.0 / mse))


def eval_synthesis_psnr(
    model: SynthesisModel, dataset: SceneDataset, split: str = "test"
) -> tuple[float, list[tuple[int, int, float]]]:
    """Mean PSNR over a split plus per-image rows (scene, view, psnr)."""
    items = dataset.split_items(split)
    if not items:
        raise ConfigError(f"dataset has no '{split}' views")

    def one(item):
        si, vi = item
        rec = dataset.scenes[si]
        pred = model.decode_view(si, rec.poses[vi].coords())
        return si, vi, psnr(pred, rec.images[vi].astype(np.float64))

    rows = eval_map(one, items)
    return float(np.mean([r[2] for r in rows])), rows


def mean_image_baseline(dataset: SceneDataset) -> float:
    """Mean test PSNR of predicting each scene's mean training image."""
    scores = []
    for rec in dataset.scenes:
        if not rec.train_views or not rec.test_views:
            continue
        mean_img = rec.images[rec.train_views].astype(np.float64).mean(axis=0)
        for vi in rec.test_views:
            scores.append(psnr(mean_img, rec.images[vi].astype(np.float64)))
    if not scores:
        raise ConfigError("dataset has no usable train/test views")
    return float(np.mean(scores))


def pose_vector_stddev(representation, dataset: SceneDataset, split: str = "train") -> np.ndarray:
    """Per-element stddev of encoded pose vectors over a dataset split."""
    items = dataset.split_items(split)
    if not items:
        raise ConfigError(f"dataset has no '{split}' views")
    encoded = representation.encode_batch(dataset.pose_array(items))
    return encoded.std(axis=1)


def noise_eval(
    model: SynthesisModel,
    dataset: SceneDataset,
    magnitudes: list[float],
    seed: int = 0,
    max_images: int | None = None,
) -> list[dict[str, float]]:
    """PSNR vs noise magnitude table (Gaussian noise on the pose vector).

    For magnitude ``alpha``, element i of the encoded pose vector receives
    N(0, (alpha * beta_i)^2) noise, beta_i being that element's stddev over
    the training split.  The alpha = 0 row is exactly the plain synthesis
    result.  ``magnitudes`` must include 0.0.
    """
    if not any(m == 0.0 for m in magnitudes):
        raise ConfigError("noise magnitudes must include 0.0")
    beta = pose_vector_stddev(model.representation, dataset, "train")
    items = dataset.split_items("test")
    if max_images is not None:
        items = items[:max_images]
    if not items:
        raise ConfigError("dataset has no test views")

    rows = []
    for ai, alpha in enumerate(magnitudes):
        def one(indexed_item, _alpha=float(alpha), _ai=ai):
            i, (si, vi) = indexed_item
            rec = dataset.scenes[si]
            v = model.representation.encode(rec.poses[vi].coords())
            noise = stream(seed, _TAG_NOISE, _ai, i).standard_normal(v.size) * (_alpha * beta)
            pred = model.decode_from_vector(si, v + noise)
            return psnr(pred, rec.images[vi].astype(np.float64))

        scores = np.array(eval_map(one, list(enumerate(items))))
        rows.append(
            {
                "alpha": float(alpha),
                "mean_psnr": float(scores.mean()),
                "std_psnr": float(scores.std()),
                "n": len(scores),
            }
        )
    return rows
