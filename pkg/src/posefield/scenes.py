"""Deterministic synthetic scenes, renderers, and dataset files.

Two desk-scale scene kinds stand in for full-size datasets while keeping
their DOF structure:

* ``toyroom``: a 2 m x 2 m room with colored, optionally striped walls and up
  to three axis-aligned pillars; the camera moves in (x, y) and rotates its
  heading alpha.  Rendered by a column ray caster with a 90 degree horizontal
  FOV: one ray per column at angle alpha + atan(offset), offset running from
  +1 (left edge) to -1 across columns.  The hit color is shaded by
  1 / (1 + 0.5 * distance) and painted as a wall band of half-height
  (H / 4) / distance pixels around the horizon, ceiling above, floor below.

* ``turntable``: 20 colored points in the unit ball viewed orthographically
  after rotation by R_z(theta) @ R_x(phi), painter's order back to front,
  each point a filled disc shaded by 0.6 + 0.4 * depth with the viewport
  spanning [-0.55, 0.55] in both screen axes.  Disc edges are coverage
  antialiased (alpha composited back to front) so pixel values vary smoothly
  with pose; hard-edged discs at 24 x 24 alias so badly that view synthesis
  degenerates into memorization.

Everything is a pure function of (seed, scene index, view index, config);
identical configs produce byte-identical directories.
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .errors import ConfigError, CorruptionError, FormatError, RangeError

__all__ = [
    "CameraPose",
    "WallSpec",
    "PillarSpec",
    "ToyScene",
    "TurntableScene",
    "SceneRecord",
    "SceneDataset",
    "DatasetConfig",
    "render_toyroom",
    "render_turntable",
    "render_pose",
    "build_dataset",
    "load_dataset",
]

FORMAT_VERSION = 1
ROOM_SIZE = 2.0
ROOM_MARGIN = 0.1
PHI_RANGE = (-np.pi / 3.0, np.pi / 3.0)
VIEWPORT_HALF = 0.55  # turntable orthographic half-extent
POINT_BALL_RADIUS = 0.4  # turntable point positions stay inside this ball
_TWO_PI = 2.0 * np.pi

# Fixed coordinate ranges per dataset kind, DOF name -> (lo, hi, periodic).
KIND_DOFS: dict[str, dict[str, tuple[float, float, bool]]] = {
    "toyroom": {
        "x": (ROOM_MARGIN, ROOM_SIZE - ROOM_MARGIN, False),
        "y": (ROOM_MARGIN, ROOM_SIZE - ROOM_MARGIN, False),
        "alpha": (0.0, _TWO_PI, True),
    },
    "turntable": {
        "theta": (0.0, _TWO_PI, True),
        "phi": (PHI_RANGE[0], PHI_RANGE[1], False),
    },
}

# Deterministic stream tags for SeedSequence keys.
_TAG_SCENE, _TAG_POSE, _TAG_SPLIT = 1, 2, 3


def stream(*key: int) -> np.random.Generator:
    """Generator derived from an integer key tuple; stable across runs."""
    return np.random.default_rng(tuple(int(k) for k in key))


def wrap_angle(a: float) -> float:
    return float(np.mod(a, _TWO_PI))


def q9(v: float) -> float:
    """Quantize to the 9-significant-digit precision of the pose CSVs."""
    return float(f"{float(v):.9g}")


@dataclass(frozen=True)
class CameraPose:
    """Camera pose for one scene kind; periodic angles stored in [0, 2 pi).

    The tilt ``phi`` keeps its sign (range [-pi/3, pi/3]); wrapping it would
    break the renderer's range contract.
    """

    kind: str
    x: float = 0.0
    y: float = 0.0
    alpha: float = 0.0
    theta: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        if self.kind not in KIND_DOFS:
            raise ConfigError(f"unknown pose kind {self.kind!r}")
        object.__setattr__(self, "alpha", wrap_angle(self.alpha))
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @classmethod
    def toyroom(cls, x: float, y: float, alpha: float) -> "CameraPose":
        return cls(kind="toyroom", x=x, y=y, alpha=alpha)

    @classmethod
    def turntable(cls, theta: float, phi: float) -> "CameraPose":
        return cls(kind="turntable", theta=theta, phi=phi)

    @property
    def dof_names(self) -> tuple[str, ...]:
        return tuple(KIND_DOFS[self.kind])

    def coords(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in self.dof_names])

    @classmethod
    def from_coords(cls, kind: str, coords) -> "CameraPose":
        return cls(kind=kind, **dict(zip(KIND_DOFS[kind], map(float, coords))))


@dataclass(frozen=True)
class WallSpec:
    color: tuple[float, float, float]
    stripe_count: int
    stripe_color: tuple[float, float, float]


@dataclass(frozen=True)
class PillarSpec:
    cx: float
    cy: float
    half_width: float
    height_frac: float
    color: tuple[float, float, float]


@dataclass(frozen=True)
class ToyScene:
    """Walls ordered north (y=2), east (x=2), south (y=0), west (x=0)."""

    walls: tuple[WallSpec, WallSpec, WallSpec, WallSpec]
    pillars: tuple[PillarSpec, ...]
    floor: tuple[float, float, float]
    ceiling: tuple[float, float, float]

    @classmethod
    def sample(cls, rng: np.random.Generator) -> "ToyScene":
        def color(lo=0.15, hi=1.0):
            return tuple(np.round(rng.uniform(lo, hi, 3), 6))

        # At least one stripe per wall keeps pose-from-image well posed:
        # featureless walls make small rotations nearly invisible.
        walls = tuple(
            WallSpec(color=color(), stripe_count=int(rng.integers(1, 5)), stripe_color=color())
            for _ in range(4)
        )
        pillars = []
        for _ in range(int(rng.integers(0, 4))):
            half = float(np.round(rng.uniform(0.08, 0.18), 6))
            pillars.append(
                PillarSpec(
                    cx=float(np.round(rng.uniform(0.35, ROOM_SIZE - 0.35), 6)),
                    cy=float(np.round(rng.uniform(0.35, ROOM_SIZE - 0.35), 6)),
                    half_width=half,
                    height_frac=float(np.round(rng.uniform(0.4, 0.95), 6)),
                    color=color(),
                )
            )
        return cls(walls=walls, pillars=tuple(pillars), floor=color(0.05, 0.5), ceiling=color(0.5, 1.0))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ToyScene":
        walls = tuple(
            WallSpec(tuple(w["color"]), int(w["stripe_count"]), tuple(w["stripe_color"]))
            for w in d["walls"]
        )
        pillars = tuple(
            PillarSpec(p["cx"], p["cy"], p["half_width"], p["height_frac"], tuple(p["color"]))
            for p in d["pillars"]
        )
        return cls(walls=walls, pillars=pillars, floor=tuple(d["floor"]), ceiling=tuple(d["ceiling"]))

    def contains_pillar(self, x: float, y: float, margin: float = 0.05) -> bool:
        return any(
            abs(x - p.cx) <= p.half_width + margin and abs(y - p.cy) <= p.half_width + margin
            for p in self.pillars
        )


@dataclass(frozen=True)
class TurntableScene:
    """Colored points inside the unit ball; positions shape (n, 3)."""

    positions: tuple[tuple[float, float, float], ...]
    radii: tuple[float, ...]
    colors: tuple[tuple[float, float, float], ...]

    @classmethod
    def sample(cls, rng: np.random.Generator, n_points: int = 20) -> "TurntableScene":
        dirs = rng.standard_normal((n_points, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        radii_pos = POINT_BALL_RADIUS * np.cbrt(rng.uniform(0.0, 1.0, n_points))
        pos = np.round(dirs * radii_pos[:, None], 6)
        radii = np.round(rng.uniform(0.05, 0.15, n_points), 6)
        colors = np.round(rng.uniform(0.25, 1.0, (n_points, 3)), 6)
        return cls(
            positions=tuple(map(tuple, pos)),
            radii=tuple(radii),
            colors=tuple(map(tuple, colors)),
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TurntableScene":
        return cls(
            positions=tuple(map(tuple, d["positions"])),
            radii=tuple(d["radii"]),
            colors=tuple(map(tuple, d["colors"])),
        )


def _wall_surface_color(scene: ToyScene, wall: int, u: float) -> tuple[float, float, float]:
    """Base or stripe color at normalized position u in [0, 1] along the wall."""
    spec = scene.walls[wall]
    n = spec.stripe_count
    if n > 0:
        slot = int(np.clip(np.floor(u * (2 * n + 1)), 0, 2 * n))
        if slot % 2 == 1:
            return spec.stripe_color
    return spec.color


def _cast_ray(scene: ToyScene, ox: float, oy: float, angle: float):
    """Nearest hit among the four walls and pillar boxes.

    Returns (wall_distance, wall_color, pillar_distance, pillar) where the
    pillar entries are None when no pillar is hit before the wall.
    """
    dx, dy = np.cos(angle), np.sin(angle)

    best_t, best_color = np.inf, (0.0, 0.0, 0.0)
    # Walls: 0 north y=2, 1 east x=2, 2 south y=0, 3 west x=0.
    candidates = []
    if dy > 0:
        candidates.append((0, (ROOM_SIZE - oy) / dy))
    if dx > 0:
        candidates.append((1, (ROOM_SIZE - ox) / dx))
    if dy < 0:
        candidates.append((2, (0.0 - oy) / dy))
    if dx < 0:
        candidates.append((3, (0.0 - ox) / dx))
    for wall, t in candidates:
        if t <= 0 or t >= best_t:
            continue
        hx, hy = ox + t * dx, oy + t * dy
        u = (hx if wall in (0, 2) else hy) / ROOM_SIZE
        if -1e-9 <= u <= 1 + 1e-9:
            best_t = t
            best_color = _wall_surface_color(scene, wall, float(np.clip(u, 0.0, 1.0)))

    pillar_t, pillar_hit = np.inf, None
    for p in scene.pillars:
        # Slab test against the axis-aligned box.
        tmin, tmax = -np.inf, np.inf
        ok = True
        for o, d, lo, hi in ((ox, dx, p.cx - p.half_width, p.cx + p.half_width),
                             (oy, dy, p.cy - p.half_width, p.cy + p.half_width)):
            if d == 0.0:
                if o < lo or o > hi:
                    ok = False
                    break
                continue
            t1, t2 = (lo - o) / d, (hi - o) / d
            if t1 > t2:
                t1, t2 = t2, t1
            tmin, tmax = max(tmin, t1), min(tmax, t2)
        if ok and tmax >= tmin and tmin > 1e-9 and tmin < pillar_t:
            pillar_t, pillar_hit = tmin, p

    if pillar_hit is not None and pillar_t < best_t:
        return best_t, best_color, pillar_t, pillar_hit
    return best_t, best_color, None, None


def render_toyroom(scene: ToyScene, pose: CameraPose, width: int, height: int) -> np.ndarray:
    """Column ray cast of the room; float64 image (height, width, 3) in [0, 1]."""
    lo, hi = ROOM_MARGIN, ROOM_SIZE - ROOM_MARGIN
    if not (lo <= pose.x <= hi and lo <= pose.y <= hi):
        raise RangeError(
            f"toyroom pose ({pose.x}, {pose.y}) outside interior [{lo}, {hi}]^2"
        )
    img = np.empty((height, width, 3))
    rows = np.arange(height) + 0.5 - height / 2.0

    def band_coverage(half: float) -> np.ndarray:
        # Fraction of each pixel row covered by the band [-half, half].
        return np.clip(np.minimum(rows + 0.5, half) - np.maximum(rows - 0.5, -half), 0.0, 1.0)[:, None]

    for c in range(width):
        offset = 1.0 - 2.0 * (c + 0.5) / width
        angle = pose.alpha + np.arctan(offset)
        wall_t, wall_color, pillar_t, pillar = _cast_ray(scene, pose.x, pose.y, angle)

        col = np.where(rows[:, None] < 0.0, np.asarray(scene.ceiling), np.asarray(scene.floor))
        wall_half = (height / 4.0) / wall_t
        shade = 1.0 / (1.0 + 0.5 * wall_t)
        cov = band_coverage(wall_half)
        col = col * (1.0 - cov) + np.asarray(wall_color) * shade * cov
        if pillar is not None:
            p_half = (height / 4.0) * pillar.height_frac / pillar_t
            p_shade = 1.0 / (1.0 + 0.5 * pillar_t)
            cov = band_coverage(p_half)
            col = col * (1.0 - cov) + np.asarray(pillar.color) * p_shade * cov
        img[:, c, :] = col
    return img


def render_turntable(scene: TurntableScene, theta: float, phi: float, width: int, height: int) -> np.ndarray:
    """Orthographic disc splat of the rotated point cloud; float64 in [0, 1].

    Discs are alpha-composited back to front with one-pixel coverage ramps
    at their edges (coverage = clip(r_px - dist + 0.5, 0, 1)).
    """
    if not (PHI_RANGE[0] <= phi <= PHI_RANGE[1]):
        raise RangeError(f"phi={phi!r} outside range [{PHI_RANGE[0]}, {PHI_RANGE[1]}]")
    theta = wrap_angle(theta)
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(phi), np.sin(phi)
    rz = np.array([[ct, -st, 0.0], [st, ct, 0.0], [0.0, 0.0, 1.0]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cp, -sp], [0.0, sp, cp]])
    rot = rz @ rx

    pts = np.asarray(scene.positions) @ rot.T
    order = np.argsort(pts[:, 1], kind="stable")  # back (small y) to front

    img = np.zeros((height, width, 3))
    cols = (np.arange(width) + 0.5)[None, :]
    rows = (np.arange(height) + 0.5)[:, None]
    span = 2.0 * VIEWPORT_HALF
    for i in order:
        qx, qy, qz = pts[i]
        px = (qx + VIEWPORT_HALF) / span * width
        py = (VIEWPORT_HALF - qz) / span * height
        r_px = scene.radii[i] / span * width
        depth = np.clip((qy + VIEWPORT_HALF) / span, 0.0, 1.0)
        shade = 0.6 + 0.4 * depth
        dist = np.sqrt((cols - px) ** 2 + (rows - py) ** 2)
        cov = np.clip(r_px - dist + 0.5, 0.0, 1.0)[:, :, None]
        img = img * (1.0 - cov) + np.asarray(scene.colors[i]) * shade * cov
    return img


def render_pose(scene, pose: CameraPose, width: int, height: int) -> np.ndarray:
    if pose.kind == "toyroom":
        return render_toyroom(scene, pose, width, height)
    return render_turntable(scene, pose.theta, pose.phi, width, height)


@dataclass
class DatasetConfig:
    kind: str = "turntable"
    n_scenes: int = 50
    views_per_scene: int = 60
    width: int = 24
    height: int = 24
    seed: int = 0
    train_fraction: float = 0.8

    def validate(self) -> None:
        if self.kind not in KIND_DOFS:
            raise ConfigError(f"dataset kind {self.kind!r} must be one of {sorted(KIND_DOFS)}")
        for name in ("n_scenes", "views_per_scene", "width", "height"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"dataset {name} must be positive")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("dataset train_fraction must be in (0, 1)")


@dataclass
class SceneRecord:
    spec: object
    poses: list[CameraPose]
    images: np.ndarray  # (n_views, H, W, 3) float32
    train_views: list[int]
    test_views: list[int]


@dataclass
class SceneDataset:
    kind: str
    width: int
    height: int
    seed: int
    train_fraction: float
    scenes: list[SceneRecord] = field(default_factory=list)

    @property
    def n_views(self) -> int:
        return sum(len(s.poses) for s in self.scenes)

    def dof_ranges(self) -> dict[str, tuple[float, float, bool]]:
        return KIND_DOFS[self.kind]

    def split_items(self, split: str) -> list[tuple[int, int]]:
        """(scene_index, view_index) pairs for 'train' or 'test'."""
        if split not in ("train", "test"):
            raise ConfigError(f"split must be 'train' or 'test', got {split!r}")
        out = []
        for si, rec in enumerate(self.scenes):
            views = rec.train_views if split == "train" else rec.test_views
            out.extend((si, vi) for vi in views)
        return out

    def pose_array(self, items: list[tuple[int, int]]) -> np.ndarray:
        return np.stack([self.scenes[si].poses[vi].coords() for si, vi in items])

    def image_columns(self, items: list[tuple[int, int]]) -> np.ndarray:
        """Flattened images as float64 columns (H*W*3, n)."""
        cols = [self.scenes[si].images[vi].reshape(-1) for si, vi in items]
        return np.stack(cols, axis=1).astype(np.float64)


def _sample_pose(kind: str, scene, rng: np.random.Generator) -> CameraPose:
    if kind == "toyroom":
        lo, hi = ROOM_MARGIN, ROOM_SIZE - ROOM_MARGIN
        while True:
            x, y = rng.uniform(lo, hi, 2)
            if not scene.contains_pillar(x, y):
                break
        return CameraPose.toyroom(q9(x), q9(y), q9(rng.uniform(0.0, _TWO_PI)))
    return CameraPose.turntable(
        q9(rng.uniform(0.0, _TWO_PI)), q9(rng.uniform(PHI_RANGE[0], PHI_RANGE[1]))
    )


def _sample_scene(kind: str, rng: np.random.Generator):
    return ToyScene.sample(rng) if kind == "toyroom" else TurntableScene.sample(rng)


def build_dataset(cfg: DatasetConfig, out_dir: str | Path | None = None) -> SceneDataset:
    """Render the dataset described by ``cfg``; optionally write it to disk.

    Every scene, pose, and split decision derives its RNG stream from
    (seed, tag, scene index[, view index]), so the output is a pure function
    of the config.
    """
    cfg.validate()
    ds = SceneDataset(
        kind=cfg.kind,
        width=cfg.width,
        height=cfg.height,
        seed=cfg.seed,
        train_fraction=cfg.train_fraction,
    )
    for si in range(cfg.n_scenes):
        scene = _sample_scene(cfg.kind, stream(cfg.seed, _TAG_SCENE, si))
        poses, images, train_views, test_views = [], [], [], []
        for vi in range(cfg.views_per_scene):
            pose = _sample_pose(cfg.kind, scene, stream(cfg.seed, _TAG_POSE, si, vi))
            poses.append(pose)
            images.append(render_pose(scene, pose, cfg.width, cfg.height).astype(np.float32))
            if stream(cfg.seed, _TAG_SPLIT, si, vi).uniform() < cfg.train_fraction:
                train_views.append(vi)
            else:
                test_views.append(vi)
        ds.scenes.append(
            SceneRecord(
                spec=scene,
                poses=poses,
                images=np.stack(images),
                train_views=train_views,
                test_views=test_views,
            )
        )
    if out_dir is not None:
        save_dataset(ds, out_dir)
    return ds


def _poses_csv_bytes(kind: str, poses: list[CameraPose]) -> bytes:
    names = list(KIND_DOFS[kind])
    buf = io.StringIO()
    buf.write("view," + ",".join(names) + "\n")
    for vi, pose in enumerate(poses):
        vals = ",".join(f"{getattr(pose, n):.9g}" for n in names)
        buf.write(f"{vi},{vals}\n")
    return buf.getvalue().encode()


def save_dataset(ds: SceneDataset, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": FORMAT_VERSION,
        "kind": ds.kind,
        "width": ds.width,
        "height": ds.height,
        "seed": ds.seed,
        "train_fraction": ds.train_fraction,
        "ranges": {k: list(v) for k, v in KIND_DOFS[ds.kind].items()},
        "totals": {
            "views": ds.n_views,
            "train": sum(len(s.train_views) for s in ds.scenes),
            "test": sum(len(s.test_views) for s in ds.scenes),
        },
        "scenes": [],
    }
    for si, rec in enumerate(ds.scenes):
        scene_dir = out / f"scene_{si:04d}"
        scene_dir.mkdir(parents=True, exist_ok=True)
        poses_bytes = _poses_csv_bytes(ds.kind, rec.poses)
        blob = np.ascontiguousarray(rec.images, dtype="<f4").tobytes()
        (scene_dir / "poses.csv").write_bytes(poses_bytes)
        (scene_dir / "images.f32").write_bytes(blob)
        manifest["scenes"].append(
            {
                "index": si,
                "spec": rec.spec.to_dict(),
                "n_views": len(rec.poses),
                "train_views": rec.train_views,
                "test_views": rec.test_views,
                "files": {
                    "poses.csv": hashlib.sha256(poses_bytes).hexdigest(),
                    "images.f32": hashlib.sha256(blob).hexdigest(),
                },
            }
        )
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))


def load_dataset(path: str | Path) -> SceneDataset:
    """Read a dataset directory back; verifies format version and checksums."""
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise CorruptionError(f"missing manifest: {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatError(f"dataset format_version {version!r} unsupported (expected {FORMAT_VERSION})")
    kind = manifest["kind"]
    if kind not in KIND_DOFS:
        raise FormatError(f"dataset kind {kind!r} unknown")
    w, h = int(manifest["width"]), int(manifest["height"])

    ds = SceneDataset(
        kind=kind,
        width=w,
        height=h,
        seed=int(manifest["seed"]),
        train_fraction=float(manifest["train_fraction"]),
    )
    names = list(KIND_DOFS[kind])
    for entry in manifest["scenes"]:
        scene_dir = root / f"scene_{entry['index']:04d}"
        spec_cls = ToyScene if kind == "toyroom" else TurntableScene
        spec = spec_cls.from_dict(entry["spec"])
        n_views = int(entry["n_views"])

        poses_path = scene_dir / "poses.csv"
        blob_path = scene_dir / "images.f32"
        for p, key in ((poses_path, "poses.csv"), (blob_path, "images.f32")):
            if not p.exists():
                raise CorruptionError(f"missing file: {p}")
            digest = hashlib.sha256(p.read_bytes()).hexdigest()
            if digest != entry["files"][key]:
                raise CorruptionError(f"checksum mismatch in {p}")

        lines = poses_path.read_text().splitlines()
        if lines[0] != "view," + ",".join(names):
            raise FormatError(f"unexpected poses.csv header in {poses_path}: {lines[0]!r}")
        poses = []
        for line in lines[1:]:
            parts = line.split(",")
            poses.append(CameraPose.from_coords(kind, [float(v) for v in parts[1:]]))
        if len(poses) != n_views:
            raise CorruptionError(f"{poses_path}: expected {n_views} poses, found {len(poses)}")

        blob = blob_path.read_bytes()
        expected = n_views * h * w * 3 * 4
        if len(blob) != expected:
            raise CorruptionError(f"{blob_path}: expected {expected} bytes, found {len(blob)}")
        images = np.frombuffer(blob, dtype="<f4").reshape(n_views, h, w, 3).copy()

        ds.scenes.append(
            SceneRecord(
                spec=spec,
                poses=poses,
                images=images,
                train_views=list(entry["train_views"]),
                test_views=list(entry["test_views"]),
            )
        )
    return ds
