"""Run configuration: INI-style file with one section per subsystem.

Sections and keys (all optional; a missing file or empty config is valid and
every key below shows its default):

    [run]
    format_version = 1
    seed = 0

    [dataset]
    kind = turntable            ; turntable | toyroom
    scenes = 50
    views_per_scene = 60
    width = 24
    height = 24
    train_fraction = 0.8

    [representation]
    dim = 16                    ; sub-vector length per DOF (paper scale: 96)
    block = 8                   ; generator block size (paper scale: 16)
    angle_grids = 36            ; 10 degrees per grid point
    phi_grids = 13              ; turntable tilt covers 120 degrees
    position_grids = 20         ; per axis (toyroom polar grid)
    n_theta = 36                ; heading bank entries
    generator_std = 0.01
    type = learned              ; learned | coordinate (baseline)

    [synthesis]
    iterations = 4000
    batch_scenes = 8
    batch_views = 4
    rotation_pairs = 128
    theta_pairs = 16
    pose_updates_per_decoder = 3
    lambda1 = 0.05
    lambda2 = 100.0
    lambda3 = 100.0
    lambda4 = 0.8
    lr_pose = 0.01
    lr_decoder = 0.0001
    lr_schedule = cosine        ; cosine | constant
    scene_dim = 32
    hidden = 256,512
    log_every = 50
    checkpoint_every = 0        ; steps between periodic checkpoints, 0 = end only

    [regression]
    iterations = 2000
    batch_size = 32
    lr = 0.001
    lr_schedule = cosine
    hidden = 512,256
    position_loss_weight = 1.0
    target = learned            ; learned | euler | sincos

    [evaluation]
    noise_magnitudes = 0,0.25,0.5,1.0
    max_images = 0              ; 0 = all test images
    dump_images = 8             ; side-by-side PPMs written by eval-synthesis

Unknown sections or keys are rejected.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .codec import RepresentationConfig
from .errors import ConfigError
from .regression import RegressionConfig
from .scenes import DatasetConfig
from .synthesis import TrainConfig

__all__ = ["EvalConfig", "RunConfig", "load_config", "default_config_text"]

CONFIG_FORMAT_VERSION = 1


@dataclass
class EvalConfig:
    noise_magnitudes: tuple[float, ...] = (0.0, 0.25, 0.5, 1.0)
    max_images: int = 0
    dump_images: int = 8

    def validate(self) -> None:
        if self.max_images < 0 or self.dump_images < 0:
            raise ConfigError("evaluation counts must be non-negative")


@dataclass
class RunConfig:
    seed: int = 0
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    representation: RepresentationConfig = field(default_factory=RepresentationConfig)
    synthesis: TrainConfig = field(default_factory=TrainConfig)
    regression: RegressionConfig = field(default_factory=RegressionConfig)
    evaluation: EvalConfig = field(default_factory=EvalConfig)
    checkpoint_every: int = 0
    representation_type: str = "learned"
    regression_target: str = "learned"

    def apply_seed(self, seed: int) -> None:
        self.seed = int(seed)
        self.dataset.seed = int(seed)
        self.synthesis.seed = int(seed)
        self.regression.seed = int(seed)

    def wire(self) -> None:
        """Share the representation config and type with the trainer config."""
        self.synthesis.rep = self.representation
        self.synthesis.representation = self.representation_type

    def validate(self) -> None:
        self.wire()
        self.dataset.validate()
        self.representation.validate()
        self.synthesis.validate()
        self.regression.validate()
        self.evaluation.validate()
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must be non-negative")
        if self.regression_target not in ("learned", "euler", "sincos"):
            raise ConfigError(f"regression target must be learned/euler/sincos, got {self.regression_target!r}")


def _parse_value(section: str, key: str, raw: str, kind):
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError as err:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as {kind.__name__}") from err


def _int_tuple(section: str, key: str, raw: str) -> tuple[int, ...]:
    try:
        return tuple(int(v.strip()) for v in raw.split(",") if v.strip())
    except ValueError as err:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as a comma list of ints") from err


def _float_tuple(section: str, key: str, raw: str) -> tuple[float, ...]:
    try:
        return tuple(float(v.strip()) for v in raw.split(",") if v.strip())
    except ValueError as err:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as a comma list of floats") from err


# section -> key -> (target object attr path, parser)
def _schema(cfg: RunConfig) -> dict:
    ds, rep, syn, reg, ev = cfg.dataset, cfg.representation, cfg.synthesis, cfg.regression, cfg.evaluation
    plain = lambda obj, name, kind: (lambda s, k, raw: setattr(obj, name, _parse_value(s, k, raw, kind)))
    return {
        "run": {
            "format_version": lambda s, k, raw: _check_version(_parse_value(s, k, raw, int)),
            "seed": lambda s, k, raw: cfg.apply_seed(_parse_value(s, k, raw, int)),
        },
        "dataset": {
            "kind": plain(ds, "kind", str),
            "scenes": plain(ds, "n_scenes", int),
            "views_per_scene": plain(ds, "views_per_scene", int),
            "width": plain(ds, "width", int),
            "height": plain(ds, "height", int),
            "train_fraction": plain(ds, "train_fraction", float),
        },
        "representation": {
            "dim": plain(rep, "dim", int),
            "block": plain(rep, "block", int),
            "angle_grids": plain(rep, "angle_grids", int),
            "phi_grids": plain(rep, "phi_grids", int),
            "position_grids": plain(rep, "position_grids", int),
            "n_theta": plain(rep, "n_theta", int),
            "generator_std": plain(rep, "generator_std", float),
            "type": plain(cfg, "representation_type", str),
        },
        "synthesis": {
            "iterations": plain(syn, "iterations", int),
            "batch_scenes": plain(syn, "batch_scenes", int),
            "batch_views": plain(syn, "batch_views", int),
            "rotation_pairs": plain(syn, "rotation_pairs", int),
            "theta_pairs": plain(syn, "theta_pairs", int),
            "pose_updates_per_decoder": plain(syn, "pose_updates_per_decoder", int),
            "lambda1": plain(syn, "lambda1", float),
            "lambda2": plain(syn, "lambda2", float),
            "lambda3": plain(syn, "lambda3", float),
            "lambda4": plain(syn, "lambda4", float),
            "lr_pose": plain(syn, "lr_pose", float),
            "lr_decoder": plain(syn, "lr_decoder", float),
            "lr_schedule": plain(syn, "lr_schedule", str),
            "scene_dim": plain(syn, "scene_dim", int),
            "hidden": lambda s, k, raw: setattr(syn, "hidden", _int_tuple(s, k, raw)),
            "log_every": plain(syn, "log_every", int),
            "checkpoint_every": plain(cfg, "checkpoint_every", int),
        },
        "regression": {
            "iterations": plain(reg, "iterations", int),
            "batch_size": plain(reg, "batch_size", int),
            "lr": plain(reg, "lr", float),
            "lr_schedule": plain(reg, "lr_schedule", str),
            "hidden": lambda s, k, raw: setattr(reg, "hidden", _int_tuple(s, k, raw)),
            "position_loss_weight": plain(reg, "position_loss_weight", float),
            "target": plain(cfg, "regression_target", str),
        },
        "evaluation": {
            "noise_magnitudes": lambda s, k, raw: setattr(ev, "noise_magnitudes", _float_tuple(s, k, raw)),
            "max_images": plain(ev, "max_images", int),
            "dump_images": plain(ev, "dump_images", int),
        },
    }


def _check_version(version: int) -> None:
    if version != CONFIG_FORMAT_VERSION:
        raise ConfigError(f"config format_version {version} unsupported (expected {CONFIG_FORMAT_VERSION})")


def load_config(path: str | Path | None) -> RunConfig:
    """Parse a config file into a fully-defaulted RunConfig.

    ``None`` returns pure defaults.  Unknown sections or keys raise
    :class:`ConfigError` naming the offender.
    """
    cfg = RunConfig()
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            parser.read_string(path.read_text())
        except configparser.Error as err:
            raise ConfigError(f"cannot parse config {path}: {err}") from err
        schema = _schema(cfg)
        for section in parser.sections():
            if section not in schema:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                if key not in schema[section]:
                    raise ConfigError(f"unknown key {key!r} in section [{section}]")
                schema[section][key](section, key, raw)
    cfg.validate()
    return cfg


def default_config_text() -> str:
    """A config template listing every key at its default value."""
    return (
        "[run]\n"
        "format_version = 1\n"
        "seed = 0\n\n"
        "[dataset]\n"
        "kind = turntable\n"
        "scenes = 50\n"
        "views_per_scene = 60\n"
        "width = 24\n"
        "height = 24\n"
        "train_fraction = 0.8\n\n"
        "[representation]\n"
        "dim = 16\n"
        "block = 8\n"
        "angle_grids = 36\n"
        "phi_grids = 13\n"
        "position_grids = 20\n"
        "n_theta = 36\n"
        "generator_std = 0.01\n"
        "type = learned\n\n"
        "[synthesis]\n"
        "iterations = 4000\n"
        "batch_scenes = 8\n"
        "batch_views = 4\n"
        "rotation_pairs = 128\n"
        "theta_pairs = 16\n"
        "pose_updates_per_decoder = 3\n"
        "lambda1 = 0.05\n"
        "lambda2 = 100.0\n"
        "lambda3 = 100.0\n"
        "lambda4 = 0.8\n"
        "lr_pose = 0.01\n"
        "lr_decoder = 0.0001\n"
        "lr_schedule = cosine\n"
        "scene_dim = 32\n"
        "hidden = 256,512\n"
        "log_every = 50\n"
        "checkpoint_every = 0\n\n"
        "[regression]\n"
        "iterations = 2000\n"
        "batch_size = 32\n"
        "lr = 0.001\n"
        "lr_schedule = cosine\n"
        "hidden = 512,256\n"
        "position_loss_weight = 1.0\n"
        "target = learned\n\n"
        "[evaluation]\n"
        "noise_magnitudes = 0,0.25,0.5,1.0\n"
        "max_images = 0\n"
        "dump_images = 8\n"
    )
