"""Command-line surface: ``posefield <subcommand>``.

Subcommands: gen-data | train | eval-synthesis | eval-noise |
train-regressor | eval-regression | eval-gram.  Every command is
deterministic given (config, seed) and rewrites its outputs with identical
bytes on a rerun.

Training state passes through float32 checkpoint quantization at every
periodic save (the freshly written checkpoint is immediately reloaded), so a
run resumed from any checkpoint continues on the exact trajectory of the
uninterrupted run.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint
from .config import RunConfig, load_config
from .errors import (
    ConfigError,
    CorruptionError,
    FormatError,
    IncompatibleError,
    PosefieldError,
    TrainingDiverged,
)
from .imagefiles import side_by_side, write_pgm, write_ppm
from .regression import (
    eval_regression,
    load_regressor_checkpoint,
    save_regressor_checkpoint,
    train_regressor,
)
from .representation import gram_matrix
from .scenes import build_dataset, load_dataset
from .synthesis import (
    METRICS_HEADER,
    SynthesisTrainer,
    ensure_dataset_compatible,
    eval_synthesis_psnr,
    load_model_checkpoint,
    noise_eval,
    save_trainer_checkpoint,
)

__all__ = ["main"]


def _load_run_config(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.apply_seed(args.seed)
    cfg.validate()
    return cfg


def _require(args, *names) -> None:
    for name in names:
        if getattr(args, name, None) is None:
            raise ConfigError(f"--{name.replace('_', '-')} is required for this command")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen_data(args) -> int:
    cfg = _load_run_config(args)
    _require(args, "out")
    out = _out_dir(args)
    ds = build_dataset(cfg.dataset, out)
    train_n = sum(len(s.train_views) for s in ds.scenes)
    print(f"wrote {ds.kind} dataset: {len(ds.scenes)} scenes x {cfg.dataset.views_per_scene} views "
          f"({train_n} train / {ds.n_views - train_n} test) -> {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_run_config(args)
    _require(args, "data", "out")
    out = _out_dir(args)
    dataset = load_dataset(args.data)
    trainer = SynthesisTrainer(cfg.synthesis, dataset)
    if args.checkpoint:
        meta, arrays = load_checkpoint(args.checkpoint)
        ensure_dataset_compatible(meta, dataset)
        trainer.load_state(arrays, meta["counters"])

    ckpt_path = out / "checkpoint.pfck"
    period = cfg.checkpoint_every or cfg.synthesis.iterations
    iterations = cfg.synthesis.iterations

    def save_and_requantize() -> None:
        save_trainer_checkpoint(ckpt_path, trainer, dataset)
        meta, arrays = load_checkpoint(ckpt_path)
        trainer.load_state(arrays, meta["counters"])

    with open(out / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_HEADER)
        save_and_requantize()  # step-0 checkpoint doubles as the last-good fallback
        try:
            while trainer.step < iterations:
                target = min(iterations, (trainer.step // period + 1) * period)
                trainer.run(target, writer)
                save_and_requantize()
        except TrainingDiverged as err:
            print(f"training diverged: {err}", file=sys.stderr)
            print(f"last good checkpoint: {ckpt_path} (step {load_checkpoint(ckpt_path)[0]['counters']['step']})",
                  file=sys.stderr)
            return 4
    print(f"trained {trainer.step} steps -> {ckpt_path}")
    return 0


def cmd_eval_synthesis(args) -> int:
    cfg = _load_run_config(args)
    _require(args, "checkpoint", "data", "out")
    out = _out_dir(args)
    dataset = load_dataset(args.data)
    meta, _, model = load_model_checkpoint(args.checkpoint)
    if model is None:
        raise IncompatibleError("checkpoint holds no decoder; was it trained with lambda1 > 0 and a dataset?")
    ensure_dataset_compatible(meta, dataset)

    mean_psnr, rows = eval_synthesis_psnr(model, dataset, "test")
    with open(out / "psnr_per_image.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scene", "view", "psnr"])
        for si, vi, p in rows:
            w.writerow([si, vi, f"{p:.9g}"])
    with open(out / "psnr_mean.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mean_psnr", "n"])
        w.writerow([f"{mean_psnr:.9g}", len(rows)])
    for si, vi, _ in rows[: cfg.evaluation.dump_images]:
        rec = dataset.scenes[si]
        pred = model.decode_view(si, rec.poses[vi].coords())
        write_ppm(out / f"view_{si:04d}_{vi:04d}.ppm", side_by_side(rec.images[vi].astype(np.float64), pred))
    print(f"mean test PSNR {mean_psnr:.3f} dB over {len(rows)} images -> {out}")
    return 0


def cmd_eval_noise(args) -> int:
    cfg = _load_run_config(args)
    _require(args, "checkpoint", "data", "out")
    out = _out_dir(args)
    dataset = load_dataset(args.data)
    meta, _, model = load_model_checkpoint(args.checkpoint)
    if model is None:
        raise IncompatibleError("checkpoint holds no decoder; noise evaluation needs a trained synthesis model")
    ensure_dataset_compatible(meta, dataset)
    max_images = cfg.evaluation.max_images or None
    rows = noise_eval(model, dataset, list(cfg.evaluation.noise_magnitudes), seed=cfg.seed, max_images=max_images)
    with open(out / "noise_psnr.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha", "mean_psnr", "std_psnr", "n"])
        for r in rows:
            w.writerow([f"{r['alpha']:.9g}", f"{r['mean_psnr']:.9g}", f"{r['std_psnr']:.9g}", r["n"]])
    print("\n".join(f"alpha={r['alpha']:g}: {r['mean_psnr']:.3f} dB (n={r['n']})" for r in rows))
    return 0


def cmd_train_regressor(args) -> int:
    cfg = _load_run_config(args)
    _require(args, "data", "out")
    out = _out_dir(args)
    dataset = load_dataset(args.data)
    representation = None
    if cfg.regression_target == "learned" and not args.checkpoint:
        raise ConfigError("--checkpoint (a trained pose system) is required for target = learned")
    if args.checkpoint:
        # Baselines also accept the system: it sizes their fairness layer.
        meta, representation, _ = load_model_checkpoint(args.checkpoint)
        ensure_dataset_compatible(meta, dataset)
    reg = train_regressor(cfg.regression, dataset, representation, cfg.regression_target)
    save_regressor_checkpoint(out / "regressor.pfck", reg, seed=cfg.regression.seed)
    print(f"trained {cfg.regression_target} regressor -> {out / 'regressor.pfck'}")
    return 0


def cmd_eval_regression(args) -> int:
    cfg = _load_run_config(args)
    _require(args, "checkpoint", "data", "out")
    out = _out_dir(args)
    dataset = load_dataset(args.data)
    meta, reg = load_regressor_checkpoint(args.checkpoint)
    if meta["kind"] != dataset.kind or meta["width"] != dataset.width or meta["height"] != dataset.height:
        raise IncompatibleError(
            f"regressor was trained on {meta['kind']} {meta['width']}x{meta['height']}, "
            f"dataset is {dataset.kind} {dataset.width}x{dataset.height}"
        )
    report = eval_regression(reg, dataset, "test", seed=cfg.seed)
    report.write_csv(out)
    for dof in report.mean_abs_err:
        print(f"{dof}: mean {report.mean_abs_err[dof]:.4f} {report.units[dof]}, "
              f"median {report.median_abs_err[dof]:.4f} {report.units[dof]}")
    return 0


def cmd_eval_gram(args) -> int:
    _load_run_config(args)
    _require(args, "checkpoint", "out")
    out = _out_dir(args)
    _, representation, _ = load_model_checkpoint(args.checkpoint)
    if not hasattr(representation, "dof_system"):
        raise IncompatibleError("gram evaluation needs a learned representation checkpoint")
    written = []
    parts: list[tuple[str, np.ndarray]] = []
    for grid in representation.dof_system.grids:
        parts.append((grid.label, gram_matrix(grid)))
    if representation.polar is not None:
        v = representation.polar.vectors.data
        parts.append(("xy", v.T @ v))
    for label, gram in parts:
        with open(out / f"gram_{label}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            for row in gram:
                w.writerow([f"{val:.9g}" for val in row])
        write_pgm(out / f"gram_{label}.pgm", gram, lo=-1.0, hi=1.0)
        written.append(label)
    print(f"wrote gram matrices for {', '.join(written)} -> {out}")
    return 0


_COMMANDS = {
    "gen-data": (cmd_gen_data, "render a synthetic dataset to --out"),
    "train": (cmd_train, "train view synthesis on a dataset"),
    "eval-synthesis": (cmd_eval_synthesis, "held-out PSNR and side-by-side dumps"),
    "eval-noise": (cmd_eval_noise, "PSNR under pose-vector noise"),
    "train-regressor": (cmd_train_regressor, "fit a pose regressor"),
    "eval-regression": (cmd_eval_regression, "pose-error report on the test split"),
    "eval-gram": (cmd_eval_gram, "grid-vector inner-product matrices"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="posefield", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (func, help_text) in _COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="config file (INI); defaults apply when omitted")
        p.add_argument("--data", default=None, help="dataset directory")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--checkpoint", default=None, help="checkpoint file to load")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (FormatError, CorruptionError, IncompatibleError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except TrainingDiverged as err:
        print(f"error: {err}", file=sys.stderr)
        return 4
    except PosefieldError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
