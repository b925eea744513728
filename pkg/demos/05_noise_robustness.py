"""Why embed the pose at all?  Robustness of decoding to pose noise.

Trains two models with identical decoders on the same small turntable
dataset: one fed the learned high-dimensional pose vectors, one fed raw
normalized (theta, phi) coordinates.  Gaussian noise scaled to each input
element's own stddev is then injected before decoding.  The learned
representation spreads the pose over many redundant dimensions, so the same
relative noise costs it far less PSNR than the 2-number coordinate input.
"""

import time
from pathlib import Path

from posefield import DatasetConfig, RepresentationConfig, TrainConfig, build_dataset
from posefield.synthesis import SynthesisTrainer, noise_eval

out_dir = Path(__file__).parent / "out"
out_dir.mkdir(exist_ok=True)

dataset = build_dataset(DatasetConfig(kind="turntable", n_scenes=8, views_per_scene=240,
                                      width=24, height=24, seed=7))
base = dict(iterations=5000, batch_scenes=4, batch_views=6, pose_updates_per_decoder=1,
            lr_decoder=3e-3, scene_dim=32, hidden=(256, 512), seed=0,
            rep=RepresentationConfig(dim=32, block=8, generator_std=0.1))

models = {}
for kind in ("learned", "coordinate"):
    cfg = TrainConfig(representation=kind, **base)
    if kind == "coordinate":
        cfg.lambda2 = cfg.lambda3 = cfg.lambda4 = 0.0  # nothing to rotate
    t0 = time.perf_counter()
    trainer = SynthesisTrainer(cfg, dataset)
    trainer.run(cfg.iterations)
    models[kind] = trainer.model
    print(f"trained {kind} model in {time.perf_counter() - t0:.0f}s")

magnitudes = [0.0, 0.25, 0.5, 1.0]
tables = {kind: noise_eval(model, dataset, magnitudes, seed=1) for kind, model in models.items()}

print("\nnoise magnitude ->  learned PSNR   coordinate PSNR")
for learned_row, coord_row in zip(tables["learned"], tables["coordinate"]):
    print(f"  alpha = {learned_row['alpha']:<5}   {learned_row['mean_psnr']:>8.2f} dB   {coord_row['mean_psnr']:>10.2f} dB")
print("\nthe coordinate model degrades quickly as the noise grows; the learned")
print("representation barely moves until the noise is comparable to the signal.")
