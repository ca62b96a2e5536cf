"""Miniature synthetic-data segmentation benchmark (three-row comparison).

End-to-end: train two small generators on phantom lesion pairs (one density-
conditioned, one mask-only), build a synthetic training set with each by
implanting into healthy slices, then train the same segmenter per training
set and score everything on one held-out phantom test set.  The printed
table mirrors the real / mask-synthesis / mask+density-synthesis comparison;
the interesting readout is the ordering of the last two rows.

Defaults are sized for a quick look (several minutes).  The acceptance-grade
configuration uses 200 slices per mode and three segmenter seeds.
"""

import argparse
import time
from pathlib import Path

from lesionforge.data import (
    build_phantom_dataset,
    load_pair_dataset,
    load_slice_dataset,
    prepare_pairs,
)
from lesionforge.implant import build_synthetic_dataset
from lesionforge.nn.discriminator import DiscriminatorConfig
from lesionforge.nn.generator import GeneratorConfig
from lesionforge.phantoms import config_for_size, healthy_config
from lesionforge.segeval import SegConfig, run_experiment
from lesionforge.training import TrainConfig, train

parser = argparse.ArgumentParser()
parser.add_argument("--out", default="demo_out/benchmark")
parser.add_argument("--slice-size", type=int, default=64)
parser.add_argument("--n-real", type=int, default=20)
parser.add_argument("--n-synth", type=int, default=40)
parser.add_argument("--gan-steps", type=int, default=300)
parser.add_argument("--epochs", type=int, default=2)
parser.add_argument("--seeds", type=int, nargs="+", default=[0])
args = parser.parse_args()

root = Path(args.out)
root.mkdir(parents=True, exist_ok=True)
t0 = time.time()
cfg = config_for_size(args.slice_size)

if not (root / "real").exists():
    build_phantom_dataset(root / "real", args.n_real, seed=700, config=cfg)
    build_phantom_dataset(root / "test", args.n_real, seed=600, config=cfg)
    build_phantom_dataset(root / "healthy", 15, seed=500, config=healthy_config(cfg))
    build_phantom_dataset(root / "gan_phantoms", 20, seed=800, config=cfg)
    prepare_pairs(root / "gan_phantoms", root / "pairs", patch_size=64)
pairs = load_pair_dataset(root / "pairs")
print(f"[{time.time()-t0:4.0f}s] {len(pairs)} training pairs ready")

G = GeneratorConfig(patch_size=64, base_channels=16)
D = DiscriminatorConfig(patch_size=64, channel_schedule=((32, 2), (64, 2), (128, 2), (256, 1)))
for mode in ("mask_plus_density", "mask_only"):
    if not (root / f"gan_{mode}" / "final").exists():
        tc = TrainConfig(epochs=10**6, learning_rate=2e-4, batch_size=4, seed=0, mode=mode)
        train(pairs, G, D, tc, out_dir=root / f"gan_{mode}", max_steps=args.gan_steps)
        print(f"[{time.time()-t0:4.0f}s] generator ({mode}) trained")

healthy = load_slice_dataset(root / "healthy")
shapes = [pairs.masks[i] for i in range(len(pairs))]
hists = [pairs.hists[i] for i in range(len(pairs))]
for mode in ("mask_only", "mask_plus_density"):
    if not (root / f"synth_{mode}").exists():
        manifest = build_synthetic_dataset(
            healthy, shapes, hists, root / f"gan_{mode}" / "final",
            args.n_synth, mode, seed=1, out_dir=root / f"synth_{mode}",
        )
        print(f"[{time.time()-t0:4.0f}s] synthetic ({mode}): {manifest['n_samples']} slices")

report = run_experiment(
    load_slice_dataset(root / "real"),
    load_slice_dataset(root / "synth_mask_only"),
    load_slice_dataset(root / "synth_mask_plus_density"),
    load_slice_dataset(root / "test"),
    SegConfig(epochs=args.epochs),
    seeds=args.seeds,
)
print(f"[{time.time()-t0:4.0f}s] experiment done\n")
print(report.text_table())
