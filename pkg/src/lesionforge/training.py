"""Adversarial training of the synthesis pair.

Each step updates the discriminator first (real batch vs freshly generated
fakes, treated as constants) and then the generator through the refreshed
discriminator, with total generator loss gan_weight * bce + l1_weight * L1.
All randomness — shuffling and dropout — is derived from (seed, epoch/step)
counters, so a run can be stopped at any checkpoint and resumed to a
bit-identical trajectory.

The ``mask_only`` ablation trains the same network fed a constant uniform
histogram, with the histogram-branch gradients severed; both modes share one
code path.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import PairDataset
from .errors import ConfigurationError, TrainingDivergenceError
from .imaging import uniform_histogram
from .nn import checkpoint as ckpt
from .nn import discriminator as dsc
from .nn import generator as gen
from .nn import ops
from .nn.adam import AdamState, adam_init, adam_step
from .nn.gradcheck import finite_difference_audit  # re-exported audit entry point

__all__ = [
    "MODE_MASK_ONLY",
    "MODE_MASK_DENSITY",
    "TrainConfig",
    "TrainingBatch",
    "TrainState",
    "TrainResult",
    "bce_logits",
    "d_loss",
    "g_loss",
    "init_state",
    "train_step",
    "train",
    "save_train_state",
    "load_train_state",
    "finite_difference_audit",
]

_SHUFFLE_TAG = 0x7A01

MODE_MASK_ONLY = "mask_only"
MODE_MASK_DENSITY = "mask_plus_density"

bce_logits = ops.bce_logits


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 150
    learning_rate: float = 0.0002
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    gan_weight: float = 1.0
    l1_weight: float = 100.0
    batch_size: int = 4
    seed: int = 0
    checkpoint_every: int = 0  # steps; 0 -> final checkpoint only
    mode: str = MODE_MASK_DENSITY

    def __post_init__(self):
        if self.learning_rate < 0 or self.adam_beta1 <= 0 or self.adam_beta2 <= 0:
            raise ConfigurationError("rates must be positive")
        if self.l1_weight < 0:
            raise ConfigurationError("l1_weight must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigurationError("epochs and batch_size must be >= 1")
        if self.mode not in (MODE_MASK_ONLY, MODE_MASK_DENSITY):
            raise ConfigurationError(f"unknown training mode {self.mode!r}")


@dataclass(frozen=True)
class TrainingBatch:
    masks: np.ndarray  # (N, 1, P, P) in {0, 1}
    histograms: np.ndarray  # (N, bins), each summing to 1
    targets: np.ndarray  # (N, 1, P, P) in [-1, 1]

    def __post_init__(self):
        n = self.masks.shape[0]
        if self.histograms.shape[0] != n or self.targets.shape != self.masks.shape:
            raise ValueError("batch fields must share their leading count and patch shape")
        if np.abs(self.targets).max() > 1.0 + 1e-6:
            raise ValueError("targets must lie in [-1, 1]")


@dataclass
class TrainState:
    gen: gen.GeneratorParams
    disc: dsc.DiscriminatorParams
    gen_opt: AdamState
    disc_opt: AdamState
    step: int = 0
    seed: int = 0


@dataclass
class TrainResult:
    state: TrainState
    checkpoint_dir: Path | None
    checkpoint_digest: str | None
    metrics: list[tuple[int, float, float, float]]


def d_loss(real_logits: np.ndarray, fake_logits: np.ndarray) -> float:
    """bce(real, 1) + bce(fake, 0); what the discriminator minimizes."""
    return bce_logits(real_logits, 1.0) + bce_logits(fake_logits, 0.0)


def g_loss(
    fake_logits: np.ndarray,
    fake_patch: np.ndarray,
    real_patch: np.ndarray,
    gan_weight: float = 1.0,
    l1_weight: float = 100.0,
) -> tuple[float, float, float]:
    """(total, gan_term, l1_term) with the non-saturating adversarial term."""
    gan_term = bce_logits(fake_logits, 1.0)
    l1_term = ops.l1_mean(fake_patch, real_patch)
    return gan_weight * gan_term + l1_weight * l1_term, gan_term, l1_term


def init_state(
    gen_config: gen.GeneratorConfig,
    disc_config: dsc.DiscriminatorConfig,
    seed: int = 0,
    dtype=np.float32,
) -> TrainState:
    g = gen.generator_init(gen_config, seed, dtype=dtype)
    d = dsc.discriminator_init(disc_config, seed, dtype=dtype)
    return TrainState(g, d, adam_init(g.tensors), adam_init(d.tensors), step=0, seed=seed)


def train_step(
    state: TrainState, batch: TrainingBatch, config: TrainConfig
) -> tuple[TrainState, dict]:
    """One alternating update (D then G), in place on ``state``."""
    masks = batch.masks
    hists = batch.histograms
    if config.mode == MODE_MASK_ONLY:
        hists = np.broadcast_to(
            uniform_histogram(hists.shape[1]), hists.shape
        ).astype(hists.dtype)
    targets = batch.targets

    fake, g_cache = gen.forward_batch(
        state.gen, masks, hists, mode="train", dropout_seed=(state.seed, state.step)
    )

    # Discriminator update; fakes enter as constants.
    real_logits, dc_real = dsc.forward_batch(state.disc, masks, targets, mode="train")
    fake_logits, dc_fake = dsc.forward_batch(state.disc, masks, fake, mode="train")
    dl = d_loss(real_logits, fake_logits)
    gr = dsc.backward_batch(state.disc, dc_real, ops.bce_logits_grad(real_logits, 1.0))[0]
    gf = dsc.backward_batch(state.disc, dc_fake, ops.bce_logits_grad(fake_logits, 0.0))[0]
    adam_step(
        state.disc.tensors,
        {k: gr[k] + gf[k] for k in gr},
        state.disc_opt,
        config.learning_rate,
        config.adam_beta1,
        config.adam_beta2,
    )

    # Generator update through the refreshed discriminator.
    fake_logits2, dc_g = dsc.forward_batch(state.disc, masks, fake, mode="train")
    total, gan_term, l1_term = g_loss(
        fake_logits2, fake, targets, config.gan_weight, config.l1_weight
    )
    dlogits = config.gan_weight * ops.bce_logits_grad(fake_logits2, 1.0)
    d_fake = dsc.backward_batch(state.disc, dc_g, dlogits)[2]
    d_fake = (d_fake + config.l1_weight * ops.l1_mean_grad(fake, targets)).astype(fake.dtype)
    g_grads = gen.backward_batch(state.gen, g_cache, d_fake)[0]
    if config.mode == MODE_MASK_ONLY:
        g_grads["hist.w"][:] = 0.0
        g_grads["hist.b"][:] = 0.0
    adam_step(
        state.gen.tensors,
        g_grads,
        state.gen_opt,
        config.learning_rate,
        config.adam_beta1,
        config.adam_beta2,
    )

    if not (np.isfinite(dl) and np.isfinite(total)):
        raise TrainingDivergenceError(state.step)
    metrics = {"d_loss": float(dl), "g_gan": float(gan_term), "g_l1": float(l1_term)}
    state.step += 1
    return state, metrics


def _epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence((_SHUFFLE_TAG, seed, epoch)))
    return rng.permutation(n)


def _batch_at(dataset: PairDataset, order: np.ndarray, b: int, batch_size: int) -> TrainingBatch:
    idx = order[b * batch_size : (b + 1) * batch_size]
    return TrainingBatch(
        masks=dataset.masks[idx].astype(np.float32)[:, None],
        histograms=dataset.hists[idx],
        targets=(dataset.patches[idx].astype(np.float32) * 2.0 - 1.0)[:, None],
    )


def steps_per_epoch(n_samples: int, batch_size: int) -> int:
    return -(-n_samples // batch_size)


def train(
    dataset: PairDataset,
    gen_config: gen.GeneratorConfig,
    disc_config: dsc.DiscriminatorConfig,
    config: TrainConfig,
    out_dir: str | Path | None = None,
    resume_from: str | Path | None = None,
    max_steps: int | None = None,
    progress=None,
) -> TrainResult:
    """Epoch loop with seeded shuffling and periodic checkpoints.

    ``max_steps`` caps the run below ``epochs * steps_per_epoch`` (used by
    short calibration runs); ``resume_from`` continues a saved state on the
    identical trajectory.  The metric log (one ``step, d_loss, g_gan, g_l1``
    line per step) is appended under ``out_dir``.
    """
    n = len(dataset)
    if n == 0:
        raise ValueError("dataset is empty")
    if resume_from is not None:
        state, saved_config = load_train_state(resume_from)
        if dataclasses.asdict(saved_config) != dataclasses.asdict(config):
            raise ValueError("resume config does not match the checkpoint's train config")
    else:
        state = init_state(gen_config, disc_config, seed=config.seed)

    spe = steps_per_epoch(n, config.batch_size)
    total_steps = config.epochs * spe
    if max_steps is not None:
        total_steps = min(total_steps, max_steps)

    out = Path(out_dir) if out_dir is not None else None
    log_f = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        log_f = open(out / "metrics.log", "a")

    metrics_rows: list[tuple[int, float, float, float]] = []
    digest = None
    try:
        while state.step < total_steps:
            epoch, b = divmod(state.step, spe)
            order = _epoch_order(config.seed, epoch, n)
            batch = _batch_at(dataset, order, b, config.batch_size)
            step_before = state.step
            state, m = train_step(state, batch, config)
            row = (step_before, m["d_loss"], m["g_gan"], m["g_l1"])
            metrics_rows.append(row)
            if log_f is not None:
                log_f.write(f"{row[0]}, {row[1]:.9g}, {row[2]:.9g}, {row[3]:.9g}\n")
            if progress is not None:
                progress(step_before, m)
            if (
                out is not None
                and config.checkpoint_every > 0
                and state.step % config.checkpoint_every == 0
                and state.step < total_steps
            ):
                save_train_state(out / f"step_{state.step:06d}", state, config)
        if out is not None:
            digest = save_train_state(out / "final", state, config)
    finally:
        if log_f is not None:
            log_f.close()
    return TrainResult(state, None if out is None else out / "final", digest, metrics_rows)


def _config_manifest(state: TrainState, config: TrainConfig) -> dict:
    return {
        "kind": "train_state",
        "step": state.step,
        "seed": state.seed,
        "gen_opt_t": state.gen_opt.t,
        "disc_opt_t": state.disc_opt.t,
        "gen_config": dataclasses.asdict(state.gen.config),
        "disc_config": dataclasses.asdict(state.disc.config),
        "train_config": dataclasses.asdict(config),
    }


def save_train_state(path: str | Path, state: TrainState, config: TrainConfig) -> str:
    """Write a resumable checkpoint directory; returns its digest."""
    networks = {
        "gen": {
            "param": state.gen.tensors,
            "stat": state.gen.stats,
            "adam_m": state.gen_opt.m,
            "adam_v": state.gen_opt.v,
        },
        "disc": {
            "param": state.disc.tensors,
            "stat": state.disc.stats,
            "adam_m": state.disc_opt.m,
            "adam_v": state.disc_opt.v,
        },
    }
    return ckpt.save_checkpoint(path, _config_manifest(state, config), networks)


def _gen_config_from(d: dict) -> gen.GeneratorConfig:
    d = dict(d)
    if d.get("channel_schedule") is not None:
        d["channel_schedule"] = tuple(d["channel_schedule"])
    return gen.GeneratorConfig(**d)


def _disc_config_from(d: dict) -> dsc.DiscriminatorConfig:
    d = dict(d)
    d["channel_schedule"] = tuple(tuple(e) for e in d["channel_schedule"])
    return dsc.DiscriminatorConfig(**d)


def load_train_state(path: str | Path) -> tuple[TrainState, TrainConfig]:
    """Load a checkpoint, validating every tensor shape against its config."""
    manifest, networks = ckpt.load_checkpoint(path)
    gen_config = _gen_config_from(manifest["gen_config"])
    disc_config = _disc_config_from(manifest["disc_config"])
    config = TrainConfig(**manifest["train_config"])

    g_shapes = gen.tensor_shapes(gen_config)
    d_shapes = dsc.tensor_shapes(disc_config)
    bundle_g = networks["gen"]
    bundle_d = networks["disc"]
    ckpt.validate_shapes(bundle_g["param"], g_shapes, "gen.param")
    ckpt.validate_shapes(bundle_g["stat"], gen.stat_shapes(gen_config), "gen.stat")
    ckpt.validate_shapes(bundle_g["adam_m"], g_shapes, "gen.adam_m")
    ckpt.validate_shapes(bundle_g["adam_v"], g_shapes, "gen.adam_v")
    ckpt.validate_shapes(bundle_d["param"], d_shapes, "disc.param")
    ckpt.validate_shapes(bundle_d["stat"], dsc.stat_shapes(disc_config), "disc.stat")
    ckpt.validate_shapes(bundle_d["adam_m"], d_shapes, "disc.adam_m")
    ckpt.validate_shapes(bundle_d["adam_v"], d_shapes, "disc.adam_v")

    state = TrainState(
        gen=gen.GeneratorParams(gen_config, bundle_g["param"], bundle_g["stat"]),
        disc=dsc.DiscriminatorParams(disc_config, bundle_d["param"], bundle_d["stat"]),
        gen_opt=AdamState(bundle_g["adam_m"], bundle_g["adam_v"], t=manifest["gen_opt_t"]),
        disc_opt=AdamState(bundle_d["adam_m"], bundle_d["adam_v"], t=manifest["disc_opt_t"]),
        step=manifest["step"],
        seed=manifest["seed"],
    )
    return state, config


def load_generator(path: str | Path) -> gen.GeneratorParams:
    """Just the generator from a checkpoint, for synthesis."""
    return load_train_state(path)[0].gen
