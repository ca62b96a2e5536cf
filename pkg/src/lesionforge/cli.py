"""Command-line entry point for every pipeline stage.

Subcommands: ``make-phantoms``, ``prepare-data``, ``train``, ``synthesize``,
``grid``, ``build-dataset``, ``eval-seg``, ``serve``.  Exit codes: 0 on
success, 1 for user errors (bad flags, unreadable inputs), 2 for internal
failures (training divergence, unexpected exceptions).  Every subcommand is
deterministic given its ``--seed``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import lsf
from .data import (
    build_phantom_dataset,
    load_pair_dataset,
    load_slice_dataset,
    prepare_pairs,
)
from .errors import (
    CheckpointNotFoundError,
    ConfigurationError,
    EmptyMaskError,
    TrainingDivergenceError,
)
from .imaging import HuWindow, as_mask, validate_histogram
from .implant import build_synthetic_dataset
from .nn.discriminator import DiscriminatorConfig, default_schedule_for
from .nn.generator import GeneratorConfig
from .phantoms import config_for_size, healthy_config
from .segeval import SegConfig, run_experiment
from .synthesis import (
    HistogramPreset,
    SynthesisRequest,
    make_preset,
    render_grid,
    save_png,
    synthesize,
)
from .training import (
    MODE_MASK_DENSITY,
    MODE_MASK_ONLY,
    TrainConfig,
    load_generator,
    train,
)


class UserError(Exception):
    """Operator mistake: report and exit 1."""


_MODE_ALIASES = {
    "mask": MODE_MASK_ONLY,
    "mask_only": MODE_MASK_ONLY,
    "mask+density": MODE_MASK_DENSITY,
    "mask_plus_density": MODE_MASK_DENSITY,
}


def _normalize_mode(value: str) -> str:
    try:
        return _MODE_ALIASES[value]
    except KeyError:
        raise UserError(f"unknown mode {value!r} (use mask or mask+density)")


def _parse_window(value: str) -> HuWindow:
    parts = value.split(",")
    if len(parts) != 2:
        raise UserError(f"--window wants 'lo,hi', got {value!r}")
    try:
        lo, hi = float(parts[0]), float(parts[1])
    except ValueError:
        raise UserError(f"--window wants numbers, got {value!r}")
    if hi <= lo:
        raise UserError(f"--window needs lo < hi, got {value!r}")
    return HuWindow(lo, hi)


def _parse_seeds(value: str) -> list[int]:
    try:
        seeds = [int(s) for s in value.split(",") if s.strip() != ""]
    except ValueError:
        raise UserError(f"--seeds wants comma-separated integers, got {value!r}")
    if not seeds:
        raise UserError("--seeds needs at least one seed")
    return seeds


def _parse_addr(value: str) -> tuple[str, int]:
    host, sep, port_s = value.rpartition(":")
    if not sep or not host:
        raise UserError(f"--addr wants 'host:port', got {value!r}")
    try:
        port = int(port_s)
    except ValueError:
        raise UserError(f"--addr port must be an integer, got {port_s!r}")
    if not 1 <= port <= 65535:
        raise UserError(f"--addr port out of range: {port}")
    return host, port


def _require_dir(path: str, flag: str) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise UserError(f"{flag}: {path} is not a readable directory")
    return p


def _load_mask_file(path: str) -> np.ndarray:
    p = Path(path)
    if not p.is_file():
        raise UserError(f"mask file not found: {path}")
    return as_mask(lsf.read_lsf(p).astype(np.uint8))


def _parse_hist(value: str, n_bins: int = 100) -> np.ndarray:
    """A histogram flag: LSF/JSON file path, or a preset string.

    Presets: ``uniform``, ``delta:BIN``, ``unimodal:MEAN,WIDTH``,
    ``bimodal:M1,M2,W1,W2[,A1,A2]`` (bin units).
    """
    p = Path(value)
    if p.is_file():
        if p.suffix == ".json":
            hist = np.asarray(json.loads(p.read_text()), dtype=np.float64)
        else:
            hist = lsf.read_lsf(p)
        try:
            return validate_histogram(hist, n_bins)
        except ValueError as exc:
            raise UserError(f"{value}: {exc}")
    kind, _, rest = value.partition(":")
    try:
        nums = [float(s) for s in rest.split(",")] if rest else []
        if kind == "uniform" and not nums:
            return np.full(n_bins, 1.0 / n_bins)
        if kind == "delta" and len(nums) == 1:
            return make_preset(HistogramPreset("delta", (nums[0],), (0.0,)), n_bins)
        if kind == "unimodal" and len(nums) == 2:
            return make_preset(HistogramPreset("unimodal", (nums[0],), (nums[1],)), n_bins)
        if kind == "bimodal" and len(nums) in (4, 6):
            weights = tuple(nums[4:6]) if len(nums) == 6 else None
            return make_preset(
                HistogramPreset("bimodal", tuple(nums[0:2]), tuple(nums[2:4]), weights), n_bins
            )
    except ValueError as exc:
        raise UserError(f"bad histogram {value!r}: {exc}")
    raise UserError(
        f"bad histogram {value!r}: expected a file, uniform, delta:BIN, "
        "unimodal:MEAN,WIDTH, or bimodal:M1,M2,W1,W2[,A1,A2]"
    )


def _pool_from_dir(path: Path, filename: str) -> list[np.ndarray]:
    """Arrays from ``sample_*/<filename>`` if present, else ``*.lsf`` files."""
    dirs = lsf.sample_dirs(path)
    if dirs:
        return [lsf.read_lsf(d / filename) for d in dirs if (d / filename).is_file()]
    return [lsf.read_lsf(p) for p in sorted(path.glob("*.lsf"))]


# ---------------------------------------------------------------------------
# subcommands


def _cmd_make_phantoms(args) -> int:
    config = config_for_size(args.size)
    if args.healthy:
        config = healthy_config(config)
    paths = build_phantom_dataset(args.out, args.n, args.seed, config)
    print(f"wrote {len(paths)} phantom slices to {args.out}")
    return 0


def _cmd_prepare_data(args) -> int:
    src = _require_dir(args.input, "--input")
    window = _parse_window(args.window) if args.window else None
    summary = prepare_pairs(src, args.output, patch_size=args.patch_size, window=window)
    print(f"samples: {summary['samples']} skipped: {summary['skipped']}")
    return 0


def _cmd_train(args) -> int:
    src = _require_dir(args.dataset, "--dataset")
    try:
        dataset = load_pair_dataset(src)
    except ValueError as exc:
        raise UserError(str(exc))
    mode = _normalize_mode(args.mode)
    config = TrainConfig(
        epochs=args.epochs,
        learning_rate=args.lr,
        batch_size=args.batch_size,
        seed=args.seed,
        checkpoint_every=args.checkpoint_every,
        mode=mode,
    )
    p = dataset.patch_size
    gen_config = GeneratorConfig(
        patch_size=p, base_channels=args.base_channels, bridge_mode=args.bridge_mode
    )
    disc_config = DiscriminatorConfig(patch_size=p, channel_schedule=default_schedule_for(p))
    print(
        f"train: epochs={config.epochs} lr={config.learning_rate:g} "
        f"batch={config.batch_size} mode={config.mode} seed={config.seed} "
        f"samples={len(dataset)} patch={p}"
    )
    result = train(
        dataset,
        gen_config,
        disc_config,
        config,
        out_dir=args.out,
        resume_from=args.resume,
        max_steps=args.max_steps,
    )
    print(f"checkpoint: {result.checkpoint_dir} digest={result.checkpoint_digest}")
    return 0


def _cmd_synthesize(args) -> int:
    params = _load_params(args.checkpoint)
    mask = _load_mask_file(args.mask)
    hist = _parse_hist(args.hist, params.config.hist_bins)
    try:
        patch, _ = synthesize(SynthesisRequest(mask=mask, histogram=hist), params=params)
    except ValueError as exc:
        raise UserError(str(exc))
    _write_image(patch, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_grid(args) -> int:
    params = _load_params(args.checkpoint)
    masks = [_load_mask_file(m) for m in args.mask]
    hists = [_parse_hist(h, params.config.hist_bins) for h in args.hist]
    try:
        image = render_grid(masks, hists, params=params)
    except ValueError as exc:
        raise UserError(str(exc))
    _write_image(image, args.out)
    print(f"wrote {args.out} ({len(hists)}x{len(masks)} tiles)")
    return 0


def _cmd_build_dataset(args) -> int:
    healthy = load_slice_dataset(_require_dir(args.healthy, "--healthy"))
    shapes = [as_mask(m.astype(np.uint8)) for m in _pool_from_dir(_require_dir(args.shapes, "--shapes"), "mask.lsf")]
    hists = [validate_histogram(h) for h in _pool_from_dir(_require_dir(args.hists, "--hists"), "hist.lsf")]
    try:
        manifest = build_synthetic_dataset(
            healthy,
            shapes,
            hists,
            args.checkpoint,
            n_samples=args.n,
            mode=_normalize_mode(args.mode),
            seed=args.seed,
            out_dir=args.out,
            feather_sigma=args.feather_sigma,
        )
    except ValueError as exc:
        raise UserError(str(exc))
    print(
        f"wrote {manifest['n_samples']} samples to {args.out} "
        f"(mode={manifest['mode']}, placement_failures={manifest['placement_failures']}) "
        f"digest={lsf.dataset_digest(args.out)}"
    )
    return 0


def _cmd_eval_seg(args) -> int:
    datasets = {
        flag: load_slice_dataset(_require_dir(getattr(args, attr), flag))
        for flag, attr in (
            ("--real", "real"),
            ("--synth-mask", "synth_mask"),
            ("--synth-density", "synth_density"),
            ("--test", "test"),
        )
    }
    config = SegConfig(epochs=args.epochs, batch_size=args.batch_size)
    report = run_experiment(
        datasets["--real"],
        datasets["--synth-mask"],
        datasets["--synth-density"],
        datasets["--test"],
        config,
        _parse_seeds(args.seeds),
    )
    print(report.text_table())
    if args.out:
        Path(args.out).write_text(json.dumps(report.to_record(), indent=1) + "\n")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    host, port = _parse_addr(args.addr)
    checkpoints = _require_dir(args.checkpoints, "--checkpoints")
    shapes = _require_dir(args.shapes, "--shapes")
    slices = _require_dir(args.slices, "--slices") if args.slices else None
    app = create_app(checkpoints, shapes, slices)
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return 0


def _load_params(checkpoint: str):
    try:
        return load_generator(checkpoint)
    except CheckpointNotFoundError as exc:
        raise UserError(str(exc))


def _write_image(image: np.ndarray, out: str) -> None:
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".lsf":
        lsf.write_lsf(path, image)
    else:
        save_png(image, path)


# ---------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad flags; our contract reserves 2 for crashes."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lesionforge", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("make-phantoms", help="generate a procedural slice dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--healthy", action="store_true", help="no lesions (implant targets)")
    p.set_defaults(func=_cmd_make_phantoms)

    p = sub.add_parser("prepare-data", help="decompose lesions into mask/histogram pairs")
    p.add_argument("--input", required=True, help="slice dataset directory")
    p.add_argument("--output", required=True)
    p.add_argument("--window", default=None, help="lo,hi (default: per-sample metadata)")
    p.add_argument("--patch-size", type=int, default=64)
    p.set_defaults(func=_cmd_prepare_data)

    p = sub.add_parser("train", help="adversarial training on a pair dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--mode", default="mask+density", help="mask | mask+density")
    p.add_argument("--epochs", type=int, default=150)
    p.add_argument("--lr", type=float, default=0.0002)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--batch-size", type=int, default=4)
    p.add_argument("--base-channels", type=int, default=64)
    p.add_argument("--bridge-mode", default="compressed", choices=("compressed", "literal"))
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--resume", default=None, help="checkpoint directory to continue from")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("synthesize", help="one mask + histogram -> one patch")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--mask", required=True, help="LSF mask file")
    p.add_argument("--hist", required=True, help="preset or file (see --help)")
    p.add_argument("--out", required=True, help=".png or .lsf")
    p.set_defaults(func=_cmd_synthesize)

    p = sub.add_parser("grid", help="histogram rows x mask columns contact sheet")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--mask", action="append", required=True, help="repeatable")
    p.add_argument("--hist", action="append", required=True, help="repeatable")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_grid)

    p = sub.add_parser("build-dataset", help="implant synthesized lesions into healthy slices")
    p.add_argument("--healthy", required=True, help="healthy slice dataset")
    p.add_argument("--shapes", required=True, help="mask pool (pair dataset or *.lsf dir)")
    p.add_argument("--hists", required=True, help="histogram pool (pair dataset or *.lsf dir)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--mode", default="mask+density")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--feather-sigma", type=float, default=2.0)
    p.set_defaults(func=_cmd_build_dataset)

    p = sub.add_parser("eval-seg", help="three-way segmentation F1 comparison")
    p.add_argument("--real", required=True)
    p.add_argument("--synth-mask", required=True)
    p.add_argument("--synth-density", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--seeds", default="0", help="comma-separated")
    p.add_argument("--epochs", type=int, default=4)
    p.add_argument("--batch-size", type=int, default=4)
    p.add_argument("--out", default=None, help="also write the report as JSON")
    p.set_defaults(func=_cmd_eval_seg)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--addr", default=os.environ.get("LESIONFORGE_ADDR", "127.0.0.1:8630"))
    p.add_argument("--checkpoints", default=os.environ.get("LESIONFORGE_CHECKPOINTS"), required="LESIONFORGE_CHECKPOINTS" not in os.environ)
    p.add_argument("--shapes", default=os.environ.get("LESIONFORGE_SHAPES"), required="LESIONFORGE_SHAPES" not in os.environ)
    p.add_argument("--slices", default=os.environ.get("LESIONFORGE_SLICES"))
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TrainingDivergenceError as exc:
        print(f"error: training diverged at step {exc.step}", file=sys.stderr)
        return 2
    except (UserError, ConfigurationError, CheckpointNotFoundError, EmptyMaskError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 2
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports, not raises
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
