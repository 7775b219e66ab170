"""Command-line entry point.

Subcommands: ``synth``, ``preprocess``, ``bench-sampling``, ``train``,
``infer``, ``eval``, ``gradcheck``, ``export-attention``.  Exit codes:
0 on success, 1 on argument/validation errors, 2 on runtime failures.
Randomized subcommands require an explicit ``--seed``; no entropy is pulled
from the environment.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import bench, checkpoint, evaluate, network, numeric, pointcloud, synth, train
from .rng import Rng
from .sampling import SamplerKind

__all__ = ["main", "run", "build_parser"]


class CliError(Exception):
    """Invalid invocation; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); the contract wants 1
        raise CliError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="randla", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate labeled synthetic scenes")
    p.add_argument("--kind", default="planes-spheres-boxes", choices=synth.SCENE_KINDS)
    p.add_argument("--n-points", type=int, default=4096)
    p.add_argument("--n-clouds", type=int, default=20)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("preprocess", help="grid-subsample a cloud")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--format", default="xyzrgbl-text", choices=pointcloud.FORMATS)
    p.add_argument("--voxel-size", type=float, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--out-format", default="xyzrgbl-text", choices=pointcloud.FORMATS)
    p.add_argument("--n-class", type=int, default=None)

    p = sub.add_parser("bench-sampling", help="time the sampling strategies")
    p.add_argument("--scales", default="1e3,1e4,1e5,1e6",
                   help="comma-separated point counts, e.g. 1e3,1e4")
    p.add_argument("--fraction", type=float, default=0.1)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--kinds", default="rs,fps,idis,pds,crs")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train on a directory of xyzrgbl scenes")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--config", default=None, help="key = value training config file")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n-class", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--points-per-crop", type=int, default=None)
    p.add_argument("--crops-per-epoch", type=int, default=None)
    p.add_argument("--lr0", type=float, default=None)
    p.add_argument("--lr-decay", type=float, default=None)
    p.add_argument("--k", type=int, default=16)
    p.add_argument("--block-depth", type=int, default=2)
    p.add_argument("--locse-mode", default="full", choices=sorted(network.LOCSE_MODES))
    p.add_argument("--pooling", default="attentive", choices=network.POOLING_MODES)
    p.add_argument("--channels", default=None, help="comma-separated widths, e.g. 8,32,128,256,512")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("infer", help="predict labels with voting inference")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--cloud", required=True)
    p.add_argument("--format", default="xyzrgbl-text", choices=pointcloud.FORMATS)
    p.add_argument("--crop-size", type=int, default=512)
    p.add_argument("--min-votes", type=int, default=1)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="score predicted labels against ground truth")
    p.add_argument("--pred", required=True, help="label file, one integer per line")
    p.add_argument("--gt", default=None, help="label file; alternative to --cloud")
    p.add_argument("--cloud", default=None, help="labeled cloud supplying ground truth")
    p.add_argument("--format", default="xyzrgbl-text", choices=pointcloud.FORMATS)
    p.add_argument("--n-class", type=int, required=True)
    p.add_argument("--json-out", default=None)

    p = sub.add_parser("gradcheck", help="finite-difference check of the autodiff core")
    p.add_argument("--seed", type=int, default=7)

    p = sub.add_parser("export-attention", help="dump attention score matrices as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--cloud", required=True)
    p.add_argument("--format", default="xyzrgbl-text", choices=pointcloud.FORMATS)
    p.add_argument("--layer", type=int, default=0)
    p.add_argument("--points", default=None, help="comma-separated point ids at that layer")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    return parser


def _cmd_synth(args) -> int:
    paths = synth.generate_dataset(args.out_dir, args.n_clouds, args.n_points,
                                   args.seed, kind=args.kind)
    print(f"wrote {len(paths)} scenes to {args.out_dir}")
    return 0


def _cmd_preprocess(args) -> int:
    cloud = pointcloud.load_cloud(args.input, args.format, n_class=args.n_class)
    sub, grid = pointcloud.grid_subsample(cloud, args.voxel_size)
    pointcloud.save_cloud(args.out, sub, args.out_format)
    print(f"{cloud.n} -> {sub.n} points at voxel {grid.voxel_size} m, wrote {args.out}")
    return 0


def _cmd_bench(args) -> int:
    try:
        scales = [int(float(s)) for s in args.scales.split(",") if s]
        kinds = [SamplerKind(k.strip()) for k in args.kinds.split(",") if k.strip()]
    except ValueError as exc:
        raise CliError(str(exc)) from None
    if args.reps < 1 or not scales:
        raise CliError("need at least one scale and one repetition")
    report = bench.benchmark_samplers(scales, args.fraction, kinds, args.reps, Rng(args.seed))
    report.write_csv(args.out)
    for err in report.errors:
        print(f"recorded failure: {err}", file=sys.stderr)
    print(f"wrote {len(report.rows)} timing rows to {args.out}")
    return 0


def _train_config(args) -> train.TrainConfig:
    overrides = {}
    for key in ("n_class", "epochs", "points_per_crop", "crops_per_epoch", "lr0", "lr_decay"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = str(value)
    overrides["seed"] = str(args.seed)
    if args.config is not None:
        try:
            return train.parse_train_config(args.config, overrides)
        except (OSError, ValueError) as exc:
            raise CliError(str(exc)) from None
    if args.n_class is None:
        raise CliError("--n-class is required when no --config file is given")
    kwargs = {"seed": args.seed, "n_class": args.n_class}
    for key in ("epochs", "points_per_crop", "crops_per_epoch", "lr0", "lr_decay"):
        value = getattr(args, key)
        if value is not None:
            kwargs[key] = value
    try:
        return train.TrainConfig(**kwargs)
    except ValueError as exc:
        raise CliError(str(exc)) from None


def _cmd_train(args) -> int:
    cfg = _train_config(args)
    files = sorted(str(p) for p in Path(args.data_dir).glob("*.txt"))
    if not files:
        raise CliError(f"no .txt scenes under {args.data_dir}")
    channels = (8, 32, 128, 256, 512)
    if args.channels:
        try:
            channels = tuple(int(c) for c in args.channels.split(","))
        except ValueError as exc:
            raise CliError(f"bad --channels: {exc}") from None
    probe = pointcloud.load_cloud(files[0], "xyzrgbl-text", n_class=cfg.n_class)
    net = network.NetworkConfig(n_class=cfg.n_class, d_in=probe.d_in, k=args.k,
                                channels=channels, block_depth=args.block_depth,
                                locse_mode=args.locse_mode, pooling=args.pooling)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def progress(stat: train.EpochStats):
        print(f"epoch {stat.epoch:3d}  lr {stat.lr:.6f}  loss {stat.loss:.5f}  oa {stat.oa:.4f}")

    train.train_loop(files, cfg, net=net,
                     checkpoint_path=str(out_dir / "model.ntck"),
                     log_path=str(out_dir / "log.csv"),
                     progress=progress)
    print(f"wrote {out_dir / 'model.ntck'} and {out_dir / 'log.csv'}")
    return 0


def _cmd_infer(args) -> int:
    params = checkpoint.load_model(args.checkpoint)
    cloud = pointcloud.load_cloud(args.cloud, args.format)
    labels = evaluate.vote_infer(params, cloud, args.crop_size, args.min_votes, Rng(args.seed))
    pointcloud.save_labels(args.out, labels, n_class=params.config.n_class)
    print(f"wrote {labels.shape[0]} labels to {args.out}")
    return 0


def _cmd_eval(args) -> int:
    pred = pointcloud.load_labels(args.pred)
    if (args.gt is None) == (args.cloud is None):
        raise CliError("give exactly one of --gt or --cloud")
    if args.gt is not None:
        gt = pointcloud.load_labels(args.gt)
    else:
        cloud = pointcloud.load_cloud(args.cloud, args.format, n_class=args.n_class)
        if cloud.labels is None:
            raise CliError(f"{args.cloud} carries no labels")
        gt = cloud.labels
    if pred.shape != gt.shape:
        raise CliError(f"prediction has {pred.shape[0]} labels, ground truth {gt.shape[0]}")
    cm = evaluate.confusion_matrix(pred, gt, args.n_class)
    result = evaluate.metrics(cm)
    print(evaluate.format_report(result))
    if args.json_out:
        Path(args.json_out).write_text(evaluate.report_json(result))
    else:
        print()
        print(evaluate.report_json(result))
    return 0


def _cmd_gradcheck(args) -> int:
    from .gradcheck_battery import run_battery
    results = run_battery(seed=args.seed)
    failed = False
    for name, err, bound in results:
        status = "ok" if err < bound else "FAIL"
        if err >= bound:
            failed = True
        print(f"{name:<28} max rel err {err:.3e}  (bound {bound:.0e})  {status}")
    if failed:
        print("gradient check failed", file=sys.stderr)
        return 2
    return 0


def _cmd_export_attention(args) -> int:
    params = checkpoint.load_model(args.checkpoint)
    cloud = pointcloud.load_cloud(args.cloud, args.format)
    ids: Optional[np.ndarray] = None
    if args.points:
        try:
            ids = np.array([int(v) for v in args.points.split(",")], dtype=np.int64)
        except ValueError as exc:
            raise CliError(f"bad --points: {exc}") from None
    network.export_attention(cloud, params, args.layer, point_ids=ids,
                             path=args.out, rng=Rng(args.seed))
    print(f"wrote attention scores for layer {args.layer} to {args.out}")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "preprocess": _cmd_preprocess,
    "bench-sampling": _cmd_bench,
    "train": _cmd_train,
    "infer": _cmd_infer,
    "eval": _cmd_eval,
    "gradcheck": _cmd_gradcheck,
    "export-attention": _cmd_export_attention,
}


def run(argv: Optional[List[str]] = None) -> int:
    """Parse and execute; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (pointcloud.LoadError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


def main() -> int:
    return run(sys.argv[1:])
