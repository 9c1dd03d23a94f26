"""Command line entry point: dataset, arch, train, eval, detect and report subcommands."""
from __future__ import annotations

import argparse
import asyncio
import logging
import platform
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from edge_squeeze.constants import (
    CHECKPOINT_DIR,
    CONFIG_ECHO_FILE,
    GRAPH_FILE,
    LAST_CHECKPOINT,
    REPORT_FILE,
    VERSION,
)
from edge_squeeze.controllers.architecture import VARIANT_BASELINE, VARIANT_PROPOSED, VARIANT_TOY
from edge_squeeze.controllers.datasets import load_holdout, load_manifest
from edge_squeeze.controllers.detector import render, write_report
from edge_squeeze.helpers.images import open_image
from edge_squeeze.helpers.util import parse_grid, parse_ratio
from edge_squeeze.models.config import RunConfig
from edge_squeeze.models.errors import (
    AnnotationError,
    ConfigError,
    EdgeSqueezeError,
    GraphValidationError,
)
from edge_squeeze.toolkit import EdgeSqueeze

LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
VALIDATION_ERRORS = (ConfigError, GraphValidationError, AnnotationError)


def _variant_flags(parser: argparse.ArgumentParser, default: Optional[str] = None) -> None:
    group = parser.add_mutually_exclusive_group()
    for variant in (VARIANT_BASELINE, VARIANT_PROPOSED, VARIANT_TOY):
        group.add_argument(
            f"--{variant}",
            dest="variant",
            action="store_const",
            const=variant,
            help=f"use the {variant} architecture",
        )
    parser.set_defaults(variant=default)


def build_parser() -> argparse.ArgumentParser:
    """Return the argument parser of all subcommands."""
    parser = argparse.ArgumentParser(
        prog="edge-squeeze", description="Squeezed Xception toolkit for PCB defect detection."
    )
    parser.add_argument("--config", type=Path, help="INI config file")
    parser.add_argument("--seed", type=int, help="run seed all other seeds derive from")
    parser.add_argument("--name", help="run name")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    commands = parser.add_subparsers(dest="command", required=True)

    dataset = commands.add_parser("dataset", help="tile dataset generation")
    dataset_commands = dataset.add_subparsers(dest="dataset_command", required=True)
    gen = dataset_commands.add_parser("gen", help="generate the tile dataset")
    gen.add_argument("src", type=Path, help="annotation file or directory")
    gen.add_argument("out", type=Path, help="output directory")
    gen.add_argument("--count", type=int, dest="target_count")
    gen.add_argument("--ratio", type=parse_ratio, help="split ratio, like 7:2:1")
    gen.add_argument("--holdout", help="comma separated defect classes to hold out")
    gen.add_argument("--grid", type=parse_grid, help="tile grid, like 10x10")
    gen.add_argument("--overlap", type=float, dest="overlap_threshold")
    gen.add_argument("--tile-size", type=int, dest="tile_size")
    gen.add_argument("--workers", type=int)
    gen.add_argument(
        "--no-materialize",
        dest="materialize",
        action="store_const",
        const=False,
        help="write the manifest only",
    )

    arch = commands.add_parser("arch", help="architecture reports")
    arch.add_argument("action", choices=("describe", "squeeze"))
    _variant_flags(arch)
    arch.add_argument("--out", type=Path, help="output file (describe) or directory (squeeze)")

    train = commands.add_parser("train", help="train a model on a tile dataset")
    train.add_argument("--data", type=Path, required=True, help="dataset directory")
    train.add_argument("--out", type=Path, required=True, help="run directory")
    _variant_flags(train)
    train.add_argument("--epochs", type=int)
    train.add_argument("--batch-size", type=int, dest="batch_size")
    train.add_argument("--lr", type=float, dest="learning_rate")
    train.add_argument("--checkpoint-every", type=int, dest="checkpoint_every")
    train.add_argument("--resume", action="store_true", help="continue from last.ckpt")
    train.add_argument("--stop-after", type=int, help="stop after this many epochs")
    train.add_argument("--no-telemetry", action="store_true", help="disable resource sampling")

    evaluate = commands.add_parser("eval", help="evaluate a checkpoint on a split")
    evaluate.add_argument("--ckpt", type=Path, required=True)
    evaluate.add_argument("--data", type=Path, required=True, help="dataset directory")
    evaluate.add_argument("--split", choices=("train", "val", "test"), default="test")

    detect = commands.add_parser("detect", help="grid detection on full board images")
    detect.add_argument("--ckpt", type=Path, required=True)
    source = detect.add_mutually_exclusive_group(required=True)
    source.add_argument("--image", type=Path, help="board image")
    source.add_argument("--holdout", type=Path, help="dataset directory with holdout.jsonl")
    detect.add_argument("--truth", type=Path, help="annotation of the board image")
    detect.add_argument("--grid", type=parse_grid)
    detect.add_argument("--threshold", type=float)
    detect.add_argument("--out", type=Path, required=True)

    report = commands.add_parser("report", help="compare training runs")
    report.add_argument("--runs", type=Path, nargs="+", required=True)
    report.add_argument("--out", type=Path, required=True)
    return parser


DATASET_FLAGS = (
    "target_count",
    "ratio",
    "holdout",
    "grid",
    "overlap_threshold",
    "tile_size",
    "workers",
    "materialize",
)
TRAIN_FLAGS = ("epochs", "batch_size", "learning_rate", "checkpoint_every")
DETECT_FLAGS = ("grid", "threshold")


def config_overrides(args: argparse.Namespace) -> Dict[str, Dict[str, Any]]:
    """Map the flags of the invoked subcommand onto config sections, None means unset."""
    values = vars(args)
    overrides: Dict[str, Dict[str, Any]] = {
        "run": {"seed": args.seed, "name": args.name},
        "arch": {"variant": values.get("variant")},
    }
    if args.command == "dataset":
        overrides["dataset"] = {key: values.get(key) for key in DATASET_FLAGS}
    elif args.command == "train":
        overrides["train"] = {key: values.get(key) for key in TRAIN_FLAGS}
        overrides["telemetry"] = {"enabled": False if args.no_telemetry else None}
    elif args.command == "detect":
        overrides["detect"] = {key: values.get(key) for key in DETECT_FLAGS}
    return overrides


def write_echo(config: RunConfig, out_dir: Path) -> Path:
    """Write the effective config with versions into the run directory."""
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / CONFIG_ECHO_FILE
    header = (
        f"# edge_squeeze {VERSION}, numpy {np.__version__}, "
        f"python {platform.python_version()}\n"
    )
    path.write_text(header + config.to_ini(), encoding="utf-8")
    return path


def cmd_dataset(toolkit: EdgeSqueeze, args: argparse.Namespace) -> int:
    """Generate the tile dataset."""
    write_echo(toolkit.config, args.out)
    manifest = asyncio.run(toolkit.datasets.generate(args.src, args.out))
    sizes = manifest.split_sizes()
    print(f"train {sizes['train']} / val {sizes['val']} / test {sizes['test']}")
    print(f"manifest digest {manifest.digest()}")
    return EXIT_OK


def cmd_arch(toolkit: EdgeSqueeze, args: argparse.Namespace) -> int:
    """Describe a variant or write its squeeze ledger."""
    variant = args.variant or toolkit.config.arch.variant
    graph = toolkit.arch.build(variant)
    if args.action == "describe":
        text = toolkit.arch.describe(graph)
        if args.out:
            args.out.write_text(text, encoding="utf-8")
        print(text, end="")
        return EXIT_OK
    if variant == VARIANT_BASELINE:
        raise ConfigError("squeeze needs the proposed or toy variant")
    text = toolkit.arch.describe_ledger(toolkit.arch.ledger(variant))
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        toolkit.arch.save_graph(graph, args.out / GRAPH_FILE)
        (args.out / "ledger.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def cmd_train(toolkit: EdgeSqueeze, args: argparse.Namespace) -> int:
    """Train the configured variant."""
    write_echo(toolkit.config, args.out)
    graph = toolkit.arch.build()
    toolkit.arch.save_graph(graph, args.out / GRAPH_FILE)
    manifest = load_manifest(args.data)
    model = toolkit.runtime.compile(graph)
    if not args.resume and (args.out / CHECKPOINT_DIR / LAST_CHECKPOINT).is_file():
        LOGGER.warning("Starting over, existing checkpoints in %s will be replaced", args.out)
    with toolkit.telemetry.session(args.out):
        history = toolkit.trainer.train(
            model, manifest, args.data, args.out, resume=args.resume, stop_after=args.stop_after
        )
    if last := history.last:
        print(
            f"epoch {last.epoch}: train loss {last.train_loss:.4f} "
            f"train acc {last.train_acc:.4f}"
        )
    return EXIT_OK


def cmd_eval(toolkit: EdgeSqueeze, args: argparse.Namespace) -> int:
    """Evaluate a checkpoint."""
    model, _ = toolkit.runtime.load_checkpoint(args.ckpt)
    result = toolkit.trainer.evaluate(model, load_manifest(args.data), args.data, args.split)
    print(f"{result.split.value}: loss {result.loss:.4f} accuracy {result.accuracy:.4f}")
    return EXIT_OK


def cmd_detect(toolkit: EdgeSqueeze, args: argparse.Namespace) -> int:
    """Detect defects on a board image or on the held out boards."""
    model, _ = toolkit.runtime.load_checkpoint(args.ckpt)
    args.out.mkdir(parents=True, exist_ok=True)
    if args.holdout:
        table = toolkit.detector.detect_holdout(model, load_holdout(args.holdout), args.out)
        (args.out / REPORT_FILE).write_text(table, encoding="utf-8")
        print(table, end="")
        return EXIT_OK
    img = open_image(args.image)
    truth = []
    if args.truth:
        images = toolkit.datasets.parse_annotations(args.truth)
        match = [x for x in images if Path(x.image_path).name == args.image.name]
        if not match and len(images) != 1:
            raise AnnotationError(f"{args.truth} holds no annotation for {args.image.name}")
        truth = list((match or images)[0].boxes)
    report = toolkit.detector.detect(model, img, args.image.stem)
    write_report(report, args.out / f"{report.image_id}.csv")
    render(img, report, truth, args.out / f"{report.image_id}.png")
    print(report.summary())
    if args.truth:
        result = toolkit.detector.score(report, img.width, img.height, truth)
        print(
            f"tp {result.true_positives} fp {result.false_positives} "
            f"fn {result.false_negatives}, boxes hit {result.boxes_hit}/{len(truth)}"
        )
    return EXIT_OK


def cmd_report(toolkit: EdgeSqueeze, args: argparse.Namespace) -> int:
    """Compare runs."""
    print(toolkit.telemetry.report(args.runs, args.out), end="")
    return EXIT_OK


COMMANDS = {
    "dataset": cmd_dataset,
    "arch": cmd_arch,
    "train": cmd_train,
    "eval": cmd_eval,
    "detect": cmd_detect,
    "report": cmd_report,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run the command line, returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s (%(name)s) %(message)s",
    )
    try:
        config = RunConfig.load(args.config, config_overrides(args))
        with EdgeSqueeze(config) as toolkit:
            return COMMANDS[args.command](toolkit, args)
    except VALIDATION_ERRORS as err:
        LOGGER.error("%s", err)
        return EXIT_USAGE
    except EdgeSqueezeError as err:
        LOGGER.error("%s", err, exc_info=args.verbose)
        return EXIT_FAILURE


def run(argv: Optional[List[str]] = None) -> None:
    """Console script entry point."""
    sys.exit(main(argv))
