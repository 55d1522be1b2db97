"""Command-line entry point: ``mtsfusion <command> --config run.json [--seed N] [--out DIR]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import torch

from .data import apply_normalizer, save_dataset
from .experiment import (
    SCHEMA_VERSION,
    ConfigError,
    ExperimentConfig,
    StageError,
    load_data,
    make_split,
    run_experiment,
)
from .metrics import eval_to_dict, confusion_metrics
from .models import TrainedModel
from .synth import SynthConfig, synth_generate

COMMANDS = ("synth", "train", "evaluate", "select", "explain", "run-all")


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mtsfusion", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="experiment config (JSON); defaults are used when omitted")
        p.add_argument("--seed", type=_u64, help="root seed; overrides the config")
        p.add_argument("--out", type=Path, help="output directory; overrides the config")
        mode = p.add_mutually_exclusive_group()
        mode.add_argument("--serial", action="store_true", help="run every task in order on one thread")
        mode.add_argument("--threads", type=_positive, help="worker threads for splits and folds")
        if name == "train":
            p.add_argument("--save-models", action="store_true", help="also write split models as JSON")
        if name == "evaluate":
            p.add_argument("--model", type=Path, required=True, nargs="+", help="saved model JSON file(s)")
            p.add_argument("--split", type=int, default=0, help="which test split to score")
    return parser


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = str(args.out)
    return cfg


def cmd_synth(cfg: ExperimentConfig) -> None:
    if "synth" not in cfg.data:
        raise ConfigError("synth needs a 'synth' data section")
    scfg = SynthConfig.from_dict({"seed": cfg.seed, **cfg.data["synth"]})
    ds, relevant = synth_generate(scfg)
    out = Path(cfg.out)
    save_dataset(ds, out)
    with open(out / "synth.json", "w", encoding="utf-8") as fh:
        json.dump({"schema_version": SCHEMA_VERSION, "config": scfg.to_dict(), "planted_features": relevant},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_evaluate(cfg: ExperimentConfig, models: list[Path], split: int) -> None:
    cfg.validate()
    ds, _ = load_data(cfg)
    if not 0 <= split < cfg.n_splits:
        raise ConfigError(f"split must lie in [0, {cfg.n_splits})")
    test = make_split(ds, cfg, split).test
    rows = {}
    for path in models:
        model = TrainedModel.load(path)
        if model.schema.fingerprint() != ds.schema.fingerprint():
            raise ConfigError(f"{path}: model schema does not match the configured data")
        # score the raw test patients under the model's own normalization
        data = apply_normalizer(model.stats, _raw_test(ds, test)) if model.stats is not None else test
        rows[str(path)] = eval_to_dict(confusion_metrics(model.predict(data), data.labels))
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "evaluation.json", "w", encoding="utf-8") as fh:
        json.dump({"schema_version": SCHEMA_VERSION, "split": split, "results": rows}, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _raw_test(ds, test):
    ids = {s.id for s in test.samples}
    return ds.with_samples([s for s in ds.samples if s.id in ids])


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    torch.set_num_threads(1)
    stage = "config"
    try:
        cfg = load_config(args)
        threads = args.threads
        serial = args.serial or (threads is None and cfg.threads <= 1)
        stage = args.command
        if args.command == "synth":
            cmd_synth(cfg)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, args.model, args.split)
        else:
            stages = {
                "train": ("train",),
                "select": ("select",),
                "explain": ("explain",),
                "run-all": ("train", "select", "explain"),
            }[args.command]
            run_experiment(cfg, stages, serial=serial, threads=threads,
                           save_models=getattr(args, "save_models", False))
    except StageError as exc:
        print(f"mtsfusion: error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"mtsfusion: error: [config] {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, TypeError, KeyError, json.JSONDecodeError) as exc:
        print(f"mtsfusion: error: [{stage}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
