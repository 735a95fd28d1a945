"""Command-line interface: prepare / train / evaluate / compare / predict / alert.

Exit codes: 0 success, 1 usage error, 2 data validation error, 3 runtime or
numeric failure. Long-running subcommands log progress to standard error;
machine-readable results (metrics JSON, CSV, alert JSONL) go to standard
output unless an output path is given.

Configuration is a flat JSON object whose keys mirror the ModelConfig,
TrainConfig, prepare, and alert-rule fields; explicit CLI flags override the
file. The environment variable SENTI_RISK_SEED overrides the seed when the
--seed flag is absent.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from . import alerts as alerts_mod
from . import data as data_mod
from . import train as train_mod
from .errors import CheckpointError, DataValidationError, NumericError, ShapeError
from .matrix import softmax
from .model import ArchKind, ModelConfig, build_model, load_checkpoint, model_forward, save_checkpoint
from .text import Lexicon

log = logging.getLogger(__name__)

ARCH_BY_FLAG = {
    "cnn": ArchKind.CNN_ONLY,
    "gru": ArchKind.GRU_ONLY,
    "cnn-gru": ArchKind.CNN_GRU,
}

CONFIG_DEFAULTS: dict = {
    # model
    "embed_dim": 64,
    "num_filters": 64,
    "kernel_width": 3,
    "conv_stride": 3,
    "gru_hidden": 32,
    "window": 20,
    "max_doc_len": 30,
    "attention": True,
    "attn_size": None,
    "num_classes": 3,
    "mse_weight": 0.5,
    # training
    "lr": 1e-4,
    "batch_size": 50,
    "epochs": 100,
    "patience": 10,
    "optimizer": "adam",
    "weight_decay": 0.0,
    # preparation
    "min_freq": 1,
    "max_vocab": 20000,
    "train_ratio": 0.7,
    "val_ratio": 0.15,
    "test_ratio": 0.15,
    "lexicon_positive": None,
    "lexicon_negative": None,
    # alerting
    "risk_threshold": 0.7,
    # global
    "seed": 0,
}


class UsageError(Exception):
    """Bad invocation detected after argparse (missing required flag, etc.)."""


class _Parser(argparse.ArgumentParser):
    """argparse exits with code 2 on usage errors; the contract here is 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> _Parser:
    parent = _Parser(add_help=False)
    parent.add_argument("--config", metavar="PATH", help="JSON config file")
    parent.add_argument("--seed", type=int, default=None, help="RNG seed")
    parent.add_argument("--arch", choices=sorted(ARCH_BY_FLAG), default=None,
                        help="architecture (default cnn-gru)")
    parent.add_argument("--attention", choices=["on", "off"], default=None,
                        help="attention pooling over GRU hidden states")
    parent.add_argument("--model-in", metavar="PATH", help="checkpoint to load")
    parent.add_argument("--model-out", metavar="PATH", help="checkpoint to write")
    parent.add_argument("--data-dir", metavar="DIR",
                        help="raw data dir (prepare) or prepared dataset dir")

    parser = _Parser(
        prog="sentirisk",
        description="Market-sentiment sequence learner with risk alerting.",
    )
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("prepare", parents=[parent],
                       help="ingest market.csv + texts.jsonl into a prepared dataset")
    p.add_argument("--out", metavar="DIR", help="output dir (default DATA_DIR/prepared)")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", parents=[parent], help="train a model")
    p.add_argument("--history-out", metavar="PATH",
                   help="epoch history JSONL (default derived from --model-out)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[parent], help="metrics on one split")
    p.add_argument("--split", choices=["train", "val", "test"], default="test")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", parents=[parent],
                       help="train all three architectures and tabulate metrics")
    p.add_argument("--out", metavar="PATH", help="also write metrics JSON here")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("predict", parents=[parent],
                       help="export date,true_close,pred_close CSV")
    p.add_argument("--split", choices=["train", "val", "test"], default="test")
    p.add_argument("--out", metavar="PATH", required=False, help="output CSV path")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("alert", parents=[parent], help="emit risk-alert JSONL")
    p.add_argument("--split", choices=["train", "val", "test"], default="test")
    p.add_argument("--predictions", metavar="PATH",
                   help="precomputed prediction JSONL instead of a model run")
    p.add_argument("--out", metavar="PATH", help="output JSONL path (default stdout)")
    p.set_defaults(func=cmd_alert)

    return parser


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------


def load_config_file(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise DataValidationError(f"config file not found: {path}")
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataValidationError(f"{path}: bad json ({exc.msg})") from None
    if not isinstance(obj, dict):
        raise DataValidationError(f"{path}: config must be a json object")
    unknown = set(obj) - set(CONFIG_DEFAULTS)
    if unknown:
        raise DataValidationError(f"{path}: unknown config keys {sorted(unknown)}")
    return obj


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(CONFIG_DEFAULTS)
    file_cfg: dict = {}
    if getattr(args, "config", None):
        file_cfg = load_config_file(args.config)
        cfg.update(file_cfg)
    cfg["_explicit"] = set(file_cfg)

    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    else:
        env = os.environ.get("SENTI_RISK_SEED")
        if env is not None:
            try:
                cfg["seed"] = int(env)
            except ValueError:
                raise UsageError(f"SENTI_RISK_SEED must be an integer, got {env!r}") from None
    if getattr(args, "attention", None) is not None:
        cfg["attention"] = args.attention == "on"
    return cfg


def _model_config(cfg: dict, vocab_size: int, window: int) -> ModelConfig:
    if "window" in cfg["_explicit"] and cfg["window"] != window:
        raise DataValidationError(
            f"config window {cfg['window']} does not match prepared dataset window {window}"
        )
    return ModelConfig(
        vocab_size=vocab_size,
        embed_dim=cfg["embed_dim"],
        num_filters=cfg["num_filters"],
        kernel_width=cfg["kernel_width"],
        conv_stride=cfg["conv_stride"],
        gru_hidden=cfg["gru_hidden"],
        window=window,
        max_doc_len=cfg["max_doc_len"],
        attention_enabled=bool(cfg["attention"]),
        attn_size=cfg["attn_size"],
        num_classes=cfg["num_classes"],
        mse_weight=cfg["mse_weight"],
        seed=cfg["seed"],
    )


def _train_config(cfg: dict) -> train_mod.TrainConfig:
    return train_mod.TrainConfig(
        lr=cfg["lr"],
        batch_size=cfg["batch_size"],
        epochs=cfg["epochs"],
        patience=cfg["patience"],
        optimizer=cfg["optimizer"],
        weight_decay=cfg["weight_decay"],
        seed=cfg["seed"],
    )


def _arch(args: argparse.Namespace) -> ArchKind:
    return ARCH_BY_FLAG[args.arch or "cnn-gru"]


def _require(args: argparse.Namespace, flag: str) -> str:
    value = getattr(args, flag.lstrip("-").replace("-", "_"), None)
    if not value:
        raise UsageError(f"{flag} is required for this command")
    return value


def _find_prepared(data_dir: str) -> Path:
    root = Path(data_dir)
    if (root / "samples.jsonl").is_file():
        return root
    if (root / "prepared" / "samples.jsonl").is_file():
        return root / "prepared"
    raise DataValidationError(f"no prepared dataset under {root} (run `sentirisk prepare`)")


def _lexicon(cfg: dict) -> Lexicon:
    pos, neg = cfg["lexicon_positive"], cfg["lexicon_negative"]
    if (pos is None) != (neg is None):
        raise DataValidationError(
            "lexicon_positive and lexicon_negative must be set together"
        )
    if pos is None:
        return Lexicon.bundled()
    return Lexicon.from_files(pos, neg)


def _split(ds: data_mod.PreparedDataset, name: str) -> list:
    train_s, val_s, test_s = ds.splits()
    return {"train": train_s, "val": val_s, "test": test_s}[name]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_prepare(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    data_dir = Path(_require(args, "--data-dir"))
    market = data_dir / "market.csv"
    texts = data_dir / "texts.jsonl"
    bars = data_mod.load_market_csv(market)
    docs = data_mod.load_text_jsonl(texts) if texts.is_file() else []
    if not texts.is_file():
        log.info("no %s; preparing a market-only dataset", texts)
    ratios = (cfg["train_ratio"], cfg["val_ratio"], cfg["test_ratio"])
    pcfg = data_mod.PrepareConfig(
        window=cfg["window"],
        max_doc_len=cfg["max_doc_len"],
        min_freq=cfg["min_freq"],
        max_vocab=cfg["max_vocab"],
        ratios=ratios,
    )
    ds = data_mod.prepare_dataset(bars, docs, _lexicon(cfg), pcfg)
    out = Path(args.out) if args.out else data_dir / "prepared"
    data_mod.save_prepared(ds, out)
    print(f"prepared {len(ds.samples)} samples "
          f"({len(bars)} bars, {len(docs)} docs, vocab {ds.vocab.size}) -> {out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    prepared = _find_prepared(_require(args, "--data-dir"))
    model_out = Path(_require(args, "--model-out"))
    ds = data_mod.load_prepared(prepared)
    mcfg = _model_config(cfg, ds.vocab.size, ds.window)
    model = build_model(mcfg, _arch(args))
    train_s, val_s, _ = ds.splits()
    best, history = train_mod.train(model, train_s, val_s, _train_config(cfg))
    save_checkpoint(best, model_out)
    if args.history_out:
        history_path = Path(args.history_out)
    else:
        name = model_out.name
        stem = name[: -len(".ckpt.json")] if name.endswith(".ckpt.json") else model_out.stem
        history_path = model_out.with_name(stem + ".history.jsonl")
    train_mod.save_history(history, history_path)
    last = history[-1]
    print(f"trained {best.arch.value} for {len(history)} epochs "
          f"(final train {last['train_loss']:.6f}, val {last['val_loss']:.6f}); "
          f"checkpoint -> {model_out}, history -> {history_path}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    resolve_config(args)
    prepared = _find_prepared(_require(args, "--data-dir"))
    model = load_checkpoint(_require(args, "--model-in"))
    ds = data_mod.load_prepared(prepared)
    split = _split(ds, args.split)
    if not split:
        raise DataValidationError(f"{args.split} split is empty")
    report = train_mod.evaluate(model, split)
    print(json.dumps({"split": args.split, **report.to_dict()}, indent=2))
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    prepared = _find_prepared(_require(args, "--data-dir"))
    ds = data_mod.load_prepared(prepared)
    mcfg = _model_config(cfg, ds.vocab.size, ds.window)
    reports = train_mod.compare_ablations(ds.samples, mcfg, _train_config(cfg),
                                          ratios=ds.ratios)
    print(train_mod.render_comparison_table(train_mod.report_rows(reports)))
    if args.out:
        obj = {arch.value: r.to_dict() for arch, r in reports.items()}
        Path(args.out).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    resolve_config(args)
    prepared = _find_prepared(_require(args, "--data-dir"))
    out = _require(args, "--out")
    model = load_checkpoint(_require(args, "--model-in"))
    ds = data_mod.load_prepared(prepared)
    split = _split(ds, args.split)
    if not split:
        raise DataValidationError(f"{args.split} split is empty")
    train_mod.export_predictions(model, split, ds.stats, out)
    print(f"wrote {len(split)} predictions -> {out}")
    return 0


def cmd_alert(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    rules = alerts_mod.AlertRuleConfig(risk_threshold=cfg["risk_threshold"])
    if args.predictions:
        preds = alerts_mod.load_predictions_jsonl(args.predictions)
    else:
        prepared = _find_prepared(_require(args, "--data-dir"))
        model = load_checkpoint(_require(args, "--model-in"))
        ds = data_mod.load_prepared(prepared)
        split = _split(ds, args.split)
        if not split:
            raise DataValidationError(f"{args.split} split is empty")
        preds = []
        for sample in split:
            pred, logits, _ = model_forward(model, sample)
            probs = softmax(logits)
            preds.append(alerts_mod.DailyPrediction(
                date=sample.target_date,
                predicted_class=max(range(3), key=lambda i: probs.at(i, 0)),
                probs=probs,
                predicted_return=pred,
            ))
    found = alerts_mod.detect_inflections(preds, rules)
    if args.out:
        with Path(args.out).open("w", encoding="utf-8") as fh:
            alerts_mod.write_alerts_jsonl(found, fh)
        log.info("wrote %d alerts -> %s", len(found), args.out)
    else:
        alerts_mod.write_alerts_jsonl(found, sys.stdout)
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: a subcommand is required", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 1
    except (DataValidationError, CheckpointError) as exc:
        print(f"{parser.prog}: data error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, ShapeError) as exc:
        print(f"{parser.prog}: numeric/runtime error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"{parser.prog}: i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
