"""
Command-line driver.

    relmetric train    --train T.jsonl [--dev D.jsonl] [--parses P.dep] --out DIR
    relmetric predict  --checkpoint DIR/checkpoint.bin --input X.jsonl --out preds.jsonl
    relmetric evaluate --predictions preds.jsonl --gold X.jsonl [--partition SCHEME]
    relmetric inspect  --checkpoint DIR/checkpoint.bin --sentence "..." --out HEATMAPS
    relmetric folds    --corpus ALL.jsonl --k 10 --out DIR

Exit status: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import TrainConfig, coerce, load_config, write_config_file
from .corpus import (SentenceExample, attach_parse, example_from_record, fold_split, parse_corpus,
                     read_parse_sidecar, write_canonical)
from .errors import ConfigError, LabelSpaceError, NonFiniteError, RelMetricError
from .harness import (confidence_interval, evaluate, load_checkpoint, model_from_checkpoint,
                      partition_analysis, predict_examples, save_checkpoint, train)

logger = logging.getLogger("relmetric")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file; flags override it")
    group = p.add_argument_group("config overrides")
    for key in TrainConfig.keys():
        group.add_argument(f"--{key.replace('_', '-')}", dest=f"cfg_{key}", metavar="VALUE")


def _config_from_args(args) -> TrainConfig:
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}
    if args.config and not Path(args.config).exists():
        raise FileNotFoundError(f"config file not found: {args.config}")
    return load_config(args.config, {k: coerce(k, v) for k, v in overrides.items()})


def _load(path, fmt: str, parses: Optional[str]) -> list[SentenceExample]:
    examples = parse_corpus(path, fmt)
    if parses:
        sidecar = read_parse_sidecar(parses)
        examples = [attach_parse(ex, sidecar) for ex in examples]
    return examples


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="relmetric", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("train", help="train a model and write checkpoint + metrics log")
    p.add_argument("--train", required=True)
    p.add_argument("--dev")
    p.add_argument("--format", default="canonical", choices=["canonical", "conll04", "ade"])
    p.add_argument("--parses", help="dependency sidecar covering train and dev sentences")
    p.add_argument("--out", required=True, help="output directory")
    _add_config_flags(p)

    p = sub.add_parser("predict", help="decode entities and relations for a corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--format", default="canonical", choices=["canonical", "conll04", "ade"])
    p.add_argument("--parses")
    p.add_argument("--out", required=True, help="predictions file (JSON lines)")

    p = sub.add_parser("evaluate", help="strict-match scores of predictions against gold")
    p.add_argument("--predictions", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--format", default="canonical", choices=["canonical", "conll04", "ade"])
    p.add_argument("--partition", choices=["length", "entity_distance", "relation_type"])
    p.add_argument("--bins", help="comma-separated thresholds or bin edges")
    p.add_argument("--out", help="write the report here as JSON")

    p = sub.add_parser("inspect", help="emit per-layer activation heatmaps for one sentence")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sentence", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--png", action="store_true", help="also render images (needs matplotlib)")

    p = sub.add_parser("folds", help="k-fold cross-validation driver")
    p.add_argument("--corpus", required=True)
    p.add_argument("--format", default="canonical", choices=["canonical", "conll04", "ade"])
    p.add_argument("--parses")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--fold-seed", type=int, default=0)
    p.add_argument("--only", type=int, nargs="*", help="run just these fold indices")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    return parser


# ----------------------------------------------------------------------
# Subcommands
# ----------------------------------------------------------------------


def run_train(args) -> int:
    config = _config_from_args(args)
    train_set = _load(args.train, args.format, args.parses)
    dev_set = _load(args.dev, args.format, args.parses) if args.dev else []
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_config_file(out / "config.txt", config)
    result = train(config, train_set, dev_set, log_path=out / "metrics.jsonl")
    save_checkpoint(out / "checkpoint.bin", result.best)
    final = result.log[-1]
    summary = {"epochs": len(result.log), "best_epoch": result.best.epoch - 1,
               "final_train_loss": final["train_loss"], "dev_ner_f1": final["dev_ner_f1"],
               "dev_re_f1": final["dev_re_f1"]}
    print(json.dumps(summary))
    return EXIT_OK


def _check_labels(model, examples: Sequence[SentenceExample]) -> None:
    ents = {e.type for ex in examples for e in ex.entities}
    rels = {r.predicate for ex in examples for r in ex.relations}
    labels = model.labels
    if not ents <= set(labels.entity_types) or not rels <= set(labels.relation_types):
        raise LabelSpaceError(
            f"label-space mismatch: checkpoint has entities {labels.entity_types} and relations "
            f"{labels.relation_types}; corpus has entities {sorted(ents)} and relations {sorted(rels)}")


def run_predict(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    model = model_from_checkpoint(ckpt)
    examples = _load(args.input, args.format, args.parses)
    _check_labels(model, examples)
    out = Path(args.out)
    total = 0.0
    with open(out, "w", encoding="utf-8") as fh:
        for ex in examples:
            t0 = time.perf_counter()
            pred = predict_examples(model, [ex])[0]
            elapsed = time.perf_counter() - t0
            total += elapsed
            record = pred.to_record()
            record["inference_seconds"] = elapsed
            fh.write(json.dumps(record) + "\n")
    write_config_file(out.with_name(out.name + ".config.txt"), ckpt.config)
    print(json.dumps({"sentences": len(examples), "inference_seconds": total}))
    return EXIT_OK


def run_evaluate(args) -> int:
    preds = parse_corpus(args.predictions, "canonical")
    gold = parse_corpus(args.gold, args.format)
    if args.partition:
        bins = [float(b) for b in args.bins.split(",")] if args.bins else None
        if args.partition == "length" and not bins:
            bins = sorted({len(ex) for ex in gold})
        rows = partition_analysis(preds, gold, args.partition, bins)
        result = {"partition": args.partition,
                  "rows": [{"bin": r.label, "examples": r.examples, **r.report.as_dict()} for r in rows]}
    else:
        result = evaluate(preds, gold).as_dict()
    text = json.dumps(result, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def write_grid(path, tokens: Sequence[str], grid: np.ndarray) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([""] + list(tokens))
        for tok, row in zip(tokens, grid):
            w.writerow([tok] + [repr(float(v)) for v in row])


def read_grid(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0][1:], np.array([[float(v) for v in r[1:]] for r in rows[1:]])


def heatmaps(model, example: SentenceExample) -> list[tuple[str, np.ndarray]]:
    """Channel-summed L^1..L^lambda and the tag-maxed Q, each n x n."""
    out = model.run(example.words, example.dep_edges, training=False)
    grids = [(f"layer_{k + 1:02d}", layer.data.sum(axis=2)) for k, layer in enumerate(out.layers)]
    grids.append(("prediction", out.q.data.max(axis=2)))
    return grids


def run_inspect(args) -> int:
    if not args.sentence.strip():
        raise UsageError("inspect needs a non-empty sentence")
    ckpt = load_checkpoint(args.checkpoint)
    model = model_from_checkpoint(ckpt)
    example = example_from_record({"id": "inspect", "text": args.sentence})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    grids = heatmaps(model, example)
    for name, grid in grids:
        write_grid(out / f"{name}.csv", example.words, grid)
    if args.png:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        for name, grid in grids:
            fig, ax = plt.subplots(figsize=(6, 6))
            ax.imshow(grid, cmap="viridis")
            ax.set_xticks(range(len(example)), example.words, rotation=90)
            ax.set_yticks(range(len(example)), example.words)
            ax.set_title(name)
            fig.tight_layout()
            fig.savefig(out / f"{name}.png", dpi=120)
            plt.close(fig)
    write_config_file(out / "config.txt", ckpt.config)
    print(json.dumps({"grids": [name for name, _ in grids], "out": str(out)}))
    return EXIT_OK


def run_folds(args) -> int:
    config = _config_from_args(args)
    examples = _load(args.corpus, args.format, args.parses)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_config_file(out / "config.txt", config)
    folds = args.only if args.only else range(args.k)
    results = []
    for fold in folds:
        split = fold_split(examples, fold, args.k, args.fold_seed)
        fold_dir = out / f"fold_{fold:02d}"
        fold_dir.mkdir(exist_ok=True)
        result = train(config, split.train, [], log_path=fold_dir / "metrics.jsonl")
        save_checkpoint(fold_dir / "checkpoint.bin", result.best)
        preds = predict_examples(result.model, split.test)
        write_canonical(fold_dir / "predictions.jsonl", preds)
        rep = evaluate(preds, split.test)
        results.append({"fold": fold, "train": len(split.train), "test": len(split.test),
                        "ner_f1": rep.ner.f1, "re_f1": rep.re.f1})
        print(json.dumps(results[-1]))
    mean_re, _ = confidence_interval([r["re_f1"] for r in results])
    mean_ner, _ = confidence_interval([r["ner_f1"] for r in results])
    summary = {"folds": results, "mean_ner_f1": mean_ner, "mean_re_f1": mean_re}
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    print(json.dumps({"mean_ner_f1": mean_ner, "mean_re_f1": mean_re}))
    return EXIT_OK


COMMANDS = {"train": run_train, "predict": run_predict, "evaluate": run_evaluate,
            "inspect": run_inspect, "folds": run_folds}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"relmetric {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonFiniteError as exc:
        print(f"relmetric {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as exc:
        print(f"relmetric {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (RelMetricError, OSError) as exc:
        print(f"relmetric {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
