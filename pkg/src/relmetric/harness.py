"""
Training loop, strict-match scoring, partitioned analyses and checkpoints.
"""
from __future__ import annotations

import copy
import dataclasses
import hashlib
import io
import json
import logging
import math
import struct
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .codec import Entity, LabelSpace, RelationTriple
from .config import TrainConfig
from .corpus import SentenceExample
from .encoder import Vocabulary
from .errors import CheckpointError, ContractError, NonFiniteError, ShapeError
from .model import RelationMetricNetwork
from .optim import RMSProp
from .tensor import backward

logger = logging.getLogger(__name__)


def lr_schedule(epoch: int, base: float, halving: float = 10.0) -> float:
    """base * 2^(-epoch/halving): exactly halved every ``halving`` epochs."""
    if epoch < 0:
        raise ContractError(f"epoch must be non-negative, got {epoch}")
    return base * 2.0 ** (-epoch / halving)


# ----------------------------------------------------------------------
# Scoring
# ----------------------------------------------------------------------


@dataclass
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: "Counts") -> "Counts":
        return Counts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn,
                "precision": self.precision, "recall": self.recall, "f1": self.f1}


@dataclass
class ScoreReport:
    ner: Counts = field(default_factory=Counts)
    re: Counts = field(default_factory=Counts)
    ner_by_type: dict = field(default_factory=dict)
    re_by_type: dict = field(default_factory=dict)

    def __add__(self, other: "ScoreReport") -> "ScoreReport":
        def merge(a, b):
            return {k: a.get(k, Counts()) + b.get(k, Counts()) for k in sorted(set(a) | set(b))}

        return ScoreReport(self.ner + other.ner, self.re + other.re,
                           merge(self.ner_by_type, other.ner_by_type), merge(self.re_by_type, other.re_by_type))

    def as_dict(self) -> dict:
        return {"ner": self.ner.as_dict(), "re": self.re.as_dict(),
                "ner_by_type": {k: v.as_dict() for k, v in self.ner_by_type.items()},
                "re_by_type": {k: v.as_dict() for k, v in self.re_by_type.items()}}


def entity_key(ex: SentenceExample, e: Entity) -> tuple:
    return (e.type, *ex.char_span(e))


def relation_key(ex: SentenceExample, r: RelationTriple) -> tuple:
    return (entity_key(ex, r.subject), r.predicate, entity_key(ex, r.object))


def _tally(pred: Iterable[tuple], gold: Iterable[tuple], kind: Callable[[tuple], str],
           total: Counts, by_type: dict) -> None:
    pred_c, gold_c = Counter(pred), Counter(gold)
    hits = pred_c & gold_c
    for key, c in hits.items():
        by_type.setdefault(kind(key), Counts()).tp += c
    for key, c in (pred_c - hits).items():
        by_type.setdefault(kind(key), Counts()).fp += c
    for key, c in (gold_c - hits).items():
        by_type.setdefault(kind(key), Counts()).fn += c
    total.tp += sum(hits.values())
    total.fp += sum((pred_c - hits).values())
    total.fn += sum((gold_c - hits).values())


def _align(predictions: Sequence[SentenceExample], gold: Sequence[SentenceExample]):
    pred_by_id = {ex.id: ex for ex in predictions}
    gold_by_id = {ex.id: ex for ex in gold}
    if set(pred_by_id) != set(gold_by_id):
        missing = sorted(set(gold_by_id) ^ set(pred_by_id))[:5]
        raise ContractError(f"prediction and gold sentence ids differ (e.g. {missing})")
    return [(pred_by_id[k], gold_by_id[k]) for k in gold_by_id]


def evaluate(predictions: Sequence[SentenceExample], gold: Sequence[SentenceExample]) -> ScoreReport:
    """Micro-averaged strict-match scores.

    An entity counts only with identical character span and type; a
    relation only with both argument entities and the predicate identical.
    """
    report = ScoreReport()
    for p, g in _align(predictions, gold):
        _tally([entity_key(p, e) for e in p.entities], [entity_key(g, e) for e in g.entities],
               lambda k: k[0], report.ner, report.ner_by_type)
        _tally([relation_key(p, r) for r in p.relations], [relation_key(g, r) for r in g.relations],
               lambda k: k[1], report.re, report.re_by_type)
    report.ner_by_type = dict(sorted(report.ner_by_type.items()))
    report.re_by_type = dict(sorted(report.re_by_type.items()))
    return report


def entity_distance(ex: SentenceExample, r: RelationTriple) -> int:
    """Characters strictly between the earlier entity's end and the later one's start."""
    a, b = sorted((ex.char_span(r.subject), ex.char_span(r.object)))
    return max(0, b[0] - a[1])


@dataclass
class PartitionRow:
    label: str
    examples: int
    report: ScoreReport


def partition_analysis(predictions: Sequence[SentenceExample], gold: Sequence[SentenceExample],
                       scheme: str, bins: Optional[Sequence[float]] = None) -> list[PartitionRow]:
    """Score subsets of the evaluation data.

    ``length``: one row per threshold, keeping sentences with at most that
    many tokens. ``entity_distance``: relations binned by ``[lo, hi)``
    character distance (``bins`` are the edges). ``relation_type``: one row
    per predicate.
    """
    pairs = _align(predictions, gold)
    rows = []
    if scheme == "length":
        if not bins or list(bins) != sorted(bins):
            raise ContractError("length thresholds must be a non-empty ascending list")
        for limit in bins:
            keep = [(p, g) for p, g in pairs if len(g) <= limit]
            rep = evaluate([p for p, _ in keep], [g for _, g in keep])
            rows.append(PartitionRow(f"<={limit:g}", len(keep), rep))
    elif scheme == "entity_distance":
        edges = list(bins) if bins else [0, 20, 40, 60, 80, 100]
        if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
            raise ContractError(f"distance bin edges must be strictly ascending, got {edges}")
        for lo, hi in zip(edges, edges[1:]):
            rep = ScoreReport()
            n_gold = 0
            for p, g in pairs:
                pr = [relation_key(p, r) for r in p.relations if lo <= entity_distance(p, r) < hi]
                gr = [relation_key(g, r) for r in g.relations if lo <= entity_distance(g, r) < hi]
                n_gold += len(gr)
                _tally(pr, gr, lambda k: k[1], rep.re, rep.re_by_type)
            rows.append(PartitionRow(f"{lo:g}-{hi:g}", n_gold, rep))
    elif scheme == "relation_type":
        names = sorted({r.predicate for _, g in pairs for r in g.relations}
                       | {r.predicate for p, _ in pairs for r in p.relations})
        for name in names:
            rep = ScoreReport()
            n_gold = 0
            for p, g in pairs:
                gr = [relation_key(g, r) for r in g.relations if r.predicate == name]
                pr = [relation_key(p, r) for r in p.relations if r.predicate == name]
                n_gold += len(gr)
                _tally(pr, gr, lambda k: k[1], rep.re, rep.re_by_type)
            rows.append(PartitionRow(name, n_gold, rep))
    else:
        raise ContractError(f"unknown partition scheme {scheme!r}")
    return rows


def confidence_interval(values: Sequence[float], z: float = 1.96) -> tuple[float, float]:
    """(mean, half-width) with half-width z * sd / sqrt(runs), sd with ddof=1."""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return float(values.mean()), 0.0
    return float(values.mean()), float(z * values.std(ddof=1) / math.sqrt(values.size))


# ----------------------------------------------------------------------
# Prediction helpers
# ----------------------------------------------------------------------


def predict_examples(model: RelationMetricNetwork, examples: Sequence[SentenceExample]) -> list[SentenceExample]:
    out = []
    for ex in examples:
        entities, relations = model.predict(ex)
        out.append(dataclasses.replace(ex, entities=entities, relations=relations))
    return out


def evaluate_model(model: RelationMetricNetwork, examples: Sequence[SentenceExample]) -> ScoreReport:
    return evaluate(predict_examples(model, examples), examples)


# ----------------------------------------------------------------------
# Checkpoints
# ----------------------------------------------------------------------

MAGIC = b"RMNCKPT\x00"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    header: dict
    arrays: dict  # name -> ndarray; "param/", "opt/" prefixes

    @property
    def config(self) -> TrainConfig:
        return TrainConfig.from_dict(self.header["config"])

    @property
    def labels(self) -> LabelSpace:
        return LabelSpace.from_dict(self.header["labels"])

    @property
    def epoch(self) -> int:
        return self.header["epoch"]


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    """``MAGIC | u64 header length | JSON header | npz payload``.

    The header records the payload size and digest so truncation is caught
    before any state is handed out.
    """
    buf = io.BytesIO()
    np.savez(buf, **ckpt.arrays)
    payload = buf.getvalue()
    header = dict(ckpt.header)
    header["format_version"] = FORMAT_VERSION
    header["payload_bytes"] = len(payload)
    header["payload_sha256"] = hashlib.sha256(payload).hexdigest()
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = Path(f"{path}.tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(payload)
    tmp.replace(path)


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    if len(raw) < len(MAGIC) + 8:
        raise CheckpointError(f"{path}: truncated header")
    (hlen,) = struct.unpack("<Q", raw[len(MAGIC):len(MAGIC) + 8])
    start = len(MAGIC) + 8
    if len(raw) < start + hlen:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: field format_version is {header.get('format_version')}, "
                              f"expected {FORMAT_VERSION}")
    payload = raw[start + hlen:]
    if len(payload) != header["payload_bytes"]:
        raise CheckpointError(f"{path}: payload truncated ({len(payload)} of {header['payload_bytes']} bytes)")
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise CheckpointError(f"{path}: payload digest mismatch")
    with np.load(io.BytesIO(payload)) as npz:
        arrays = {k: npz[k] for k in npz.files}
    for name, shape in header["shapes"].items():
        stored = arrays.get(f"param/{name}")
        if stored is None or list(stored.shape) != shape:
            raise CheckpointError(f"{path}: shape table entry {name!r} does not match payload")
    return Checkpoint(header, arrays)


def model_from_checkpoint(ckpt: Checkpoint) -> RelationMetricNetwork:
    h = ckpt.header
    config = ckpt.config.replace(word_embeddings=None)
    model = RelationMetricNetwork(config, ckpt.labels, Vocabulary(h["vocab"]["words"]),
                                  Vocabulary(h["vocab"]["chars"]), Vocabulary(h["vocab"]["dep_tags"]),
                                  h["max_offset"], rng=np.random.default_rng(0))
    model.config = ckpt.config
    restore_model(model, ckpt)
    return model


def restore_model(model: RelationMetricNetwork, ckpt: Checkpoint) -> None:
    expected = model.shape_table()
    stored = ckpt.header["shapes"]
    for name in sorted(set(expected) | set(stored)):
        if expected.get(name) != stored.get(name):
            raise CheckpointError(f"shape table mismatch for {name!r}: checkpoint {stored.get(name)}, "
                                  f"model {expected.get(name)}")
    state = {k[len("param/"):]: v for k, v in ckpt.arrays.items() if k.startswith("param/")}
    model.load_state_arrays(state)


# ----------------------------------------------------------------------
# Training
# ----------------------------------------------------------------------


def _seed_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    init, train = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(init), np.random.default_rng(train)


class Trainer:
    """Owns the model's parameters during training: optimizer, RNG, epoch."""

    def __init__(self, model: RelationMetricNetwork, config: TrainConfig,
                 rng: Optional[np.random.Generator] = None):
        self.model = model
        self.config = config
        self.rng = rng if rng is not None else _seed_streams(config.seed)[1]
        self.optimizer = RMSProp(model.parameters(), lr=config.learning_rate,
                                 decay=config.rmsprop_decay, eps=config.rmsprop_eps)
        self.epoch = 0

    @classmethod
    def create(cls, config: TrainConfig, train: Sequence[SentenceExample],
               dev: Sequence[SentenceExample] = (), labels: Optional[LabelSpace] = None) -> "Trainer":
        init_rng, train_rng = _seed_streams(config.seed)
        model = RelationMetricNetwork.build(config, train, dev, labels=labels, rng=init_rng)
        return cls(model, config, train_rng)

    def batches(self, examples: Sequence[SentenceExample]) -> list[list[SentenceExample]]:
        order = self.rng.permutation(len(examples))
        size = self.config.batch_size
        if self.config.bucket_by_length and size > 1:
            order = sorted(order, key=lambda k: len(examples[k]))
            chunks = [order[k:k + size] for k in range(0, len(order), size)]
            chunks = [chunks[k] for k in self.rng.permutation(len(chunks))]
        else:
            chunks = [order[k:k + size] for k in range(0, len(order), size)]
        return [[examples[k] for k in chunk] for chunk in chunks]

    def train_step(self, batch: Sequence[SentenceExample], where: str = "") -> float:
        """One optimizer update on the batch-averaged loss."""
        self.optimizer.zero_grad()
        losses = [self.model.loss(ex, training=True, rng=self.rng) for ex in batch]
        total = losses[0]
        for extra in losses[1:]:
            total = total + extra
        total = total * (1.0 / len(losses))
        value = total.item()
        if not math.isfinite(value):
            raise NonFiniteError(f"non-finite loss {value} {where}".strip())
        backward(total)
        self.optimizer.step()
        return value

    def run_epoch(self, examples: Sequence[SentenceExample]) -> float:
        self.optimizer.lr = lr_schedule(self.epoch, self.config.learning_rate, self.config.lr_halving_epochs)
        losses = []
        for b, batch in enumerate(self.batches(examples)):
            losses.append(self.train_step(batch, where=f"at epoch {self.epoch}, batch {b}"))
        self.epoch += 1
        return float(np.mean(losses))

    # -- persistence -----------------------------------------------------
    def checkpoint(self) -> Checkpoint:
        m = self.model
        arrays = {f"param/{k}": v for k, v in m.state_arrays().items()}
        opt = self.optimizer.state_dict()
        arrays.update({f"opt/{k}": v for k, v in opt.pop("accumulators").items()})
        header = {
            "config": self.config.to_dict(),
            "labels": m.labels.to_dict(),
            "vocab": {"words": m.encoder.words.to_list(), "chars": m.encoder.chars.to_list(),
                      "dep_tags": m.dep.tags.to_list()},
            "max_offset": m.max_offset,
            "shapes": m.shape_table(),
            "optimizer": opt,
            "rng_state": self.rng.bit_generator.state,
            "epoch": self.epoch,
        }
        return Checkpoint(copy.deepcopy(header), {k: np.array(v) for k, v in arrays.items()})

    def restore(self, ckpt: Checkpoint) -> None:
        restore_model(self.model, ckpt)
        opt = dict(ckpt.header["optimizer"])
        opt["accumulators"] = {k[len("opt/"):]: v for k, v in ckpt.arrays.items() if k.startswith("opt/")}
        try:
            self.optimizer.load_state_dict(opt)
        except ShapeError as exc:
            raise CheckpointError(str(exc)) from exc
        self.rng.bit_generator.state = copy.deepcopy(ckpt.header["rng_state"])
        self.epoch = ckpt.header["epoch"]

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint) -> "Trainer":
        model = model_from_checkpoint(ckpt)
        trainer = cls(model, ckpt.config, np.random.default_rng(0))
        trainer.restore(ckpt)
        return trainer


@dataclass
class TrainResult:
    best: Checkpoint
    log: list
    trainer: Trainer

    @property
    def model(self) -> RelationMetricNetwork:
        return model_from_checkpoint(self.best)


TIMING_FIELDS = ("train_seconds", "eval_seconds")


def train(config: TrainConfig, train_set: Sequence[SentenceExample], dev_set: Sequence[SentenceExample] = (),
          log_path=None, labels: Optional[LabelSpace] = None,
          trainer: Optional[Trainer] = None) -> TrainResult:
    """Run ``config.epochs`` epochs and keep the best checkpoint.

    Selection is by dev relation F1 (earliest epoch wins ties); with no dev
    set, by lowest mean training loss.
    """
    if not train_set:
        raise ContractError("training set is empty")
    trainer = trainer or Trainer.create(config, train_set, dev_set, labels)
    log = []
    best, best_score = None, None
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        while trainer.epoch < config.epochs:
            epoch = trainer.epoch
            t0 = time.perf_counter()
            loss = trainer.run_epoch(train_set)
            t1 = time.perf_counter()
            record = {"epoch": epoch, "lr": trainer.optimizer.lr, "train_loss": loss}
            if dev_set:
                rep = evaluate_model(trainer.model, dev_set)
                record.update(dev_ner_f1=rep.ner.f1, dev_re_f1=rep.re.f1)
                score = rep.re.f1
            else:
                record.update(dev_ner_f1=None, dev_re_f1=None)
                score = -loss
            record.update(train_seconds=t1 - t0, eval_seconds=time.perf_counter() - t1)
            log.append(record)
            if log_fh:
                log_fh.write(json.dumps(record) + "\n")
                log_fh.flush()
            logger.info("epoch %d lr %.6g loss %.4f dev RE-F1 %s", epoch, record["lr"], loss, record["dev_re_f1"])
            if best_score is None or score > best_score:
                best, best_score = trainer.checkpoint(), score
    finally:
        if log_fh:
            log_fh.close()
    return TrainResult(best, log, trainer)


def run_seeds(config: TrainConfig, train_set, dev_set, test_set, seeds: Sequence[int]) -> dict:
    """Independent runs per seed; test RE-F1 mean with a normal-approximation interval."""
    runs = []
    for seed in seeds:
        result = train(config.replace(seed=seed), train_set, dev_set)
        rep = evaluate_model(result.model, test_set)
        runs.append({"seed": seed, "ner_f1": rep.ner.f1, "re_f1": rep.re.f1})
    mean, half = confidence_interval([r["re_f1"] for r in runs])
    return {"runs": runs, "re_f1_mean": mean, "re_f1_ci95": half}
