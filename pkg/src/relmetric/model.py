"""The full relation-metric network: sentence in, tag-table distribution out."""
from __future__ import annotations

import logging
from typing import Optional, Sequence

import numpy as np

from .codec import Entity, LabelSpace, RelationTriple, decode_table, encode_table
from .config import TrainConfig
from .corpus import SentenceExample
from .encoder import ContextEncoder, Vocabulary, read_embedding_file
from .errors import ShapeError
from .network import (DependencyParams, MetricBank, PoolStack, PositionParams, TableOutput,
                      dependency_table, forward, metric_tables, position_table, table_loss_from_logits)
from .tensor import BatchNorm, Tensor

logger = logging.getLogger(__name__)


class RelationMetricNetwork:
    def __init__(self, config: TrainConfig, labels: LabelSpace, words: Vocabulary, chars: Vocabulary,
                 dep_tags: Vocabulary, max_offset: int, rng: Optional[np.random.Generator] = None):
        rng = rng if rng is not None else np.random.default_rng(config.seed)
        dtype = np.dtype(config.dtype).type
        self.config = config
        self.labels = labels
        self.max_offset = max_offset
        self.encoder = ContextEncoder(
            words, chars, word_dim=config.word_dim, char_dim=config.char_dim,
            char_features=config.char_features, context_dim=config.context_dim,
            dropout=config.dropout, word_grad_scale=config.word_grad_scale, rng=rng,
            embeddings_path=config.word_embeddings, dtype=dtype)
        self.metrics = MetricBank(config.channels, config.context_dim, rng, dtype, config.batch_norm)
        self.dep = DependencyParams(dep_tags, config.dep_dim, rng, dtype)
        self.pos = PositionParams(max_offset, config.position_dim, rng, dtype)
        self.stack = PoolStack(config.layers, config.channels, config.channels, config.dep_dim,
                               config.position_dim, len(labels), rng, window=config.window,
                               dtype=dtype, batch_norm=config.batch_norm)

    @classmethod
    def build(cls, config: TrainConfig, train: Sequence[SentenceExample],
              dev: Sequence[SentenceExample] = (), labels: Optional[LabelSpace] = None,
              rng: Optional[np.random.Generator] = None) -> "RelationMetricNetwork":
        """Derive vocabularies and the position range from the training data.

        Dev words join the word vocabulary only when a pretrained vector
        exists for them; otherwise they would stay at their random init.
        """
        if labels is None:
            labels = infer_label_space(train)
        words = Vocabulary(w for ex in train for w in ex.words)
        if config.word_embeddings and dev:
            pretrained = read_embedding_file(config.word_embeddings, config.word_dim)
            for ex in dev:
                for w in ex.words:
                    if w in pretrained or w.lower() in pretrained:
                        words.add(w)
        chars = Vocabulary(c for ex in train for w in ex.words for c in w)
        dep_tags = Vocabulary(tag for ex in train for _, _, tag in ex.dep_edges)
        n_max = max(len(ex) for ex in train)
        logger.info("position offsets span +/-%d; rows for +/-%d are never seen in training", n_max, n_max)
        return cls(config, labels, words, chars, dep_tags, n_max, rng)

    # -- parameters ------------------------------------------------------
    def parameters(self) -> dict[str, Tensor]:
        params = {}
        params.update(self.encoder.parameters())
        params.update(self.metrics.parameters())
        params.update(self.dep.parameters())
        params.update(self.pos.parameters())
        params.update(self.stack.parameters())
        return params

    def batch_norms(self) -> dict[str, BatchNorm]:
        norms = {}
        if self.metrics.norm is not None:
            norms["metric.bn"] = self.metrics.norm
        for k, bn in enumerate(self.stack.norms):
            norms[f"pool.{k}.bn"] = bn
        return norms

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Parameters and running statistics, keyed by stable names."""
        state = {name: p.data.copy() for name, p in self.parameters().items()}
        for name, bn in self.batch_norms().items():
            if bn.running_mean is not None:
                state[f"{name}.running_mean"] = bn.running_mean.copy()
                state[f"{name}.running_var"] = bn.running_var.copy()
        return state

    def load_state_arrays(self, state: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        for name, p in params.items():
            if name not in state:
                raise ShapeError(f"state lacks parameter {name!r}")
            if state[name].shape != p.data.shape:
                raise ShapeError(f"parameter {name!r}: stored shape {state[name].shape}, model shape {p.data.shape}")
            p.data[...] = state[name]
        for name, bn in self.batch_norms().items():
            if f"{name}.running_mean" in state:
                bn.running_mean = np.array(state[f"{name}.running_mean"])
                bn.running_var = np.array(state[f"{name}.running_var"])
            else:
                bn.running_mean = bn.running_var = None

    def shape_table(self) -> dict[str, list[int]]:
        return {name: list(p.shape) for name, p in self.parameters().items()}

    # -- computation -----------------------------------------------------
    def run(self, words: Sequence[str], dep_edges=(), training: bool = False,
            rng: Optional[np.random.Generator] = None) -> TableOutput:
        n = len(words)
        h = self.encoder.encode(words, training=training, rng=rng)
        g = metric_tables(h, self.metrics)
        if self.metrics.norm is not None:
            g = self.metrics.norm(g, training)
        d = dependency_table(dep_edges, n, self.dep)
        p = position_table(n, self.pos)
        return forward(g, d, p, self.stack, training=training)

    def target(self, example: SentenceExample) -> np.ndarray:
        table = encode_table(example.entities, example.relations, len(example), self.labels)
        return table.one_hot(len(self.labels), dtype=np.dtype(self.config.dtype))

    def loss(self, example: SentenceExample, training: bool = True,
             rng: Optional[np.random.Generator] = None) -> Tensor:
        out = self.run(example.words, example.dep_edges, training=training, rng=rng)
        return table_loss_from_logits(out.logits, self.target(example))

    def predict_table(self, example: SentenceExample) -> np.ndarray:
        return self.run(example.words, example.dep_edges, training=False).q.data

    def predict(self, example: SentenceExample) -> tuple[list[Entity], list[RelationTriple]]:
        return decode_table(self.predict_table(example), self.labels)


def infer_label_space(examples: Sequence[SentenceExample]) -> LabelSpace:
    """Entity and relation types seen in ``examples``, sorted by name."""
    ents = sorted({e.type for ex in examples for e in ex.entities})
    rels = sorted({r.predicate for ex in examples for r in ex.relations})
    return LabelSpace(ents, rels)
