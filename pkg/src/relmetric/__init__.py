"""Joint entity and relation extraction by table filling with a relation-metric network."""

from .codec import (Entity, LabelSpace, RelationTriple, TagTable, build_label_space, decode_entities,
                    decode_relations, decode_table, encode_table)
from .config import TrainConfig, load_config
from .corpus import SentenceExample, Token, attach_parse, parse_corpus, tokenize
from .harness import (Checkpoint, ScoreReport, Trainer, evaluate, load_checkpoint, lr_schedule,
                      partition_analysis, save_checkpoint, train)
from .model import RelationMetricNetwork

__version__ = "0.1.0"

__all__ = [
    "Checkpoint", "Entity", "LabelSpace", "RelationMetricNetwork", "RelationTriple", "ScoreReport",
    "SentenceExample", "TagTable", "Token", "TrainConfig", "Trainer", "attach_parse", "build_label_space",
    "decode_entities", "decode_relations", "decode_table", "encode_table", "evaluate", "load_checkpoint",
    "load_config", "lr_schedule", "parse_corpus", "partition_analysis", "save_checkpoint", "tokenize", "train",
]
