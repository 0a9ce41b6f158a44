"""
Mapping between (entities, relations) annotations and the n x n tag table.

Entity tags live on the diagonal in BILOU form; a directed relation
``(subject, predicate, object)`` fills every cell in the rectangle
``subject rows x object columns`` with the predicate's tag. Every other
cell is ``O``.

Tag ids are canonical: 0 is ``O``, then ``B-, I-, L-, U-`` for each
entity type in declaration order, then one tag per relation type.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractError, EncodingError, ValidationError

logger = logging.getLogger(__name__)

BILOU = ("B", "I", "L", "U")


@dataclass(frozen=True, order=True)
class Entity:
    type: str
    start: int
    end: int  # inclusive

    def __post_init__(self):
        if self.start < 0 or self.end < self.start:
            raise ValidationError(f"invalid entity span ({self.start}, {self.end})")

    @property
    def tokens(self) -> range:
        return range(self.start, self.end + 1)

    def overlaps(self, other: "Entity") -> bool:
        return self.start <= other.end and other.start <= self.end


@dataclass(frozen=True, order=True)
class RelationTriple:
    subject: Entity
    predicate: str
    object: Entity


class LabelSpace:
    """The unified tag inventory; ``len(space) == 4*n_ent + n_rel + 1``."""

    def __init__(self, entity_types: Sequence[str] = (), relation_types: Sequence[str] = ()):
        entity_types, relation_types = list(entity_types), list(relation_types)
        for kind, names in (("entity", entity_types), ("relation", relation_types)):
            if len(set(names)) != len(names):
                raise ValidationError(f"duplicate {kind} type names: {names}")
            if any(not name for name in names):
                raise ValidationError(f"empty {kind} type name in {names}")
        self.entity_types = entity_types
        self.relation_types = relation_types
        self.tags = ["O"]
        for et in entity_types:
            self.tags.extend(f"{p}-{et}" for p in BILOU)
        if set(relation_types) & set(self.tags):
            raise ValidationError("relation type names collide with entity tags")
        self.tags.extend(relation_types)
        self.index = {tag: i for i, tag in enumerate(self.tags)}
        self.first_relation = 1 + 4 * len(entity_types)

    def __len__(self) -> int:
        return len(self.tags)

    def __eq__(self, other) -> bool:
        return (isinstance(other, LabelSpace) and self.entity_types == other.entity_types
                and self.relation_types == other.relation_types)

    def __repr__(self) -> str:
        return f"LabelSpace(entities={self.entity_types}, relations={self.relation_types})"

    def entity_tag(self, prefix: str, etype: str) -> int:
        return self.index[f"{prefix}-{etype}"]

    def relation_tag(self, predicate: str) -> int:
        return self.index[predicate]

    def is_relation(self, tag: int) -> bool:
        return tag >= self.first_relation

    def is_entity(self, tag: int) -> bool:
        return 0 < tag < self.first_relation

    def split_entity_tag(self, tag: int) -> tuple[str, str]:
        """Return (BILOU prefix, entity type) for an entity tag id."""
        k = tag - 1
        return BILOU[k % 4], self.entity_types[k // 4]

    def to_dict(self) -> dict:
        return {"entity_types": list(self.entity_types), "relation_types": list(self.relation_types)}

    @classmethod
    def from_dict(cls, d: dict) -> "LabelSpace":
        return cls(d["entity_types"], d["relation_types"])


def build_label_space(entity_types: Iterable[str], relation_types: Iterable[str]) -> LabelSpace:
    return LabelSpace(list(entity_types), list(relation_types))


@dataclass
class TagTable:
    n: int
    cells: np.ndarray  # (n, n) int tag ids

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self.cells).copy()

    def one_hot(self, size: int, dtype=np.float64) -> np.ndarray:
        y = np.zeros((self.n, self.n, size), dtype=dtype)
        np.put_along_axis(y, self.cells[..., None], 1.0, axis=2)
        return y


def encode_table(entities: Sequence[Entity], relations: Sequence[RelationTriple], n: int,
                 labels: LabelSpace) -> TagTable:
    cells = np.zeros((n, n), dtype=np.int64)
    known = set(entities)
    ordered = sorted(known, key=lambda e: (e.start, e.end))
    for a, b in zip(ordered, ordered[1:]):
        if a.overlaps(b):
            raise EncodingError(f"overlapping entity spans {a} and {b}")
    for e in ordered:
        if e.end >= n:
            raise EncodingError(f"entity {e} exceeds sentence length {n}")
        if e.type not in labels.entity_types:
            raise EncodingError(f"unknown entity type {e.type!r}")
        if e.start == e.end:
            cells[e.start, e.start] = labels.entity_tag("U", e.type)
        else:
            cells[e.start, e.start] = labels.entity_tag("B", e.type)
            for i in range(e.start + 1, e.end):
                cells[i, i] = labels.entity_tag("I", e.type)
            cells[e.end, e.end] = labels.entity_tag("L", e.type)
    written: dict[tuple[Entity, Entity], str] = {}
    for rel in relations:
        if rel.subject not in known or rel.object not in known:
            raise EncodingError(f"relation {rel.predicate!r} references an entity outside the annotation")
        if rel.subject == rel.object:
            raise EncodingError(f"self-relation on {rel.subject}")
        if rel.predicate not in labels.relation_types:
            raise EncodingError(f"unknown relation type {rel.predicate!r}")
        key = (rel.subject, rel.object)
        if key in written and written[key] != rel.predicate:
            logger.warning("relation %s overwrites %s on the same entity pair", rel.predicate, written[key])
        written[key] = rel.predicate
        cells[rel.subject.start:rel.subject.end + 1, rel.object.start:rel.object.end + 1] = \
            labels.relation_tag(rel.predicate)
    return TagTable(n, cells)


def decode_entities(diagonal_tags: Sequence[int], labels: LabelSpace) -> list[Entity]:
    """Strict ``B I* L | U`` automaton; malformed fragments are dropped."""
    entities = []
    open_type, open_start = None, -1
    for pos, tag in enumerate(int(t) for t in diagonal_tags):
        prefix, etype = labels.split_entity_tag(tag) if labels.is_entity(tag) else (None, None)
        if open_type is not None:
            if prefix == "I" and etype == open_type:
                continue
            if prefix == "L" and etype == open_type:
                entities.append(Entity(open_type, open_start, pos))
                open_type = None
                continue
            open_type = None
        if prefix == "U":
            entities.append(Entity(etype, pos, pos))
        elif prefix == "B":
            open_type, open_start = etype, pos
    return entities


def block_scores(q: np.ndarray, a: Entity, b: Entity) -> np.ndarray:
    return q[a.start:a.end + 1, b.start:b.end + 1].sum(axis=(0, 1))


def decode_relations(q: np.ndarray, entities: Sequence[Entity], labels: LabelSpace) -> list[RelationTriple]:
    """Block-argmax over every ordered pair of distinct entities.

    ``np.argmax`` returns the first maximizer, so ties go to the lowest tag id.
    """
    n = q.shape[0]
    if q.ndim != 3 or q.shape[1] != n or q.shape[2] != len(labels):
        raise ContractError(f"probability table shape {q.shape} does not match |Z|={len(labels)}")
    for e in entities:
        if e.end >= n:
            raise ContractError(f"entity {e} outside a table of size {n}")
    triples = []
    for a in entities:
        for b in entities:
            if a == b:
                continue
            tag = int(np.argmax(block_scores(q, a, b)))
            if labels.is_relation(tag):
                triples.append(RelationTriple(a, labels.tags[tag], b))
    return triples


def decode_table(q: np.ndarray, labels: LabelSpace) -> tuple[list[Entity], list[RelationTriple]]:
    """Entities from the argmax diagonal, then relations from the blocks."""
    diag = np.argmax(np.einsum("iik->ik", q), axis=1)
    entities = decode_entities(diag, labels)
    return entities, decode_relations(q, entities, labels)


def decode_tag_table(table: TagTable, labels: LabelSpace) -> tuple[list[Entity], list[RelationTriple]]:
    """Decode a hard tag table by treating it as a one-hot probability table."""
    return decode_table(table.one_hot(len(labels)), labels)
