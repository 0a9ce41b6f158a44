"""
Corpus ingestion: tokenization, annotation alignment, dependency sidecars.

Three input layouts are understood:

``canonical``
    JSON lines, one sentence per record (see ``docs/formats.md``).
``conll04``
    The tab-separated layout of the original CoNLL04 release: one token
    line per row (multi-word chunks joined by ``/``), a blank line, the
    relation rows ``arg1 arg2 Relation``, and a blank line.
``ade``
    The pipe-separated ``DRUG-AE.rel`` layout of the ADE corpus, one
    drug/effect pair per line with sentences repeated for every pair.

Both public layouts are converted into canonical records before the
shared alignment path runs.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import re
import unicodedata
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

from .codec import Entity, RelationTriple
from .errors import AlignmentError, IngestionError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Token:
    text: str
    start: int
    end: int  # exclusive character offset


@dataclass
class SentenceExample:
    id: str
    text: str
    tokens: list[Token]
    entities: list[Entity] = field(default_factory=list)
    relations: list[RelationTriple] = field(default_factory=list)
    dep_edges: list[tuple[int, int, str]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def words(self) -> list[str]:
        return [t.text for t in self.tokens]

    def char_span(self, entity: Entity) -> tuple[int, int]:
        return self.tokens[entity.start].start, self.tokens[entity.end].end

    def surface(self, entity: Entity) -> str:
        start, end = self.char_span(entity)
        return self.text[start:end]

    def to_record(self) -> dict:
        index = {e: k for k, e in enumerate(self.entities)}
        record = {
            "id": self.id,
            "text": self.text,
            "tokens": [[t.text, t.start, t.end] for t in self.tokens],
            "entities": [
                {"type": e.type, "start": self.char_span(e)[0], "end": self.char_span(e)[1],
                 "token_start": e.start, "token_end": e.end, "text": self.surface(e)}
                for e in self.entities
            ],
            "relations": [
                {"subject": index[r.subject], "object": index[r.object], "predicate": r.predicate}
                for r in self.relations
            ],
        }
        if self.dep_edges:
            record["dep_edges"] = [list(edge) for edge in self.dep_edges]
        return record


# ----------------------------------------------------------------------
# Tokenization
# ----------------------------------------------------------------------


def is_punct(ch: str) -> bool:
    return unicodedata.category(ch)[0] in "PS"


def tokenize(text: str) -> list[Token]:
    """Whitespace split, then peel punctuation off both ends of each chunk.

    Each peeled punctuation character becomes its own token; punctuation
    inside a chunk (``1,600``, ``23-foot``, ``U.S``) stays attached.
    """
    if not text or not text.strip():
        raise IngestionError("cannot tokenize empty text")
    tokens = []
    for m in re.finditer(r"\S+", text):
        chunk, base = m.group(), m.start()
        lo, hi = 0, len(chunk)
        while lo < hi and is_punct(chunk[lo]):
            lo += 1
        while hi > lo and is_punct(chunk[hi - 1]):
            hi -= 1
        for k in range(lo):
            tokens.append(Token(chunk[k], base + k, base + k + 1))
        if hi > lo:
            tokens.append(Token(chunk[lo:hi], base + lo, base + hi))
        for k in range(hi, len(chunk)):
            tokens.append(Token(chunk[k], base + k, base + k + 1))
    return tokens


def detokenize(text: str, tokens: Sequence[Token]) -> str:
    """Rebuild ``text`` from token surfaces and the gaps recorded between them."""
    out, pos = [], 0
    for t in tokens:
        out.append(text[pos:t.start])
        out.append(t.text)
        pos = t.end
    out.append(text[pos:])
    return "".join(out)


# ----------------------------------------------------------------------
# Canonical records
# ----------------------------------------------------------------------


def _char_to_token_span(tokens: Sequence[Token], start: int, end: int) -> tuple[int, int, bool]:
    covering = [k for k, t in enumerate(tokens) if t.start < end and t.end > start]
    if not covering:
        raise AlignmentError(f"character span [{start}, {end}) covers no token")
    first, last = covering[0], covering[-1]
    exact = tokens[first].start == start and tokens[last].end == end
    return first, last, exact


def example_from_record(record: dict, on_misaligned: str = "repair") -> SentenceExample:
    """Build a :class:`SentenceExample` from one canonical record.

    ``on_misaligned`` controls entities whose character span does not fall
    on token boundaries: ``repair`` widens to the covering tokens, ``skip``
    drops the entity (and its relations), ``abort`` raises.
    """
    sid = str(record.get("id", ""))
    text = record.get("text")
    if not isinstance(text, str):
        raise IngestionError(f"record {sid!r}: missing text")
    if record.get("tokens"):
        tokens = []
        for tok in record["tokens"]:
            if isinstance(tok, str):
                raise IngestionError(f"record {sid!r}: tokens must carry character offsets")
            surface, start, end = tok
            if text[start:end] != surface:
                raise IngestionError(f"record {sid!r}: token {surface!r} does not match text at [{start}, {end})")
            tokens.append(Token(surface, int(start), int(end)))
        for a, b in zip(tokens, tokens[1:]):
            if b.start < a.end:
                raise IngestionError(f"record {sid!r}: tokens overlap or are out of order")
    else:
        tokens = tokenize(text)

    entities: list[Optional[Entity]] = []
    for k, ent in enumerate(record.get("entities", [])):
        start, end = int(ent["start"]), int(ent["end"])
        if not 0 <= start < end <= len(text):
            raise IngestionError(f"record {sid!r}: entity {k} has invalid span [{start}, {end})")
        first, last, exact = _char_to_token_span(tokens, start, end)
        if not exact:
            msg = f"record {sid!r}: entity {k} {text[start:end]!r} not aligned to token boundaries"
            if on_misaligned == "abort":
                raise AlignmentError(msg)
            if on_misaligned == "skip":
                logger.warning("%s; skipped", msg)
                entities.append(None)
                continue
            logger.warning("%s; widened to %r", msg, text[tokens[first].start:tokens[last].end])
        entities.append(Entity(ent["type"], first, last))

    kept = [e for e in entities if e is not None]
    ordered = sorted(set(kept), key=lambda e: (e.start, e.end))
    for a, b in zip(ordered, ordered[1:]):
        if a.overlaps(b):
            raise IngestionError(f"record {sid!r}: overlapping entities {a} and {b}")

    relations = []
    for rel in record.get("relations", []):
        si, oi = rel["subject"], rel["object"]
        if not (0 <= si < len(entities) and 0 <= oi < len(entities)):
            raise IngestionError(f"record {sid!r}: relation {rel.get('predicate')!r} points to a missing entity index")
        subj, obj = entities[si], entities[oi]
        if subj is None or obj is None:
            continue
        relations.append(RelationTriple(subj, rel["predicate"], obj))

    edges = [(int(i), int(j), str(tag)) for i, j, tag in record.get("dep_edges", [])]
    for i, j, _ in edges:
        if not (0 <= i < len(tokens) and 0 <= j < len(tokens)):
            raise IngestionError(f"record {sid!r}: dependency edge ({i}, {j}) out of range")
    return SentenceExample(sid, text, tokens, list(dict.fromkeys(kept)), list(dict.fromkeys(relations)), edges)


def _records_to_examples(records: Iterable[dict], on_error: str, on_misaligned: str) -> list[SentenceExample]:
    out = []
    for record in records:
        try:
            out.append(example_from_record(record, on_misaligned=on_misaligned))
        except IngestionError as exc:
            if on_error == "abort":
                raise
            logger.warning("skipping record: %s", exc)
    return out


def read_canonical(path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestionError(f"{path}:{lineno}: {exc}") from exc
            record.setdefault("id", str(lineno))
            yield record


def write_canonical(path, examples: Iterable[SentenceExample]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_record()) + "\n")


# ----------------------------------------------------------------------
# Public corpus adapters
# ----------------------------------------------------------------------

CONLL04_ENTITY_NAMES = {"Peop": "Person", "Loc": "Location", "Org": "Organization", "Other": "Other"}
CONLL04_SPECIAL_WORDS = {"COMMA": ",", "-LRB-": "(", "-RRB-": ")", "-LCB-": "{", "-RCB-": "}",
                         "-LSB-": "[", "-RSB-": "]"}


def conll04_records(path) -> Iterator[dict]:
    """Convert the CoNLL04 ``.corp`` layout to canonical records.

    Each block is token rows (``sent  label  idx  ?  POS  word  ...``), a
    blank line, relation rows (``arg1  arg2  Rel``), and a blank line.
    Chunk words joined with ``/`` expand to several tokens.
    """
    lines = Path(path).read_text(encoding="utf-8").split("\n")
    k = 0
    while k < len(lines):
        while k < len(lines) and not lines[k].strip():
            k += 1
        if k >= len(lines):
            break
        rows = []
        while k < len(lines) and lines[k].strip():
            rows.append(lines[k].split("\t") if "\t" in lines[k] else lines[k].split())
            k += 1
        k += 1
        rel_rows = []
        while k < len(lines) and lines[k].strip():
            rel_rows.append(lines[k].split())
            k += 1
        sid = rows[0][0]
        words, tokens, entities, chunk_entity = [], [], [], {}
        pos = 0
        for row in rows:
            if len(row) < 6:
                raise IngestionError(f"{path}: sentence {sid}: malformed token row {row}")
            label, idx = row[1], int(row[2])
            parts = [CONLL04_SPECIAL_WORDS.get(w, w) for w in row[5].split("/")]
            chunk_start = None
            for w in parts:
                if tokens:
                    pos += 1
                if chunk_start is None:
                    chunk_start = pos
                tokens.append([w, pos, pos + len(w)])
                words.append(w)
                pos += len(w)
            if label != "O":
                chunk_entity[idx] = len(entities)
                entities.append({"type": CONLL04_ENTITY_NAMES.get(label, label), "start": chunk_start, "end": pos})
        relations = []
        for rr in rel_rows:
            a, b, pred = int(rr[0]), int(rr[1]), rr[2]
            if a not in chunk_entity or b not in chunk_entity:
                raise IngestionError(f"{path}: sentence {sid}: relation {pred} on a non-entity chunk")
            relations.append({"subject": chunk_entity[a], "object": chunk_entity[b], "predicate": pred})
        yield {"id": sid, "text": " ".join(words), "tokens": tokens,
               "entities": entities, "relations": relations}


def ade_records(path) -> Iterator[dict]:
    """Collapse the ADE ``DRUG-AE.rel`` pair list into unique sentences.

    Fields: ``pmid|sentence|effect|eff_begin|eff_end|drug|drug_begin|drug_end``.
    The offsets are document-level, so mentions are located in the
    sentence by string search. Pairs whose drug and effect overlap (nested
    annotations) are dropped, as are pairs that would overlap an entity
    already kept for the sentence.
    """
    grouped: "OrderedDict[tuple[str, str], list[tuple[str, str]]]" = OrderedDict()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("|")
            if len(parts) < 8:
                raise IngestionError(f"{path}:{lineno}: expected 8 pipe-separated fields, got {len(parts)}")
            pmid, sentence, effect, drug = parts[0], parts[1], parts[2], parts[5]
            grouped.setdefault((pmid, sentence), []).append((drug, effect))
    dropped = 0
    for k, ((pmid, sentence), pairs) in enumerate(grouped.items()):
        spans: dict[tuple[int, int], tuple[str, int]] = {}
        entities, relations = [], []

        def register(etype, span):
            """Entity index for ``span``, or None when it clashes with a kept one."""
            if span in spans:
                kept_type, idx = spans[span]
                return idx if kept_type == etype else None
            if any(s < span[1] and span[0] < e for (s, e) in spans):
                return None
            spans[span] = (etype, len(entities))
            entities.append({"type": etype, "start": span[0], "end": span[1]})
            return spans[span][1]

        for drug, effect in pairs:
            at_d, at_e = sentence.find(drug), sentence.find(effect)
            if at_d < 0 or at_e < 0:
                raise IngestionError(f"{path}: PMID {pmid}: mention not found in sentence")
            ds, es = (at_d, at_d + len(drug)), (at_e, at_e + len(effect))
            if ds[0] < es[1] and es[0] < ds[1]:
                dropped += 1
                continue
            clash = [sp for sp in (ds, es) if sp not in spans and any(s < sp[1] and sp[0] < e for (s, e) in spans)]
            if clash:
                dropped += 1
                continue
            subj, obj = register("Drug", ds), register("Disease", es)
            if subj is None or obj is None:
                dropped += 1
                continue
            rel = {"subject": subj, "object": obj, "predicate": "Adverse_Effect"}
            if rel not in relations:
                relations.append(rel)
        yield {"id": f"{pmid}-{k}", "text": sentence, "entities": entities, "relations": relations}
    if dropped:
        logger.info("ADE: dropped %d drug/effect pairs with nested or conflicting spans", dropped)


def parse_corpus(path, format: str = "canonical", on_error: str = "abort",
                 on_misaligned: str = "repair") -> list[SentenceExample]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"corpus file not found: {path}")
    readers = {"canonical": read_canonical, "conll04": conll04_records, "ade": ade_records}
    if format not in readers:
        raise IngestionError(f"unknown corpus format {format!r}; expected one of {sorted(readers)}")
    return _records_to_examples(readers[format](path), on_error, on_misaligned)


# ----------------------------------------------------------------------
# Dependency sidecars
# ----------------------------------------------------------------------


@dataclass
class ParseRecord:
    id: str
    n_tokens: int
    edges: list[tuple[int, int, str]]


def read_parse_sidecar(path) -> dict[str, ParseRecord]:
    """Blocks separated by blank lines. Each block starts with ``# id = X``
    and ``# tokens = N`` headers followed by ``head dependent tag`` rows
    (0-based; a negative head marks the root and carries no edge)."""
    out: dict[str, ParseRecord] = {}
    text = Path(path).read_text(encoding="utf-8")
    for block_no, block in enumerate(re.split(r"\n\s*\n", text.strip())):
        if not block.strip():
            continue
        sid, n_tokens, edges = None, None, []
        for line in block.splitlines():
            line = line.strip()
            if line.startswith("#"):
                key, _, value = line[1:].partition("=")
                key, value = key.strip(), value.strip()
                if key == "id":
                    sid = value
                elif key == "tokens":
                    n_tokens = int(value)
                continue
            fields = line.split()
            if len(fields) != 3:
                raise IngestionError(f"{path}: block {block_no}: malformed row {line!r}")
            head, dep = int(fields[0]), int(fields[1])
            if head >= 0:
                edges.append((head, dep, fields[2]))
        if sid is None or n_tokens is None:
            raise IngestionError(f"{path}: block {block_no} lacks '# id' or '# tokens' header")
        out[sid] = ParseRecord(sid, n_tokens, edges)
    return out


def attach_parse(example: SentenceExample, parses: dict[str, ParseRecord]) -> SentenceExample:
    record = parses.get(example.id)
    if record is None:
        logger.warning("no dependency parse for sentence %s; using the null parse", example.id)
        return dataclasses.replace(example, dep_edges=[])
    if record.n_tokens != len(example.tokens):
        raise AlignmentError(f"sentence {example.id}: parse has {record.n_tokens} tokens, "
                             f"sentence has {len(example.tokens)}")
    for i, j, _ in record.edges:
        if not (0 <= i < record.n_tokens and 0 <= j < record.n_tokens):
            raise AlignmentError(f"sentence {example.id}: edge ({i}, {j}) out of range")
    return dataclasses.replace(example, dep_edges=list(record.edges))


def write_parse_sidecar(path, examples: Iterable[SentenceExample]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(f"# id = {ex.id}\n# tokens = {len(ex.tokens)}\n")
            for i, j, tag in ex.dep_edges:
                fh.write(f"{i} {j} {tag}\n")
            fh.write("\n")


# ----------------------------------------------------------------------
# Splits
# ----------------------------------------------------------------------


@dataclass
class CorpusSplit:
    train: list[SentenceExample]
    dev: list[SentenceExample]
    test: list[SentenceExample]


def fold_of(sentence_id: str, k: int = 10, seed: int = 0) -> int:
    digest = hashlib.sha256(f"{seed}:{sentence_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big") % k


def kfold(examples: Sequence[SentenceExample], k: int = 10, seed: int = 0) -> list[list[SentenceExample]]:
    folds: list[list[SentenceExample]] = [[] for _ in range(k)]
    for ex in examples:
        folds[fold_of(ex.id, k, seed)].append(ex)
    return folds


def fold_split(examples: Sequence[SentenceExample], fold: int, k: int = 10, seed: int = 0) -> CorpusSplit:
    """Fold ``fold`` is the test set; everything else trains. No dev set."""
    train = [ex for ex in examples if fold_of(ex.id, k, seed) != fold]
    test = [ex for ex in examples if fold_of(ex.id, k, seed) == fold]
    return CorpusSplit(train, [], test)
