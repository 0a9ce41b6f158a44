"""Small templated corpora with two entity and two relation types."""
from __future__ import annotations

from typing import Optional

import numpy as np

from .corpus import SentenceExample, example_from_record

FIRST = ["Anna", "Boris", "Clara", "Dmitri", "Elena", "Farid", "Greta", "Hiro", "Ines", "Jonas"]
LAST = ["Okafor", "Lindqvist", "Moreau", "Tanaka", "Varga", "Silva", "Novak", "Keller"]
PLACES = ["Lyon", "Osaka", "Quito", "Tartu", "Bergen", "New Delhi", "Cape Town", "San Jose", "Porto", "Graz"]

# (template, relations) where slots are {P0}, {P1}, {L0}, {L1} and relations
# reference slot names as (subject, predicate, object)
TEMPLATES = [
    ("{P0} lives in {L0} .", [("P0", "Lives_In", "L0")]),
    ("{P0} was born in {L0} .", [("P0", "Born_In", "L0")]),
    ("{P0} , born in {L0} , now lives in {L1} .", [("P0", "Born_In", "L0"), ("P0", "Lives_In", "L1")]),
    ("In {L0} , {P0} met {P1} .", []),
    ("{P0} and {P1} live in {L0} .", [("P0", "Lives_In", "L0"), ("P1", "Lives_In", "L0")]),
    ("{L0} is where {P0} was born .", [("P0", "Born_In", "L0")]),
    ("{P0} visited {L0} but lives in {L1} .", [("P0", "Lives_In", "L1")]),
]

ENTITY_TYPES = ["Person", "Place"]
RELATION_TYPES = ["Born_In", "Lives_In"]


def _fill(template: str, slots: dict[str, str]) -> tuple[str, dict[str, tuple[int, int]]]:
    text, spans, pos = "", {}, 0
    while pos < len(template):
        at = template.find("{", pos)
        if at < 0:
            text += template[pos:]
            break
        text += template[pos:at]
        close = template.index("}", at)
        name = template[at + 1:close]
        spans[name] = (len(text), len(text) + len(slots[name]))
        text += slots[name]
        pos = close + 1
    return text, spans


def synthetic_example(rng: np.random.Generator, sid: str, template: Optional[int] = None) -> SentenceExample:
    k = int(rng.integers(len(TEMPLATES))) if template is None else template
    pattern, rels = TEMPLATES[k]
    people = rng.choice(len(FIRST), size=2, replace=False)
    places = rng.choice(len(PLACES), size=2, replace=False)
    slots = {}
    for j, idx in enumerate(people):
        slots[f"P{j}"] = f"{FIRST[idx]} {LAST[int(rng.integers(len(LAST)))]}"
    for j, idx in enumerate(places):
        slots[f"L{j}"] = PLACES[idx]
    text, spans = _fill(pattern, slots)
    names = [name for name in spans]
    entities = [{"type": "Person" if name[0] == "P" else "Place", "start": spans[name][0], "end": spans[name][1]}
                for name in names]
    relations = [{"subject": names.index(s), "object": names.index(o), "predicate": p} for s, p, o in rels]
    ex = example_from_record({"id": sid, "text": text, "entities": entities, "relations": relations},
                             on_misaligned="abort")
    # a left-to-right chain stands in for a parse
    ex.dep_edges = [(i, i + 1, "next") for i in range(len(ex) - 1)]
    return ex


def synthetic_corpus(size: int = 20, seed: int = 0) -> list[SentenceExample]:
    rng = np.random.default_rng(seed)
    return [synthetic_example(rng, f"syn-{seed}-{k}", template=k % len(TEMPLATES)) for k in range(size)]
