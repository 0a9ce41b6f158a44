"""
Sentences as tag tables
=======================

Encode an annotated sentence into its n x n tag table, print it, then read
the entities and relations back out of the table.
"""
import numpy as np

from relmetric import build_label_space, decode_table
from relmetric.corpus import example_from_record
from relmetric.codec import encode_table

# one sentence with three entities and two relations, given as character spans
record = {
    "id": "demo",
    "text": "Mrs. Ito lives in Kyoto , Japan .",
    "entities": [{"type": "Person", "start": 0, "end": 8},
                 {"type": "Location", "start": 18, "end": 23},
                 {"type": "Location", "start": 26, "end": 31}],
    "relations": [{"subject": 0, "object": 1, "predicate": "Live_In"},
                  {"subject": 1, "object": 2, "predicate": "Located_In"}],
}
ex = example_from_record(record)
print("tokens:", ex.words)

# the tag inventory: O, then B/I/L/U per entity type, then one tag per relation
labels = build_label_space(["Location", "Person"], ["Live_In", "Located_In"])
print(f"{len(labels)} tags:", labels.tags)

# entity tags sit on the diagonal; each relation fills a subject x object block
table = encode_table(ex.entities, ex.relations, len(ex), labels)
width = max(len(t) for t in labels.tags)
print(" " * 10 + "".join(f"{w[:width]:>{width + 1}}" for w in ex.words))
for word, row in zip(ex.words, table.cells):
    print(f"{word:>10}" + "".join(f"{labels.tags[t]:>{width + 1}}" for t in row))

# a one-hot table is a perfectly confident prediction, so decoding recovers the annotation
entities, relations = decode_table(table.one_hot(len(labels)), labels)
for e in entities:
    print("entity  ", e.type, repr(ex.surface(e)))
for r in relations:
    print("relation", repr(ex.surface(r.subject)), r.predicate, repr(ex.surface(r.object)))

# decoding is robust to noise that leaves each block's winner in place
rng = np.random.default_rng(0)
noisy = table.one_hot(len(labels)) + 0.3 * rng.random((len(ex), len(ex), len(labels)))
assert decode_table(noisy, labels) == (entities, relations)
print("noisy table decodes to the same structures")
