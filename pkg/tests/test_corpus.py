import json
import logging

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relmetric.codec import Entity, RelationTriple, decode_tag_table, encode_table
from relmetric.corpus import (SentenceExample, attach_parse, detokenize, example_from_record, fold_of,
                              fold_split, kfold, parse_corpus, read_parse_sidecar, tokenize, write_canonical,
                              write_parse_sidecar)
from relmetric.errors import AlignmentError, IngestionError
from relmetric.model import infer_label_space

CONLL_SAMPLE = """\
0\tPeop\t0\tO\tNNP/NNP\tJohn/Smith\tO\tO\tO
0\tO\t1\tO\tVBD\tlives\tO\tO\tO
0\tO\t2\tO\tIN\tin\tO\tO\tO
0\tLoc\t3\tO\tNNP\tBoston\tO\tO\tO
0\tO\t4\tO\t,\tCOMMA\tO\tO\tO
0\tLoc\t5\tO\tNNP\tMassachusetts\tO\tO\tO
0\tO\t6\tO\t.\t.\tO\tO\tO

0\t3\tLive_In
3\t5\tLocated_In

1\tOrg\t0\tO\tNNP\tAcme\tO\tO\tO
1\tO\t1\tO\tVBD\tgrew\tO\tO\tO

"""

ADE_SAMPLE = """\
100|Aspirin caused severe rash in one patient.|severe rash|0|0|Aspirin|0|0
100|Aspirin caused severe rash in one patient.|rash|0|0|Aspirin|0|0
100|Aspirin caused severe rash in one patient.|severe rash|0|0|Aspirin|0|0
200|Heparin induced thrombocytopenia was noted.|thrombocytopenia|0|0|Heparin|0|0
300|Lithium toxicity appeared.|Lithium toxicity|0|0|Lithium|0|0
"""


def words(text):
    return [t.text for t in tokenize(text)]


# ---------------------------------------------------------------------- tokenizer


@pytest.mark.parametrize("text, expected", [
    ("Blue Ball, said", ["Blue", "Ball", ",", "said"]),
    ("Japan", ["Japan"]),
    ("U.S.", ["U.S", "."]),
    ('"(Hello)!"', ['"', "(", "Hello", ")", "!", '"']),
    ("well-known co-op", ["well-known", "co-op"]),
])
def test_tokenize_examples(text, expected):
    assert words(text) == expected


@pytest.mark.parametrize("text", ["", "   \t\n"])
def test_tokenize_rejects_empty(text):
    with pytest.raises(IngestionError):
        tokenize(text)


@settings(max_examples=300, deadline=None)
@given(st.text(alphabet=st.sampled_from(list("ab.,;:!?'\"()- \t\nZé—")), min_size=1, max_size=40)
       .filter(lambda s: s.strip()))
def test_tokenize_offsets_round_trip(text):
    toks = tokenize(text)
    assert detokenize(text, toks) == text
    for t in toks:
        assert text[t.start:t.end] == t.text and t.text and not any(c.isspace() for c in t.text)
    for a, b in zip(toks, toks[1:]):
        assert a.end <= b.start


# ---------------------------------------------------------------------- canonical records


def record(**kw):
    base = {"id": "s1", "text": "Mrs. Tsuruyama is from Yatsushiro in Kumamoto Prefecture in southern Japan.",
            "entities": [{"type": "Person", "start": 0, "end": 14},
                         {"type": "Location", "start": 23, "end": 33},
                         {"type": "Location", "start": 37, "end": 56},
                         {"type": "Location", "start": 69, "end": 74}],
            "relations": [{"subject": 0, "object": 1, "predicate": "Live_In"}]}
    base.update(kw)
    return base


def test_record_alignment():
    ex = example_from_record(record())
    assert ex.words[:3] == ["Mrs", ".", "Tsuruyama"]
    assert [ex.surface(e) for e in ex.entities] == ["Mrs. Tsuruyama", "Yatsushiro", "Kumamoto Prefecture", "Japan"]
    assert ex.relations == [RelationTriple(ex.entities[0], "Live_In", ex.entities[1])]


def test_explicit_tokens_are_kept():
    text = "Mrs. Tsuruyama left"
    ex = example_from_record({"id": "t", "text": text, "tokens": [["Mrs.", 0, 4], ["Tsuruyama", 5, 14], ["left", 15, 19]],
                              "entities": [{"type": "Person", "start": 0, "end": 14}]})
    assert ex.entities == [Entity("Person", 0, 1)]


def test_misaligned_entity_policies(caplog):
    rec = record(entities=[{"type": "Location", "start": 25, "end": 33}], relations=[])
    with caplog.at_level(logging.WARNING):
        repaired = example_from_record(rec, on_misaligned="repair")
    assert repaired.surface(repaired.entities[0]) == "Yatsushiro"
    assert "not aligned" in caplog.text
    assert example_from_record(rec, on_misaligned="skip").entities == []
    with pytest.raises(AlignmentError, match="s1"):
        example_from_record(rec, on_misaligned="abort")


def test_relation_to_missing_entity_names_record():
    rec = record(id="bad-7", relations=[{"subject": 0, "object": 9, "predicate": "Live_In"}])
    with pytest.raises(IngestionError, match="bad-7"):
        example_from_record(rec)


def test_canonical_round_trip(tmp_path):
    ex = example_from_record(record(dep_edges=[[1, 2, "nsubj"]]))
    path = tmp_path / "c.jsonl"
    write_canonical(path, [ex])
    again = parse_corpus(path)
    assert again[0].entities == ex.entities and again[0].relations == ex.relations
    assert again[0].tokens == ex.tokens and again[0].dep_edges == ex.dep_edges


def test_on_error_skip(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text(json.dumps(record()) + "\n" + json.dumps(record(id="x", text="")) + "\n")
    assert len(parse_corpus(path, on_error="skip")) == 1
    with pytest.raises(IngestionError):
        parse_corpus(path)


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        parse_corpus("/nonexistent/corpus.jsonl")


# ---------------------------------------------------------------------- adapters


def test_conll04_adapter(tmp_path):
    path = tmp_path / "sample.corp"
    path.write_text(CONLL_SAMPLE)
    first, second = parse_corpus(path, format="conll04")
    assert first.words == ["John", "Smith", "lives", "in", "Boston", ",", "Massachusetts", "."]
    john, boston, mass = first.entities
    assert john == Entity("Person", 0, 1) and first.surface(john) == "John Smith"
    assert {(r.subject, r.predicate, r.object) for r in first.relations} == {
        (john, "Live_In", boston), (boston, "Located_In", mass)}
    assert second.entities == [Entity("Organization", 0, 0)] and second.relations == []


def test_ade_adapter_collapses_and_drops_nested(tmp_path):
    path = tmp_path / "DRUG-AE.rel"
    path.write_text(ADE_SAMPLE)
    examples = parse_corpus(path, format="ade")
    assert len(examples) == 3
    first = examples[0]
    assert [first.surface(e) for e in first.entities] == ["Aspirin", "severe rash"]
    assert len(first.relations) == 1
    assert first.relations[0].subject.type == "Drug" and first.relations[0].predicate == "Adverse_Effect"
    assert examples[2].relations == [] and examples[2].entities == []


def test_every_ingested_example_round_trips(tmp_path, corpus):
    conll, ade = tmp_path / "a.corp", tmp_path / "b.rel"
    conll.write_text(CONLL_SAMPLE)
    ade.write_text(ADE_SAMPLE)
    examples = parse_corpus(conll, "conll04") + parse_corpus(ade, "ade") + list(corpus)
    labels = infer_label_space(examples)
    for ex in examples:
        table = encode_table(ex.entities, ex.relations, len(ex), labels)
        ents, rels = decode_tag_table(table, labels)
        assert ents == sorted(ex.entities, key=lambda e: e.start)
        assert sorted(rels) == sorted(ex.relations)


# ---------------------------------------------------------------------- dependency sidecars


def _seven_tokens():
    return example_from_record({"id": "p1", "text": "the cat sat on the mat today"})


def test_sidecar_row_becomes_edge(tmp_path):
    path = tmp_path / "p.parse"
    path.write_text("# id = p1\n# tokens = 7\n-1 2 root\n2 5 nsubj\n\n")
    ex = attach_parse(_seven_tokens(), read_parse_sidecar(path))
    assert ex.dep_edges == [(2, 5, "nsubj")]


def test_missing_sidecar_entry_is_null_parse(caplog):
    with caplog.at_level(logging.WARNING):
        ex = attach_parse(_seven_tokens(), {})
    assert ex.dep_edges == [] and "null parse" in caplog.text


def test_sidecar_token_mismatch(tmp_path):
    path = tmp_path / "p.parse"
    path.write_text("# id = p1\n# tokens = 6\n0 1 det\n")
    with pytest.raises(AlignmentError, match="p1"):
        attach_parse(_seven_tokens(), read_parse_sidecar(path))


def test_sidecar_round_trip(tmp_path, corpus):
    path = tmp_path / "p.parse"
    write_parse_sidecar(path, corpus)
    parses = read_parse_sidecar(path)
    for ex in corpus:
        stripped = SentenceExample(ex.id, ex.text, ex.tokens, ex.entities, ex.relations, [])
        assert attach_parse(stripped, parses).dep_edges == ex.dep_edges


def test_sidecar_needs_headers(tmp_path):
    path = tmp_path / "p.parse"
    path.write_text("0 1 det\n")
    with pytest.raises(IngestionError):
        read_parse_sidecar(path)


# ---------------------------------------------------------------------- folds


def test_folds_partition_exactly(corpus):
    folds = kfold(corpus, k=10, seed=3)
    ids = [ex.id for fold in folds for ex in fold]
    assert sorted(ids) == sorted(ex.id for ex in corpus)
    assert folds == kfold(corpus, k=10, seed=3)
    split = fold_split(corpus, 4, k=10, seed=3)
    assert {e.id for e in split.test} == {e.id for e in folds[4]}
    assert not {e.id for e in split.test} & {e.id for e in split.train}


@given(st.text(min_size=1, max_size=20), st.integers(0, 100))
def test_fold_is_deterministic(sid, seed):
    assert fold_of(sid, 10, seed) == fold_of(sid, 10, seed)
    assert 0 <= fold_of(sid, 10, seed) < 10
