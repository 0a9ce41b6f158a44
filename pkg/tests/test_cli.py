import json

import numpy as np
import pytest

from relmetric.cli import _build_parser, _config_from_args, heatmaps, main, read_grid
from relmetric.config import TrainConfig, load_config
from relmetric.corpus import example_from_record, parse_corpus, write_canonical
from relmetric.harness import TIMING_FIELDS, evaluate, load_checkpoint, model_from_checkpoint, predict_examples
from relmetric.model import RelationMetricNetwork

from conftest import tiny_config

TINY_FLAGS = ["--channels", "3", "--layers", "3", "--char-dim", "4", "--char-features", "5",
              "--position-dim", "3", "--dep-dim", "2", "--word-dim", "4", "--context-dim", "6", "--dropout", "0.2"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory, corpus):
    root = tmp_path_factory.mktemp("cli")
    write_canonical(root / "train.jsonl", corpus[:8])
    write_canonical(root / "dev.jsonl", corpus[8:11])
    code = main(["train", "--train", str(root / "train.jsonl"), "--dev", str(root / "dev.jsonl"),
                 "--out", str(root / "run"), "--epochs", "2", *TINY_FLAGS])
    assert code == 0
    return root


def records(path):
    return [json.loads(line) for line in path.read_text().splitlines()]


def test_defaults_are_the_published_configuration():
    args = _build_parser().parse_args(["train", "--train", "t", "--out", "o"])
    config = _config_from_args(args)
    assert config == TrainConfig()
    expected = dict(learning_rate=0.005, dropout=0.5, epochs=100, channels=15, layers=8, char_dim=25,
                    char_features=50, position_dim=25, dep_dim=10, word_dim=200, context_dim=200)
    assert {k: getattr(config, k) for k in expected} == expected


def test_flags_override_config_file(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("# tuned\nepochs = 7\nchannels = 4\n")
    args = _build_parser().parse_args(["train", "--train", "t", "--out", "o", "--config", str(path),
                                       "--channels", "9"])
    config = _config_from_args(args)
    assert (config.epochs, config.channels, config.layers) == (7, 9, 8)


def test_invalid_config_key_lists_valid_keys(tmp_path, capsys):
    path = tmp_path / "c.txt"
    path.write_text("chanels = 4\n")
    assert main(["train", "--train", "t", "--out", str(tmp_path), "--config", str(path)]) == 1
    err = capsys.readouterr().err
    assert "chanels" in err and "channels" in err and "learning_rate" in err


def test_missing_corpus_path(tmp_path, capsys):
    missing = tmp_path / "nope.jsonl"
    assert main(["train", "--train", str(missing), "--out", str(tmp_path / "o")]) == 2
    assert str(missing) in capsys.readouterr().err


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as info:
        main(["train"])
    assert info.value.code == 1


def test_train_writes_two_epoch_records(workspace):
    log = records(workspace / "run" / "metrics.jsonl")
    assert [r["epoch"] for r in log] == [0, 1]
    for r in log:
        assert {"lr", "train_loss", "dev_ner_f1", "dev_re_f1", *TIMING_FIELDS} <= set(r)
    assert (workspace / "run" / "checkpoint.bin").exists()
    assert load_config(workspace / "run" / "config.txt").epochs == 2


def test_predict_records(workspace, capsys):
    out = workspace / "preds.jsonl"
    capsys.readouterr()
    assert main(["predict", "--checkpoint", str(workspace / "run" / "checkpoint.bin"),
                 "--input", str(workspace / "dev.jsonl"), "--out", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["sentences"] == 3 and summary["inference_seconds"] > 0
    for rec in records(out):
        assert rec["inference_seconds"] > 0
        assert {"id", "text", "tokens", "entities", "relations"} <= set(rec)
        for ent in rec["entities"]:
            assert {"type", "start", "end", "token_start", "token_end", "text"} <= set(ent)
            assert rec["text"][ent["start"]:ent["end"]] == ent["text"]
        for rel in rec["relations"]:
            assert 0 <= rel["subject"] < len(rec["entities"]) and 0 <= rel["object"] < len(rec["entities"])
    assert (workspace / "preds.jsonl.config.txt").exists()


def test_predict_without_entities_gives_empty_lists(workspace):
    model = model_from_checkpoint(load_checkpoint(workspace / "run" / "checkpoint.bin"))
    ex = example_from_record({"id": "e", "text": "nothing here"})
    for layer in model.stack.weights:
        layer.data[:] = 0.0
    for bias in model.stack.biases:
        bias.data[:] = 0.0
    model.stack.biases[-1].data[0] = 10.0
    (pred,) = predict_examples(model, [ex])
    record = pred.to_record()
    assert record["entities"] == [] and record["relations"] == []


def test_pipeline_matches_harness_scores(workspace, capsys):
    out = workspace / "train_preds.jsonl"
    assert main(["predict", "--checkpoint", str(workspace / "run" / "checkpoint.bin"),
                 "--input", str(workspace / "train.jsonl"), "--out", str(out)]) == 0
    capsys.readouterr()
    assert main(["evaluate", "--predictions", str(out), "--gold", str(workspace / "train.jsonl")]) == 0
    cli_report = json.loads(capsys.readouterr().out)
    model = model_from_checkpoint(load_checkpoint(workspace / "run" / "checkpoint.bin"))
    gold = parse_corpus(workspace / "train.jsonl")
    assert cli_report == evaluate(predict_examples(model, gold), gold).as_dict()


def test_evaluate_partitions(workspace, capsys):
    gold = str(workspace / "dev.jsonl")
    for scheme in ("length", "entity_distance", "relation_type"):
        capsys.readouterr()
        assert main(["evaluate", "--predictions", gold, "--gold", gold, "--partition", scheme]) == 0
        rows = json.loads(capsys.readouterr().out)["rows"]
        assert rows and all(r["re"]["fp"] == r["re"]["fn"] == 0 for r in rows)


def test_label_space_mismatch_names_both_sets(workspace, tmp_path, capsys):
    path = tmp_path / "other.jsonl"
    path.write_text(json.dumps({"id": "o", "text": "Aspirin caused rash",
                                "entities": [{"type": "Drug", "start": 0, "end": 7}]}) + "\n")
    assert main(["predict", "--checkpoint", str(workspace / "run" / "checkpoint.bin"),
                 "--input", str(path), "--out", str(tmp_path / "p.jsonl")]) == 2
    err = capsys.readouterr().err
    assert "Drug" in err and "Person" in err


def test_inspect_grids(workspace, capsys):
    out = workspace / "heat"
    sentence = "Ada Park was born in Leeds ."
    assert main(["inspect", "--checkpoint", str(workspace / "run" / "checkpoint.bin"),
                 "--sentence", sentence, "--out", str(out)]) == 0
    model = model_from_checkpoint(load_checkpoint(workspace / "run" / "checkpoint.bin"))
    names = sorted(p.stem for p in out.glob("*.csv"))
    assert names == ["layer_01", "layer_02", "layer_03", "prediction"]
    tokens, pred = read_grid(out / "prediction.csv")
    assert tokens == sentence.split()
    assert np.all((pred >= 0) & (pred <= 1))
    ex = example_from_record({"id": "x", "text": sentence})
    run = model.run(ex.words, training=False)
    _, first = read_grid(out / "layer_01.csv")
    np.testing.assert_array_equal(first, run.layers[0].data.sum(axis=2))
    assert (out / "config.txt").exists()


def test_default_depth_gives_nine_grids(corpus):
    model = RelationMetricNetwork.build(tiny_config(layers=8, batch_norm=False), corpus[:3],
                                        rng=np.random.default_rng(0))
    assert len(heatmaps(model, corpus[0])) == 9


def test_inspect_rejects_empty_sentence(workspace):
    assert main(["inspect", "--checkpoint", str(workspace / "run" / "checkpoint.bin"),
                 "--sentence", "  ", "--out", str(workspace / "h2")]) == 1


def test_config_echo_reproduces_run(workspace, tmp_path):
    first = workspace / "run"
    assert main(["train", "--train", str(workspace / "train.jsonl"), "--dev", str(workspace / "dev.jsonl"),
                 "--out", str(tmp_path / "again"), "--config", str(first / "config.txt")]) == 0
    strip = lambda rs: [{k: v for k, v in r.items() if k not in TIMING_FIELDS} for r in rs]
    assert strip(records(first / "metrics.jsonl")) == strip(records(tmp_path / "again" / "metrics.jsonl"))
    a = load_checkpoint(first / "checkpoint.bin").arrays
    b = load_checkpoint(tmp_path / "again" / "checkpoint.bin").arrays
    assert a.keys() == b.keys() and all(np.array_equal(a[k], b[k]) for k in a)


def test_folds_driver(tmp_path, corpus, capsys):
    write_canonical(tmp_path / "all.jsonl", corpus)
    assert main(["folds", "--corpus", str(tmp_path / "all.jsonl"), "--k", "5", "--only", "0", "1",
                 "--out", str(tmp_path / "cv"), "--epochs", "1", *TINY_FLAGS]) == 0
    summary = json.loads((tmp_path / "cv" / "summary.json").read_text())
    assert [f["fold"] for f in summary["folds"]] == [0, 1]
    assert all(f["train"] + f["test"] == len(corpus) for f in summary["folds"])
