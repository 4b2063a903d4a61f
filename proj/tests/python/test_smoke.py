"""Smoke tests for the python bindings."""

import math

import pytest

import corefbench as cb


def test_version():
    assert cb.__version__


def test_schedule_endpoints():
    sched = cb.LrSchedule(1e-5, 100)
    assert sched.warmup_steps == 10
    assert sched.lr_at(0) == 0.0
    assert sched.lr_at(10) == pytest.approx(1e-5, rel=1e-12)
    assert sched.lr_at(100) == 0.0
    assert sched.lr_at(55) == pytest.approx(5e-6, rel=1e-12)


def test_softmax_and_predict():
    probs = cb.softmax([0.0, 0.0])
    assert probs == pytest.approx([0.5, 0.5], abs=1e-12)
    assert cb.predict(0.7, 0.3) == {"index": 0, "tie": False}
    assert cb.predict(0.5, 0.5)["tie"] is True


def test_t_test_and_aggregate():
    r = cb.t_test_pooled([1, 2, 3, 4], [2, 3, 4, 5])
    assert r["t"] == pytest.approx(-1.095445, abs=1e-6)
    assert r["df"] == 6
    same = cb.t_test_pooled([0.7, 0.8], [0.7, 0.8])
    assert same["p"] == 1.0

    agg = cb.aggregate([1.0, 2.0, 3.0])
    assert agg["mean"] == 2.0
    assert agg["std"] == 1.0
    assert agg["max"] == 3.0


def test_max_mask_and_bwp_scores():
    m1, m2 = cb.max_mask([0.3, 0.1], [0.2, 0.5])
    assert m1 == [1.0, 0.0]
    assert m2 == [0.0, 1.0]

    pair = cb.bwp_score_pair([-1.0, -3.0, -2.0], [0, 1], [2])
    assert pair == pytest.approx([0.5, 0.5], abs=1e-12)
    shifted = cb.bwp_score_pair([4.0, 2.0, 3.0], [0, 1], [2])
    assert shifted == pytest.approx(pair, abs=1e-12)


def test_vocab_roundtrip():
    vocab = cb.build_vocab(["the dog chased the cat"], 1)
    ids = cb.tokenize("the cat", vocab)
    tokens = cb.decode(ids, vocab)
    assert tokens == ["<s>", "the", "cat", "</s>"]


def test_schema_repair():
    inst = cb.SchemaInstance(
        id="wsc-madonna",
        text="Madonna fired her trainer because _ couldn't stand her boyfriend.",
        candidate1="Madonna",
        candidate2="The trainer",
        answer=1,
    )
    report = cb.detect_candidate_mismatch(inst)
    assert report["c1_found"] and not report["c2_found"]
    repaired = cb.repair_candidate(inst)
    assert repaired.candidate2 == "her trainer"


def test_unified_file_roundtrip(tmp_path):
    instances = cb.generate_synthetic(count=6, seed=11)
    path = str(tmp_path / "data.jsonl")
    cb.write_unified_file(path, instances)
    loaded = cb.parse_schema_file(path, "unified")
    assert [inst.id for inst in loaded] == [inst.id for inst in instances]
    assert loaded[0].answer in (1, 2)


def test_tiny_training_run_is_deterministic():
    train = cb.generate_synthetic(count=8, seed=3)
    dev = cb.generate_synthetic(count=4, seed=4)
    encoder = {"num_layers": 1, "num_heads": 1, "hidden_size": 8, "ffn_size": 16,
               "max_seq_len": 32}
    kwargs = dict(lr=1e-3, epochs=2, batch_size=4, seed=5, encoder=encoder)
    a = cb.train_run("css", train, dev, **kwargs)
    b = cb.train_run("css", train, dev, **kwargs)
    assert a["epoch_dev_accuracy"] == b["epoch_dev_accuracy"]
    assert a["converged"] == cb.is_converged(a["final_dev_accuracy"])
    assert len(a["epoch_dev_accuracy"]) == 2


def test_seed_sweep_counts():
    train = cb.generate_synthetic(count=8, seed=13)
    dev = cb.generate_synthetic(count=4, seed=14)
    encoder = {"num_layers": 1, "num_heads": 1, "hidden_size": 8, "ffn_size": 16,
               "max_seq_len": 32}
    results = cb.seed_sweep("bwp", train, dev, n_seeds=3, lr=1e-3, epochs=1,
                            batch_size=4, base_seed=20, encoder=encoder)
    assert len(results) == 3
    assert [r["seed"] for r in results] == [20, 21, 22]


def test_render_table1():
    report = cb.render_table1({"css": {"wg-dev": [0.782, 0.782, 0.782]}})
    assert "78.2" in report["markdown"]
    assert report["tsv"].startswith("model\t")
