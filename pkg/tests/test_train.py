import json
import math
import re

import numpy as np
import pytest

from formula_embed import nets
from formula_embed import tensor as T
from formula_embed.nets import ABLATION_ROWS, ModelConfig
from formula_embed.trainer import (
    AdamState,
    Checkpoint,
    CheckpointError,
    Dataset,
    DatasetError,
    Vocabulary,
    adam_step,
    bce_loss,
    checkpoint_bytes,
    checkpoint_from_bytes,
    compile_formula,
    evaluate,
    generate_synthetic,
    load_checkpoint,
    load_dataset,
    metrics_jsonl,
    parse_dataset,
    predict_pairs,
    rank_premises,
    save_checkpoint,
    shared_predicate_label,
    top_k,
    train,
)

SMALL = dict(node_dim=6, edge_dim=3)


def small(emb="MPNN", pool="MaxPool"):
    return ModelConfig(node_embedder=emb, pooling=pool, **SMALL)


def make_ckpt(config, dataset, seed=0):
    vocab = Vocabulary.build(dataset)
    params = nets.init_params(config, len(vocab), seed=seed, dtype=np.float32)
    params.training = False
    return Checkpoint(config, vocab, params)


@pytest.fixture(scope="module")
def data():
    return generate_synthetic(24, seed=5)


def test_load_single_line(tmp_path):
    f = tmp_path / "d.tsv"
    f.write_text("1\t(p a)\t(q b)\n")
    ds = load_dataset(f)
    assert len(ds) == 1 and ds[0].label == 1
    assert ds[0].premise_text == "(p a)"


def test_bad_label_reports_line():
    with pytest.raises(DatasetError) as ei:
        parse_dataset("1\t(p a)\t(q b)\n# note\n2\t(p a)\t(q b)\n")
    assert "line 3" in str(ei.value)


def test_malformed_lines_are_aggregated():
    with pytest.raises(DatasetError) as ei:
        parse_dataset("1\t(p a)\n0\t(p a\t(q b)\n1\t(p a)\t(q b)\n")
    assert [n for n, _ in ei.value.problems] == [1, 2]


def test_duplicates_kept_and_empty_rejected(tmp_path):
    ds = parse_dataset("1\t(p a)\t(q b)\n1\t(p a)\t(q b)\n")
    assert len(ds) == 2
    f = tmp_path / "empty.tsv"
    f.write_text("# nothing\n")
    with pytest.raises(DatasetError):
        load_dataset(f)
    assert len(load_dataset(f, allow_empty=True)) == 0


def test_dataset_text_round_trip(data):
    again = parse_dataset(data.to_text())
    assert again.to_text() == data.to_text()
    assert np.array_equal(again.labels, data.labels)


def test_bce_examples():
    assert math.isclose(float(bce_loss(T.Tensor([0.5]), [1]).data), math.log(2), rel_tol=1e-12)
    assert float(bce_loss(T.Tensor([1.0]), [1]).data) < 1e-6
    assert math.isfinite(float(bce_loss(T.Tensor([0.0]), [1]).data))


def test_adam_first_step_closed_form():
    p = {"w": np.array([1.0, -2.0, 0.5])}
    g = {"w": np.array([0.3, -4.0, 1e-3])}
    state = AdamState(lr=0.01)
    adam_step(p, g, state)
    expect = np.array([1.0, -2.0, 0.5]) - 0.01 * g["w"] / (np.abs(g["w"]) + 1e-8)
    assert np.allclose(p["w"], expect, rtol=0, atol=1e-15)
    assert state.t == 1


def test_adam_zero_gradient_is_noop():
    p = {"w": np.array([1.0, 2.0])}
    adam_step(p, {"w": np.zeros(2)}, AdamState())
    assert p["w"].tolist() == [1.0, 2.0]


def test_vocabulary():
    ds = parse_dataset("1\t(forall (x) (p x))\t(q a)\n")
    v = Vocabulary.build(ds)
    assert v.tokens[:2] == ["<unk>", "VAR"]
    assert set(v.tokens) == {"<unk>", "VAR", "forall", "p", "q", "a"}
    assert v.encode(["zz"]).tolist() == [0]
    assert Vocabulary.from_list(v.tokens) == v
    with pytest.raises(ValueError):
        Vocabulary.from_list(["p", "q"])


def test_zero_epochs_returns_initial_checkpoint(data, tmp_path):
    ckpt, metrics = train(small(), data, data, epochs=0, seed=3, metrics_path=tmp_path / "m.jsonl")
    assert metrics == []
    assert (tmp_path / "m.jsonl").read_text() == ""
    params = nets.init_params(small(), len(ckpt.vocab), seed=np.random.default_rng(np.random.SeedSequence(3).spawn(2)[0]))
    for (k, a), (k2, b) in zip(ckpt.params.records(), params.records()):
        assert k == k2 and np.array_equal(a, b)


@pytest.mark.parametrize("emb, pool", ABLATION_ROWS, ids=[f"{e.value}-{p.value}" for e, p in ABLATION_ROWS])
def test_training_reduces_loss(emb, pool, data):
    sub = data.subset(range(20))
    _, metrics = train(small(emb, pool), sub, sub, epochs=6, seed=0, batch_size=10, lr=1e-2)
    assert metrics[-1]["train_loss"] < metrics[0]["train_loss"]


def test_best_checkpoint_and_target_stop(data):
    _, metrics = train(small(), data, data, epochs=4, seed=1, lr=1e-2, target_accuracy=0.0)
    assert len(metrics) == 1
    assert set(metrics[0]) == {"epoch", "train_loss", "dev_loss", "dev_accuracy"}


def test_evaluate_single_example():
    ds = parse_dataset("1\t(p a)\t(p b)\n")
    ckpt = make_ckpt(small(), ds)
    ckpt.params.params["F_CL.lin2.W"][...] = 0.0
    ckpt.params.params["F_CL.lin2.b"][...] = math.log(0.7 / 0.3)
    res = evaluate(ckpt, ds)
    assert res["n"] == 1 and res["accuracy"] == 1.0
    assert math.isclose(res["scores"][0], 0.7, rel_tol=1e-6)
    assert math.isclose(res["loss"], -math.log(0.7), rel_tol=1e-5)


def test_evaluate_errors(data):
    ckpt = make_ckpt(small(), data)
    with pytest.raises(DatasetError):
        evaluate(ckpt, Dataset([]))
    bad = Checkpoint(ckpt.config, Vocabulary(["extra"] + ckpt.vocab.tokens[2:]), ckpt.params)
    with pytest.raises(CheckpointError):
        evaluate(bad, data)


def test_evaluate_matches_embed_pair_and_order(data):
    for emb, pool in [("MPNN", "MaxPool"), ("BidirDagLSTM", "AttDagPool")]:
        ckpt = make_ckpt(small(emb, pool), data, seed=2)
        res = evaluate(ckpt, data, batch_size=7)
        single = [nets.embed_pair(e.premise, e.conjecture, ckpt.config, ckpt.params, ckpt.vocab) for e in data]
        assert np.allclose(res["scores"], single, rtol=0, atol=1e-6)
        perm = np.random.default_rng(0).permutation(len(data))
        shuffled = evaluate(ckpt, data.subset(perm))
        assert np.allclose(shuffled["scores"], res["scores"][perm], rtol=0, atol=1e-6)
        assert shuffled["accuracy"] == res["accuracy"]


def test_ranking_grouped_equals_pairwise(data):
    conj = data[0].conjecture
    pool = [(str(i), e.premise) for i, e in enumerate(data)]
    for emb, pl in [("GCN", "MaxPool"), ("DagLSTM", "DagPool"), ("MPNN", "AttDagPool")]:
        ckpt = make_ckpt(small(emb, pl), data, seed=4)
        ranked = dict(rank_premises(ckpt, conj, pool, batch_size=5))
        pairwise = predict_pairs(ckpt, [(d, conj) for _, d in pool])
        for (pid, _), s in zip(pool, pairwise):
            assert abs(ranked[pid] - s) <= 1e-6


def test_ranking_ties_by_id_and_prefix(data):
    ckpt = make_ckpt(small(), data)
    g = compile_formula("(p0 c1)")
    ranking = rank_premises(ckpt, g, [("10", g), ("9", g), ("b", g), ("a", g)])
    assert [p for p, _ in ranking] == ["9", "10", "a", "b"]
    assert rank_premises(ckpt, g, [("only", g)])[0][0] == "only"
    pool = [(str(i), e.premise) for i, e in enumerate(data)]
    full = rank_premises(ckpt, data[1].conjecture, pool)
    assert top_k(full, 5) == full[:5]
    assert top_k(full, 100) == full
    assert top_k(full, None) == full
    scores = [s for _, s in full]
    assert scores == sorted(scores, reverse=True)


def test_synthetic_generator():
    assert len(generate_synthetic(0, seed=1)) == 0
    for task in ("shared-predicate", "depth-parity"):
        ds = generate_synthetic(101, seed=9, task=task)
        assert abs(int(ds.labels.sum()) - (101 - int(ds.labels.sum()))) <= 2
        assert generate_synthetic(101, seed=9, task=task).to_text() == ds.to_text()
    with pytest.raises(ValueError):
        generate_synthetic(4, task="nope")


def test_shared_predicate_oracle_recomputed():
    ds = generate_synthetic(200, seed=2)
    find = re.compile(r"\(\s*(p\d+)\b")
    for e in ds:
        shared = set(find.findall(e.premise_text)) & set(find.findall(e.conjecture_text))
        assert e.label == int(bool(shared))
        assert e.label == shared_predicate_label(e.premise_text, e.conjecture_text)


def _tree_depth(text):
    best = cur = 0
    for ch in text:
        if ch == "(":
            cur += 1
            best = max(best, cur)
        elif ch == ")":
            cur -= 1
    return best + 1


def test_depth_parity_oracle_recomputed():
    ds = generate_synthetic(200, seed=3, task="depth-parity")
    for e in ds:
        assert e.label == _tree_depth(e.premise_text) % 2


def test_checkpoint_round_trip(data, tmp_path):
    ckpt, _ = train(small("BidirDagLSTM", "AttDagPool"), data, data, epochs=1, seed=0)
    path = tmp_path / "a.ckpt"
    save_checkpoint(ckpt, path)
    back = load_checkpoint(path)
    assert checkpoint_bytes(back) == path.read_bytes()
    assert back.config == ckpt.config and back.vocab == ckpt.vocab
    a, b = evaluate(ckpt, data), evaluate(back, data)
    assert a["accuracy"] == b["accuracy"] and a["loss"] == b["loss"]
    assert np.array_equal(a["scores"], b["scores"])


def test_checkpoint_corruption(data, tmp_path):
    raw = checkpoint_bytes(make_ckpt(small(), data))
    with pytest.raises(CheckpointError):
        checkpoint_from_bytes(b"XXXX" + raw[4:])
    with pytest.raises(CheckpointError):
        checkpoint_from_bytes(raw[:-3])
    with pytest.raises(CheckpointError):
        checkpoint_from_bytes(raw[:4] + (99).to_bytes(4, "little") + raw[8:])
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.ckpt")


def test_training_is_deterministic(data, tmp_path):
    runs = []
    for i in range(2):
        m = tmp_path / f"m{i}.jsonl"
        ckpt, metrics = train(small("DagLSTM", "DagPool"), data, data, epochs=2, seed=7, metrics_path=m)
        runs.append((checkpoint_bytes(ckpt), m.read_bytes(), metrics_jsonl(metrics)))
    assert runs[0] == runs[1]
    assert runs[0][1].decode() == runs[0][2]
    assert [json.loads(l)["epoch"] for l in runs[0][2].splitlines()] == [1, 2]
    other, _ = train(small("DagLSTM", "DagPool"), data, data, epochs=2, seed=8)
    assert checkpoint_bytes(other) != runs[0][0]
