"""Tests for the uncertainty-sampling loop and its checkpoint format."""

import dataclasses
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from landsift import classifier
from landsift.active_learning import (
    ALConfig,
    ALError,
    ALState,
    QueryItem,
    balanced_select,
    commit_batch,
    history_json,
    load_state,
    oracle_annotator,
    propose_batch,
    retrain,
    run_loop,
    save_state,
    subsample_pool,
    uncertainty_score,
)
from landsift.classifier import FeaturePool, TrainConfig
from landsift.fileio import atomic_write_json, read_json
from landsift.labels import LabelSet

DIM = 2 ** 12

_STEMS = (
    ("das betreten der kippe {tag} ist strengstens verboten", (1, 0)),
    ("der betreiber muss die flaeche {tag} regelmaessig pruefen", (0, 1)),
    ("die unterlagen zum standort {tag} liegen im archiv aus", (0, 0)),
)


def _corpus(n=30):
    texts = {}
    gold = {}
    for i in range(n):
        stem, bits = _STEMS[i % 3]
        sid = f"s{i:03d}"
        texts[sid] = stem.format(tag=f"nr {i:03d}")
        gold[sid] = LabelSet(restrictions=bits)
    return texts, gold


def _qi(sid, probs=(0.5, 0.5)):
    return QueryItem(sid, tuple(probs), uncertainty_score(probs))


def _fresh_state(texts):
    cold = classifier.cold_snapshot("restrictions", dim=DIM)
    return ALState("restrictions", {}, set(texts), cold)


_FAST = TrainConfig(max_epochs=6, lr_scale=1000.0)


# ---------------------------------------------------------------------------
# Config and state plumbing


def test_config_rejects_bad_batch_size():
    with pytest.raises(ALError, match="batch_size"):
        ALConfig(label_space="restrictions", batch_size=0)


def test_config_rejects_subsample_below_batch():
    with pytest.raises(ALError, match="below batch_size"):
        ALConfig(label_space="restrictions", batch_size=20, subsample_size=5)


def test_config_rejects_negative_iterations():
    with pytest.raises(ALError, match="iterations"):
        ALConfig(label_space="restrictions", iterations=-1)


def test_config_json_round_trip():
    cfg = ALConfig(
        label_space="topics",
        batch_size=7,
        iterations=3,
        subsample_size=64,
        rng_seed=42,
        train=TrainConfig(max_epochs=12, lr_scale=50.0),
    )
    assert ALConfig.from_json(cfg.to_json()) == cfg


def test_config_from_json_fills_defaults():
    cfg = ALConfig.from_json({"label_space": "topics"})
    assert cfg.batch_size == 10
    assert cfg.iterations == 50
    assert cfg.subsample_size == 4096


def test_query_item_json():
    item = _qi("s1", (0.25, 0.75))
    obj = item.to_json()
    assert obj["sentence_id"] == "s1"
    assert obj["probabilities"] == [0.25, 0.75]
    assert obj["score"] == item.score


def test_state_check_flags_overlap():
    cold = classifier.cold_snapshot("restrictions", dim=DIM)
    state = ALState("restrictions", {"a": (0, 0)}, {"a", "b"}, cold)
    with pytest.raises(ALError, match="1 ids both labeled and unlabeled"):
        state.check()


# ---------------------------------------------------------------------------
# Subsampling and scoring


def test_subsample_returns_all_when_pool_small():
    rng = np.random.default_rng([3, 0])
    assert subsample_pool({"c", "a", "b"}, 5, rng) == ["a", "b", "c"]
    rng = np.random.default_rng([3, 0])
    assert subsample_pool({"c", "a", "b"}, 3, rng) == ["a", "b", "c"]


def test_subsample_is_sorted_subset_of_exact_size():
    pool = {f"s{i:03d}" for i in range(40)}
    rng = np.random.default_rng([3, 0])
    picks = subsample_pool(pool, 12, rng)
    assert len(picks) == 12
    assert len(set(picks)) == 12
    assert picks == sorted(picks)
    assert set(picks) <= pool


def test_subsample_deterministic_under_seed():
    pool = {f"s{i:03d}" for i in range(40)}
    a = subsample_pool(pool, 12, np.random.default_rng([3, 7]))
    b = subsample_pool(pool, 12, np.random.default_rng([3, 7]))
    assert a == b


def test_uncertainty_extremes():
    assert uncertainty_score([0.5, 0.5]) == 1.0
    assert uncertainty_score([0.0, 1.0]) == 0.0
    assert uncertainty_score([0.5, 0.0]) == 0.5


def test_uncertainty_hand_value():
    # H(0.25) = -(0.25*log2 0.25 + 0.75*log2 0.75)
    expected = 0.25 * 2.0 + 0.75 * np.log2(4.0 / 3.0)
    assert uncertainty_score([0.25]) == pytest.approx(expected, rel=1e-12)


@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=8))
def test_uncertainty_bounded_and_symmetric(probs):
    score = uncertainty_score(probs)
    assert 0.0 <= score <= 1.0
    mirrored = uncertainty_score([1.0 - p for p in probs])
    assert score == pytest.approx(mirrored, abs=1e-9)


# ---------------------------------------------------------------------------
# Balanced batch selection


def _selection_fixture():
    return [
        _qi("q0-both", (0.6, 0.7)),
        _qi("q1-pro", (0.8, 0.2)),
        _qi("q2-pro", (0.9, 0.1)),
        _qi("q3-req", (0.2, 0.8)),
        _qi("q4-req", (0.1, 0.9)),
        _qi("q5-none", (0.1, 0.2)),
    ]


def test_select_rejects_bad_k():
    with pytest.raises(ALError, match="batch size"):
        balanced_select(_selection_fixture(), 0)


def test_select_empty_candidates():
    assert balanced_select([], 5) == []


def test_select_cycles_label_buckets():
    # first pass takes the most uncertain candidate of each label in turn
    chosen = balanced_select(_selection_fixture(), 2)
    assert [c.sentence_id for c in chosen] == ["q0-both", "q3-req"]


def test_select_second_cycle_continues_rotation():
    chosen = balanced_select(_selection_fixture(), 4)
    assert [c.sentence_id for c in chosen] == ["q0-both", "q3-req", "q1-pro", "q4-req"]


def test_select_fills_from_global_order_when_buckets_dry():
    chosen = balanced_select(_selection_fixture(), 6)
    assert [c.sentence_id for c in chosen] == [
        "q0-both", "q3-req", "q1-pro", "q4-req", "q2-pro", "q5-none",
    ]


def test_select_all_neutral_falls_back_to_score_order():
    cands = [_qi("a", (0.4, 0.45)), _qi("b", (0.1, 0.2)), _qi("c", (0.3, 0.3))]
    chosen = balanced_select(cands, 2)
    # no candidate crosses 0.5, so pure uncertainty ranking decides
    assert [c.sentence_id for c in chosen] == ["a", "c"]


@st.composite
def _candidate_batches(draw):
    n_labels = draw(st.integers(1, 3))
    n = draw(st.integers(0, 12))
    items = []
    for i in range(n):
        probs = tuple(draw(st.floats(0.0, 1.0)) for _ in range(n_labels))
        items.append(_qi(f"s{i:02d}", probs))
    k = draw(st.integers(1, 15))
    return items, k


@settings(max_examples=60, deadline=None)
@given(_candidate_batches())
def test_select_returns_unique_subset_of_exact_size(batch):
    items, k = batch
    chosen = balanced_select(items, k)
    ids = [c.sentence_id for c in chosen]
    assert len(ids) == min(k, len(items))
    assert len(set(ids)) == len(ids)
    assert set(chosen) <= set(items)


# ---------------------------------------------------------------------------
# Propose / commit / retrain


def test_propose_empty_pool_returns_no_batch():
    texts, _ = _corpus(6)
    pool = FeaturePool.build(texts, dim=DIM)
    state = _fresh_state(texts)
    state.labeled = {sid: (0, 0) for sid in texts}
    state.unlabeled = set()
    cfg = ALConfig(label_space="restrictions", batch_size=2, subsample_size=4)
    assert propose_batch(state, cfg, pool) == []


def test_propose_is_idempotent_and_cold_model_is_uniform():
    texts, _ = _corpus(30)
    pool = FeaturePool.build(texts, dim=DIM)
    state = _fresh_state(texts)
    cfg = ALConfig(
        label_space="restrictions", batch_size=4, subsample_size=16, rng_seed=11
    )
    first = propose_batch(state, cfg, pool)
    second = propose_batch(state, cfg, pool)
    assert first == second
    assert len(first) == 4
    assert all(q.probabilities == (0.5, 0.5) for q in first)
    assert all(q.score == 1.0 for q in first)
    # with uniform scores the batch is the id-ordered head of the subsample
    sub = subsample_pool(set(texts), 16, np.random.default_rng([11, 0]))
    assert [q.sentence_id for q in first] == sub[:4]


def test_commit_moves_batch_into_labeled_pool():
    texts, _ = _corpus(6)
    state = _fresh_state(texts)
    batch = [_qi("s000"), _qi("s001")]
    commit_batch(state, batch, {"s000": (1, 0), "s001": (0, 1)})
    assert state.labeled == {"s000": (1, 0), "s001": (0, 1)}
    assert state.unlabeled == set(texts) - {"s000", "s001"}
    state.check()


def test_commit_rejects_missing_assignment_without_mutation():
    texts, _ = _corpus(6)
    state = _fresh_state(texts)
    batch = [_qi("s000"), _qi("s001")]
    with pytest.raises(ALError, match=r"missing=\['s001'\]"):
        commit_batch(state, batch, {"s000": (1, 0)})
    assert state.labeled == {}
    assert state.unlabeled == set(texts)


def test_commit_rejects_foreign_assignment():
    texts, _ = _corpus(6)
    state = _fresh_state(texts)
    batch = [_qi("s000")]
    with pytest.raises(ALError, match=r"foreign=\['s009'\]"):
        commit_batch(state, batch, {"s000": (1, 0), "s009": (0, 0)})
    assert state.labeled == {}


def test_commit_rejects_bad_bits_without_mutation():
    texts, _ = _corpus(6)
    state = _fresh_state(texts)
    batch = [_qi("s000"), _qi("s001")]
    with pytest.raises(ALError, match="bad label vector for s000"):
        commit_batch(state, batch, {"s000": (1, 2), "s001": (0, 1)})
    with pytest.raises(ALError, match="bad label vector"):
        commit_batch(state, batch, {"s000": (1, 0, 1), "s001": (0, 1)})
    assert state.labeled == {}
    assert state.unlabeled == set(texts)


def test_retrain_ignores_labeled_insertion_order():
    texts, gold = _corpus(12)
    pool = FeaturePool.build(texts, dim=DIM)
    ids = sorted(texts)
    bits = {sid: gold[sid].vector("restrictions") for sid in ids}
    cfg = ALConfig(label_space="restrictions", train=_FAST)

    state_a = _fresh_state(texts)
    state_a.labeled = dict(bits)
    state_a.unlabeled = set()
    state_b = _fresh_state(texts)
    state_b.labeled = dict(reversed(list(bits.items())))
    state_b.unlabeled = set()

    model_a = retrain(state_a, cfg, pool)
    model_b = retrain(state_b, cfg, pool)
    assert np.array_equal(model_a.weights, model_b.weights)
    assert np.array_equal(model_a.bias, model_b.bias)
    assert model_a.provenance["data_hash"] == model_b.provenance["data_hash"]
    assert state_a.model is model_a


# ---------------------------------------------------------------------------
# The loop


def _loop_parts(n=30, **cfg_over):
    texts, gold = _corpus(n)
    pool = FeaturePool.build(texts, dim=DIM)
    state = _fresh_state(texts)
    kwargs = dict(
        label_space="restrictions",
        batch_size=4,
        iterations=3,
        subsample_size=16,
        rng_seed=11,
        train=_FAST,
    )
    kwargs.update(cfg_over)
    cfg = ALConfig(**kwargs)
    annotator = oracle_annotator(gold, "restrictions")
    return texts, gold, pool, state, cfg, annotator


def test_run_loop_history_records():
    texts, gold, pool, state, cfg, annotator = _loop_parts()
    run_loop(state, cfg, annotator, pool)
    assert state.iteration == 3
    assert len(state.history) == 3
    for i, record in enumerate(state.history):
        assert set(record) == {
            "iteration", "batch", "labels", "model_version",
            "monitor_loss", "labeled_size",
        }
        assert record["iteration"] == i
        assert record["model_version"] == i + 1
        assert record["labeled_size"] == (i + 1) * 4
        assert len(record["batch"]) == 4
        assert sorted(record["labels"]) == sorted(record["batch"])
        assert record["monitor_loss"] > 0.0
    assert len(state.labeled) == 12
    assert len(state.labeled) + len(state.unlabeled) == len(texts)
    for sid, bits in state.labeled.items():
        assert bits == gold[sid].vector("restrictions")


def test_run_loop_stops_when_pool_runs_out():
    texts, gold, pool, state, cfg, annotator = _loop_parts(
        n=9, iterations=50, batch_size=4, subsample_size=16
    )
    run_loop(state, cfg, annotator, pool)
    # 9 sentences at batch 4: two full batches, then a final short one
    assert state.unlabeled == set()
    assert len(state.history) == 3
    assert len(state.history[-1]["batch"]) == 1
    assert state.iteration == 3


def test_run_loop_checkpoints_each_iteration():
    texts, gold, pool, state, cfg, annotator = _loop_parts()
    seen = []
    run_loop(
        state, cfg, annotator, pool,
        checkpoint=lambda st: seen.append((st.iteration, len(st.labeled))),
    )
    assert seen == [(1, 4), (2, 8), (3, 12)]


def test_run_loop_records_test_scores_when_given():
    texts, gold, pool, state, cfg, annotator = _loop_parts(iterations=2)
    ids = sorted(texts)[-6:]
    xt = pool.rows(ids)
    yt = np.array([gold[sid].vector("restrictions") for sid in ids], dtype=float)
    run_loop(state, cfg, annotator, pool, test=(xt, yt))
    for record in state.history:
        scores = record["test"]
        assert set(scores) == {"macro_f1", "micro_f1"}
        assert 0.0 <= scores["macro_f1"] <= 1.0
        assert 0.0 <= scores["micro_f1"] <= 1.0


def test_resumed_loop_replays_identically(tmp_path):
    texts, gold, pool, state_a, cfg, _ = _loop_parts(n=24, iterations=4)
    run_loop(state_a, cfg, oracle_annotator(gold, "restrictions"), pool)

    _, _, _, state_b, _, _ = _loop_parts(n=24, iterations=4)
    half = dataclasses.replace(cfg, iterations=2)
    run_loop(state_b, half, oracle_annotator(gold, "restrictions"), pool)
    save_state(state_b, half, tmp_path / "al_state.json", tmp_path / "model")

    resumed, loaded_cfg = load_state(tmp_path / "al_state.json")
    assert resumed.iteration == 2
    full = dataclasses.replace(loaded_cfg, iterations=4)
    run_loop(resumed, full, oracle_annotator(gold, "restrictions"), pool)

    assert history_json(resumed) == history_json(state_a)
    assert resumed.labeled == state_a.labeled
    assert resumed.unlabeled == state_a.unlabeled
    assert np.array_equal(resumed.model.weights, state_a.model.weights)
    assert np.array_equal(resumed.model.bias, state_a.model.bias)


# ---------------------------------------------------------------------------
# Oracle annotator


def test_oracle_answers_from_gold():
    _, gold = _corpus(6)
    annotate = oracle_annotator(gold, "restrictions")
    out = annotate([_qi("s000"), _qi("s001"), _qi("s002")])
    assert out == {"s000": (1, 0), "s001": (0, 1), "s002": (0, 0)}


def test_oracle_rejects_bad_flip_rate():
    _, gold = _corpus(3)
    for rate in (-0.1, 1.5):
        with pytest.raises(ALError, match="flip rate"):
            oracle_annotator(gold, "restrictions", flip_rate=rate)


def test_oracle_missing_gold():
    _, gold = _corpus(3)
    annotate = oracle_annotator(gold, "restrictions")
    with pytest.raises(ALError, match="no gold labels for 'zzz'"):
        annotate([_qi("zzz")])


def test_oracle_flip_one_inverts_everything():
    _, gold = _corpus(6)
    annotate = oracle_annotator(gold, "restrictions", flip_rate=1.0, rng_seed=5)
    out = annotate([_qi("s000"), _qi("s002")])
    assert out["s000"] == (0, 1)
    assert out["s002"] == (1, 1)


def test_oracle_flips_ignore_batch_composition():
    _, gold = _corpus(12)
    annotate = oracle_annotator(gold, "restrictions", flip_rate=0.4, rng_seed=5)
    batch = [_qi(f"s{i:03d}") for i in range(12)]
    forward = annotate(batch)
    backward = annotate(list(reversed(batch)))
    assert forward == backward
    solo = annotate([_qi("s007")])
    assert solo["s007"] == forward["s007"]
    again = oracle_annotator(gold, "restrictions", flip_rate=0.4, rng_seed=5)
    assert again(batch) == forward


# ---------------------------------------------------------------------------
# Checkpoint files


def test_save_load_round_trip(tmp_path):
    texts, gold, pool, state, cfg, annotator = _loop_parts(n=12, iterations=2)
    run_loop(state, cfg, annotator, pool)
    save_state(state, cfg, tmp_path / "al_state.json", tmp_path / "model")
    assert (tmp_path / "model.npz").exists()

    obj = read_json(tmp_path / "al_state.json")
    assert obj["model_file"] == "model.npz"

    loaded, loaded_cfg = load_state(tmp_path / "al_state.json")
    assert loaded_cfg == cfg
    assert loaded.label_space == state.label_space
    assert loaded.labeled == state.labeled
    assert loaded.unlabeled == state.unlabeled
    assert loaded.iteration == state.iteration
    assert loaded.history == state.history
    assert loaded.model.version == state.model.version
    assert np.array_equal(loaded.model.weights, state.model.weights)
    assert np.array_equal(loaded.model.bias, state.model.bias)


def test_load_rejects_labeled_unlabeled_overlap(tmp_path):
    texts, gold, pool, state, cfg, annotator = _loop_parts(n=12, iterations=1)
    run_loop(state, cfg, annotator, pool)
    save_state(state, cfg, tmp_path / "al_state.json", tmp_path / "model")
    obj = read_json(tmp_path / "al_state.json")
    obj["unlabeled"].append(sorted(state.labeled)[0])
    atomic_write_json(obj, tmp_path / "al_state.json")
    with pytest.raises(ALError, match="both labeled and unlabeled"):
        load_state(tmp_path / "al_state.json")


def test_history_json_is_canonical():
    cold = classifier.cold_snapshot("restrictions", dim=DIM)
    state = ALState("restrictions", {}, set(), cold)
    state.history = [{"b": 1, "a": 2}]
    assert history_json(state) == '[{"a": 2, "b": 1}]'
