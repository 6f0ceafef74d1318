"""Pool-based active learning with uncertainty sampling.

Each round: subsample the unlabeled pool, predict, rank by mean
per-label binary entropy, select a class-balanced batch, hand it to an
annotator, fold the new labels into the training set, and retrain
warm-started from the previous model. The loop is decomposed into
propose/commit/retrain steps so an HTTP session can drive one round
across multiple requests; run_loop composes them for CLI use.

Randomness is re-seeded per iteration from (rng_seed, iteration), so a
resumed loop replays identically to an uninterrupted one.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from . import classifier
from .classifier import FeaturePool, ModelSnapshot, TrainConfig
from .fileio import atomic_write_json, read_json
from .labels import DEFAULT_SCHEMA, LabelSchema, LabelSet
from .metrics import prf1

SUBSAMPLE_SIZE = 4096
BATCH_SIZE = 10
ITERATIONS = 50


class ALError(ValueError):
    pass


@dataclass(frozen=True)
class ALConfig:
    label_space: str
    batch_size: int = BATCH_SIZE
    iterations: int = ITERATIONS
    subsample_size: int = SUBSAMPLE_SIZE
    rng_seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ALError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.subsample_size < self.batch_size:
            raise ALError(
                f"subsample_size {self.subsample_size} below batch_size {self.batch_size}"
            )
        if self.iterations < 0:
            raise ALError(f"iterations must be >= 0, got {self.iterations}")

    def to_json(self) -> dict:
        return {
            "label_space": self.label_space,
            "batch_size": self.batch_size,
            "iterations": self.iterations,
            "subsample_size": self.subsample_size,
            "rng_seed": self.rng_seed,
            "train": self.train.to_json(),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "ALConfig":
        kwargs = {k: obj[k] for k in (
            "label_space", "batch_size", "iterations", "subsample_size", "rng_seed"
        ) if k in obj}
        if "train" in obj:
            kwargs["train"] = TrainConfig.from_json(obj["train"])
        return cls(**kwargs)


@dataclass(frozen=True)
class QueryItem:
    sentence_id: str
    probabilities: tuple[float, ...]
    score: float

    def to_json(self) -> dict:
        return {
            "sentence_id": self.sentence_id,
            "probabilities": list(self.probabilities),
            "score": self.score,
        }


@dataclass
class ALState:
    label_space: str
    labeled: dict[str, tuple[int, ...]]
    unlabeled: set[str]
    model: ModelSnapshot
    iteration: int = 0
    history: list[dict] = field(default_factory=list)

    def check(self) -> None:
        overlap = set(self.labeled) & self.unlabeled
        if overlap:
            raise ALError(f"{len(overlap)} ids both labeled and unlabeled")


# An annotator maps a query batch to per-sentence multi-hot labels.
Annotator = Callable[[Sequence[QueryItem]], dict[str, tuple[int, ...]]]


def subsample_pool(
    unlabeled: set[str], n: int, rng: np.random.Generator
) -> list[str]:
    """Uniform subsample without replacement, stable under the rng seed."""
    pool = sorted(unlabeled)
    if len(pool) <= n:
        return pool
    picks = rng.choice(len(pool), size=n, replace=False)
    return [pool[i] for i in sorted(int(i) for i in picks)]


def uncertainty_score(probabilities: Sequence[float]) -> float:
    """Mean per-label binary entropy in bits; 0 and 1 contribute nothing."""
    total = 0.0
    for p in probabilities:
        if 0.0 < p < 1.0:
            total += -(p * np.log2(p) + (1.0 - p) * np.log2(1.0 - p))
    return float(total / len(probabilities))


def balanced_select(candidates: Sequence[QueryItem], k: int) -> list[QueryItem]:
    """Class-balanced batch selection.

    Candidates are bucketed under every label they are predicted to
    carry (threshold 0.5). Buckets are cycled in fixed label order,
    each visit taking its most uncertain unchosen candidate; a chosen
    candidate leaves all buckets. Whatever budget remains after the
    buckets run dry is filled with the globally most uncertain rest.
    """
    if k < 1:
        raise ALError(f"batch size must be >= 1, got {k}")
    if not candidates:
        return []
    ordered = sorted(candidates, key=lambda c: (-c.score, c.sentence_id))
    n_labels = len(ordered[0].probabilities)
    buckets: list[list[QueryItem]] = [[] for _ in range(n_labels)]
    for c in ordered:
        for li, bit in enumerate(classifier.decide(np.array(c.probabilities))):
            if bit:
                buckets[li].append(c)

    chosen: list[QueryItem] = []
    chosen_ids: set[str] = set()
    while len(chosen) < k:
        progressed = False
        for li in range(n_labels):
            if len(chosen) >= k:
                break
            bucket = buckets[li]
            while bucket and bucket[0].sentence_id in chosen_ids:
                bucket.pop(0)
            if bucket:
                c = bucket.pop(0)
                chosen.append(c)
                chosen_ids.add(c.sentence_id)
                progressed = True
        if not progressed:
            break
    for c in ordered:
        if len(chosen) >= k:
            break
        if c.sentence_id not in chosen_ids:
            chosen.append(c)
            chosen_ids.add(c.sentence_id)
    return chosen


def propose_batch(
    state: ALState,
    config: ALConfig,
    pool: FeaturePool,
) -> list[QueryItem]:
    """Deterministic pending batch for the state's current iteration.

    Recomputing without an intervening commit returns the identical
    batch, which is what makes the HTTP flow idempotent.
    """
    if not state.unlabeled:
        return []
    rng = np.random.default_rng([config.rng_seed, state.iteration])
    sub = subsample_pool(state.unlabeled, config.subsample_size, rng)
    probs = classifier.predict(state.model, pool.rows(sub))
    candidates = [
        QueryItem(
            sentence_id=sid,
            probabilities=tuple(float(p) for p in probs[i]),
            score=uncertainty_score(probs[i]),
        )
        for i, sid in enumerate(sub)
    ]
    return balanced_select(candidates, config.batch_size)


def commit_batch(
    state: ALState,
    batch: Sequence[QueryItem],
    assignments: Mapping[str, tuple[int, ...]],
) -> None:
    """Move the batch into the labeled pool; all-or-nothing.

    Assignments must cover exactly the batch ids; anything else leaves
    the state untouched.
    """
    batch_ids = {b.sentence_id for b in batch}
    got = set(assignments)
    if got != batch_ids:
        missing = sorted(batch_ids - got)[:3]
        foreign = sorted(got - batch_ids)[:3]
        raise ALError(
            f"assignments must cover the batch exactly; missing={missing} foreign={foreign}"
        )
    n_labels = len(state.model.labels)
    for sid, bits in assignments.items():
        if len(bits) != n_labels or any(b not in (0, 1) for b in bits):
            raise ALError(f"bad label vector for {sid}: {bits}")
    for sid, bits in assignments.items():
        state.labeled[sid] = tuple(int(b) for b in bits)
        state.unlabeled.discard(sid)


def retrain(
    state: ALState,
    config: ALConfig,
    pool: FeaturePool,
    validation: tuple[sp.csr_matrix, np.ndarray] | None = None,
) -> ModelSnapshot:
    """Warm-start training on the full labeled pool, in sorted id order."""
    ids = sorted(state.labeled)
    x = pool.rows(ids)
    y = np.array([state.labeled[sid] for sid in ids], dtype=float)
    state.model = classifier.train(state.model, (x, y), validation, config.train)
    return state.model


def _test_scores(
    model: ModelSnapshot, test: tuple[sp.csr_matrix, np.ndarray]
) -> dict:
    xt, yt = test
    probs = classifier.predict(model, xt)
    pred = (probs >= 0.5).astype(int)
    report = prf1(yt.astype(int), pred, model.labels)
    return {"macro_f1": report.macro_f1, "micro_f1": report.micro_f1}


def run_loop(
    state: ALState,
    config: ALConfig,
    annotator: Annotator,
    pool: FeaturePool,
    validation: tuple[sp.csr_matrix, np.ndarray] | None = None,
    test: tuple[sp.csr_matrix, np.ndarray] | None = None,
    checkpoint: Callable[[ALState], None] | None = None,
) -> ALState:
    """Run the loop until the iteration budget or the pool runs out."""
    state.check()
    total = len(state.labeled) + len(state.unlabeled)
    while state.iteration < config.iterations and state.unlabeled:
        batch = propose_batch(state, config, pool)
        assignments = annotator(batch)
        commit_batch(state, batch, assignments)
        model = retrain(state, config, pool, validation)
        record = {
            "iteration": state.iteration,
            "batch": [b.sentence_id for b in batch],
            "labels": {sid: list(assignments[sid]) for sid in sorted(assignments)},
            "model_version": model.version,
            "monitor_loss": model.provenance.get("monitor_loss"),
            "labeled_size": len(state.labeled),
        }
        if test is not None:
            record["test"] = _test_scores(model, test)
        state.history.append(record)
        state.iteration += 1
        assert len(state.labeled) + len(state.unlabeled) == total
        if checkpoint is not None:
            checkpoint(state)
    return state


def oracle_annotator(
    gold: Mapping[str, LabelSet],
    label_space: str,
    flip_rate: float = 0.0,
    rng_seed: int = 0,
    schema: LabelSchema = DEFAULT_SCHEMA,
) -> Annotator:
    """Annotator that answers from gold labels.

    With a positive flip rate each label flips independently; the flip
    pattern depends only on (rng_seed, sentence_id), so resumed runs
    and reordered batches see the same answers.
    """
    if not 0.0 <= flip_rate <= 1.0:
        raise ALError(f"flip rate must be in [0,1], got {flip_rate}")
    n_labels = len(schema.space(label_space))

    def annotate(batch: Sequence[QueryItem]) -> dict[str, tuple[int, ...]]:
        out: dict[str, tuple[int, ...]] = {}
        for item in batch:
            labels = gold.get(item.sentence_id)
            if labels is None:
                raise ALError(f"no gold labels for {item.sentence_id!r}")
            bits = list(labels.vector(label_space))
            if flip_rate > 0.0:
                rng = np.random.default_rng(
                    [rng_seed, zlib.crc32(item.sentence_id.encode())]
                )
                flips = rng.random(n_labels) < flip_rate
                bits = [int(b ^ f) for b, f in zip(bits, flips)]
            out[item.sentence_id] = tuple(bits)
        return out

    return annotate


# ---------------------------------------------------------------------------
# Checkpointing


def save_state(state: ALState, config: ALConfig, path: str | Path, model_path: str | Path) -> None:
    """Persist state and model; the state file references the model."""
    path = Path(path)
    model_path = state.model.save(model_path)
    obj = {
        "label_space": state.label_space,
        "labeled": {sid: list(bits) for sid, bits in sorted(state.labeled.items())},
        "unlabeled": sorted(state.unlabeled),
        "iteration": state.iteration,
        "history": state.history,
        "config": config.to_json(),
        "model_file": model_path.name,
    }
    atomic_write_json(obj, path)


def load_state(path: str | Path) -> tuple[ALState, ALConfig]:
    path = Path(path)
    obj = read_json(path)
    model = ModelSnapshot.load(path.parent / obj["model_file"])
    state = ALState(
        label_space=obj["label_space"],
        labeled={sid: tuple(int(b) for b in bits) for sid, bits in obj["labeled"].items()},
        unlabeled=set(obj["unlabeled"]),
        model=model,
        iteration=int(obj["iteration"]),
        history=list(obj["history"]),
    )
    state.check()
    return state, ALConfig.from_json(obj["config"])


def history_json(state: ALState) -> str:
    """Canonical history serialization used for determinism checks."""
    return json.dumps(state.history, sort_keys=True, ensure_ascii=False)
