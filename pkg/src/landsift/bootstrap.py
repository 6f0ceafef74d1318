"""Initial dataset construction: keyword bootstrap, vote merge, split.

The unlabeled corpus is far too large to annotate exhaustively, so the
first labeled dataset is bootstrapped: sentences hitting restriction
keywords form a candidate pool, per-topic caps keep frequent topics
from swamping it, and a random remainder keeps the label distribution
honest. Multi-annotator labels are merged by strict majority, and the
result is split train/validation/test by iterative stratification.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .labels import (
    DEFAULT_KEYWORDS,
    DEFAULT_SCHEMA,
    AnnotationRecord,
    LabelSchema,
    LabelSet,
)
from .textprep import Sentence

POOL_TARGET_SIZE = 2000
TOPIC_MATCH_THRESHOLD = 300  # above this, the flat cap applies
TOPIC_CAP = 150
MIN_RANDOM_FILL = 700
DEFAULT_RATIOS = (1, 1, 2)

SPLIT_NAMES = ("train", "validation", "test")


class BootstrapError(ValueError):
    pass


def match_keywords(
    text: str, table: Mapping[str, Sequence[str]] = DEFAULT_KEYWORDS
) -> set[str]:
    """Labels whose keyword stems occur as substrings of the sentence.

    Matching is case-insensitive and deliberately substring-based: the
    table holds stems ('entsorg', 'lager') that must catch inflected
    forms.
    """
    low = text.lower()
    return {label for label, stems in table.items() if any(s in low for s in stems)}


def distinct_hits(text: str, stems: Sequence[str]) -> int:
    low = text.lower()
    return sum(1 for s in stems if s in low)


@dataclass
class PoolStats:
    corpus_size: int = 0
    candidates: int = 0
    topic_matched: dict[str, int] = field(default_factory=dict)
    topic_taken: dict[str, int] = field(default_factory=dict)
    keyword_selected: int = 0
    random_fill: int = 0

    def to_json(self) -> dict:
        return {
            "corpus_size": self.corpus_size,
            "candidates": self.candidates,
            "topic_matched": self.topic_matched,
            "topic_taken": self.topic_taken,
            "keyword_selected": self.keyword_selected,
            "random_fill": self.random_fill,
        }


def build_candidate_pool(
    sentences: Sequence[Sentence],
    table: Mapping[str, Sequence[str]] = DEFAULT_KEYWORDS,
    target_size: int = POOL_TARGET_SIZE,
    rng_seed: int = 0,
    schema: LabelSchema = DEFAULT_SCHEMA,
    topic_threshold: int = TOPIC_MATCH_THRESHOLD,
    topic_cap: int = TOPIC_CAP,
    min_random_fill: int = MIN_RANDOM_FILL,
) -> tuple[list[Sentence], PoolStats]:
    """Select the annotation pool from the valid sentence corpus.

    Restriction-keyword matches form the candidate pool. Per topic:
    more than topic_threshold matching candidates -> keep topic_cap of
    them, otherwise keep half (floor), ranked by distinct keyword hits
    with random tie-breaks. The rest of the pool is drawn uniformly
    from unselected sentences and must cover at least min_random_fill
    slots, so the pool is never purely keyword-shaped.
    """
    corpus = [s for s in sentences if s.valid]
    if len(corpus) < target_size:
        raise BootstrapError(
            f"corpus has {len(corpus)} valid sentences, target is {target_size}: "
            f"short by {target_size - len(corpus)}"
        )
    rng = np.random.default_rng(rng_seed)
    stats = PoolStats(corpus_size=len(corpus))

    matches = {s.sentence_id: match_keywords(s.text, table) for s in corpus}
    restriction_labels = set(schema.restrictions)
    candidates = [s for s in corpus if matches[s.sentence_id] & restriction_labels]
    stats.candidates = len(candidates)

    selected: dict[str, Sentence] = {}
    for topic in schema.topics:
        topical = [s for s in candidates if topic in matches[s.sentence_id]]
        stats.topic_matched[topic] = len(topical)
        take = topic_cap if len(topical) > topic_threshold else len(topical) // 2
        stats.topic_taken[topic] = take
        # most distinct stems first; ties settled by the seeded rng
        ranked = sorted(
            topical,
            key=lambda s: (-distinct_hits(s.text, table[topic]), rng.random()),
        )
        for s in ranked[:take]:
            selected[s.sentence_id] = s

    stats.keyword_selected = len(selected)
    fill = target_size - len(selected)
    if fill < min_random_fill:
        raise BootstrapError(
            f"random remainder {fill} below the required {min_random_fill}; "
            f"keyword selection is swamping the pool ({len(selected)} selected)"
        )
    remaining = [s for s in corpus if s.sentence_id not in selected]
    picks = rng.choice(len(remaining), size=fill, replace=False)
    for i in picks:
        s = remaining[int(i)]
        selected[s.sentence_id] = s
    stats.random_fill = fill

    order = {s.sentence_id: i for i, s in enumerate(corpus)}
    pool = sorted(selected.values(), key=lambda s: order[s.sentence_id])
    assert len(pool) == target_size
    return pool, stats


def majority_vote(records: Sequence[AnnotationRecord]) -> LabelSet:
    """Merge one sentence's annotations label-wise by strict majority.

    A label survives iff strictly more than half the annotators set it;
    with even annotator counts a tie drops the label.
    """
    if not records:
        raise BootstrapError("majority_vote needs at least one annotation")
    sid = records[0].sentence_id
    seen_annotators = set()
    for r in records:
        if r.sentence_id != sid:
            raise BootstrapError(f"mixed sentences in vote: {sid!r} vs {r.sentence_id!r}")
        if r.annotator_id in seen_annotators:
            raise BootstrapError(f"duplicate annotator {r.annotator_id!r} for {sid!r}")
        seen_annotators.add(r.annotator_id)
    n = len(records)
    votes = np.zeros(len(records[0].labels.combined), dtype=int)
    for r in records:
        votes += np.asarray(r.labels.combined)
    out = tuple(int(2 * v > n) for v in votes)
    k = len(records[0].labels.restrictions)
    return LabelSet(restrictions=out[:k], topics=out[k:])


def merge_annotations(records: Sequence[AnnotationRecord]) -> dict[str, LabelSet]:
    """Group annotation records by sentence and majority-vote each."""
    by_sentence: dict[str, list[AnnotationRecord]] = {}
    for r in records:
        by_sentence.setdefault(r.sentence_id, []).append(r)
    return {sid: majority_vote(recs) for sid, recs in by_sentence.items()}


@dataclass(frozen=True)
class LabeledSentence:
    sentence_id: str
    text: str
    labels: LabelSet

    def to_json(self) -> dict:
        return {
            "sentence_id": self.sentence_id,
            "text": self.text,
            "labels": self.labels.to_json(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LabeledSentence":
        return cls(
            sentence_id=str(obj["sentence_id"]),
            text=str(obj["text"]),
            labels=LabelSet.from_json(obj["labels"]),
        )


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[str, ...]
    validation: tuple[str, ...]
    test: tuple[str, ...]

    def part(self, name: str) -> tuple[str, ...]:
        if name not in SPLIT_NAMES:
            raise BootstrapError(f"unknown split {name!r}")
        return getattr(self, name)

    def to_json(self) -> dict:
        return {name: list(self.part(name)) for name in SPLIT_NAMES}

    @classmethod
    def from_json(cls, obj: dict) -> "DatasetSplit":
        return cls(*(tuple(str(i) for i in obj[name]) for name in SPLIT_NAMES))


def split_sizes(n: int, ratios: Sequence[int] = DEFAULT_RATIOS) -> tuple[int, ...]:
    """Integer split sizes summing to n, largest-remainder rounding."""
    if len(ratios) != len(SPLIT_NAMES) or any(r <= 0 for r in ratios):
        raise BootstrapError(f"need {len(SPLIT_NAMES)} positive ratios, got {ratios}")
    total = sum(ratios)
    exact = [n * r / total for r in ratios]
    sizes = [int(e) for e in exact]
    leftovers = sorted(
        range(len(ratios)), key=lambda i: (-(exact[i] - sizes[i]), i)
    )
    for i in leftovers[: n - sum(sizes)]:
        sizes[i] += 1
    return tuple(sizes)


def stratified_split(
    dataset: Sequence[LabeledSentence],
    ratios: Sequence[int] = DEFAULT_RATIOS,
    rng_seed: int = 0,
) -> DatasetSplit:
    """Iterative stratification over the combined 9-label space.

    Repeatedly takes the label with the fewest unassigned examples and
    hands each of its examples to the split with the greatest remaining
    demand for that label; ties go to the split with the most remaining
    capacity, then uniformly at random. Full splits never receive more
    examples, so the sizes come out exactly. Unlabeled sentences are
    distributed last, by capacity.
    """
    if not dataset:
        raise BootstrapError("cannot split an empty dataset")
    rng = np.random.default_rng(rng_seed)
    n = len(dataset)
    sizes = split_sizes(n, ratios)
    n_splits = len(sizes)
    n_labels = len(dataset[0].labels.combined)

    vectors = np.array([d.labels.combined for d in dataset], dtype=int)
    totals = vectors.sum(axis=0)
    # fractional per-split demand for each label
    demand = np.array([[totals[l] * sizes[j] / n for l in range(n_labels)] for j in range(n_splits)])
    capacity = list(sizes)
    assignment = [-1] * n

    def pick_split(scores: Sequence[float]) -> int:
        open_splits = [j for j in range(n_splits) if capacity[j] > 0]
        best = max(scores[j] for j in open_splits)
        tied = [j for j in open_splits if scores[j] == best]
        if len(tied) > 1:
            top_cap = max(capacity[j] for j in tied)
            tied = [j for j in tied if capacity[j] == top_cap]
        if len(tied) > 1:
            return tied[int(rng.integers(len(tied)))]
        return tied[0]

    unassigned = {i for i in range(n) if vectors[i].any()}
    while unassigned:
        counts = [sum(1 for i in unassigned if vectors[i][l]) for l in range(n_labels)]
        label = min(
            (l for l in range(n_labels) if counts[l] > 0), key=lambda l: counts[l]
        )
        for i in sorted(i for i in unassigned if vectors[i][label]):
            j = pick_split(demand[:, label])
            assignment[i] = j
            capacity[j] -= 1
            demand[j] -= vectors[i]
            unassigned.discard(i)

    for i in range(n):
        if assignment[i] < 0:
            j = pick_split(capacity)
            assignment[i] = j
            capacity[j] -= 1

    parts: list[list[str]] = [[] for _ in range(n_splits)]
    for i, d in enumerate(dataset):
        parts[assignment[i]].append(d.sentence_id)
    return DatasetSplit(*(tuple(p) for p in parts))


def write_dataset(dataset: Sequence[LabeledSentence], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in dataset:
            fh.write(json.dumps(d.to_json(), ensure_ascii=False, sort_keys=True) + "\n")


def read_dataset(path: str | Path) -> list[LabeledSentence]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(LabeledSentence.from_json(json.loads(line)))
    return out


def write_annotations(records: Sequence[AnnotationRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            obj = {
                "sentence_id": r.sentence_id,
                "annotator_id": r.annotator_id,
                "labels": r.labels.to_json(),
            }
            fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")


def read_annotations(path: str | Path) -> list[AnnotationRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            out.append(
                AnnotationRecord(
                    sentence_id=str(obj["sentence_id"]),
                    annotator_id=str(obj["annotator_id"]),
                    labels=LabelSet.from_json(obj["labels"]),
                )
            )
    return out
