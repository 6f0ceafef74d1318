"""Label schema, multi-hot label sets, and the keyword table.

Two disjoint label spaces are used throughout: restriction labels
(what kind of limitation a sentence states) and topic labels (what
the limitation is about). Label order is fixed and defines the
positions of the multi-hot vectors everywhere in the pipeline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

RESTRICTION_LABELS: tuple[str, ...] = ("Prohibition", "Requirement")
TOPIC_LABELS: tuple[str, ...] = (
    "Weather",
    "Construction",
    "Geotechnics",
    "RestrictedArea",
    "Planting",
    "Environment",
    "Disposal",
)

RESTRICTIONS = "restrictions"
TOPICS = "topics"
LABEL_SPACES = (RESTRICTIONS, TOPICS)

# Name of the catch-all topic node for restrictions without a topic.
# Reserved: must never appear as a schema topic label.
GENERIC_TOPIC = "Generic"

# Default German keyword stems per label. Matching is case-insensitive
# substring matching, so stems cover inflected forms.
DEFAULT_KEYWORDS: dict[str, list[str]] = {
    "Prohibition": [
        "verboten", "nicht gestattet", "nicht erlaubt",
        "untersagt", "unbefugt", "darf nicht",
    ],
    "Requirement": ["müssen", "muss", "darf", "nur", "maximal", "beachten"],
    "Weather": [
        "nebel", "wetter", "sturm", "starkniederschlag", "frost",
        "trockenheit", "regen", "schnee", "temperatur",
    ],
    "Construction": ["bebauung", "überbauung", "errichten", "fenster", "mauer"],
    "Geotechnics": ["geotechnsch", "gelände", "risse", "absenkung", "boden", "sohle"],
    "RestrictedArea": ["aufenthalt", "uferseitig", "betreten", "befahren", "anlegen"],
    "Planting": ["bäume", "baum", "pflanzen", "fällen", "forst"],
    "Environment": ["nester", "arten", "umwelt", "geschützt"],
    "Disposal": ["lager", "entsorg", "abfall", "verbringen", "verklappen"],
}


class SchemaError(ValueError):
    """Raised when a label, label space, or keyword table is invalid."""


@dataclass(frozen=True)
class LabelSchema:
    """Fixed, ordered label spaces for restrictions and topics."""

    restrictions: tuple[str, ...] = RESTRICTION_LABELS
    topics: tuple[str, ...] = TOPIC_LABELS

    def __post_init__(self) -> None:
        overlap = set(self.restrictions) & set(self.topics)
        if overlap:
            raise SchemaError(f"label spaces must be disjoint, got {sorted(overlap)}")
        if GENERIC_TOPIC in self.restrictions or GENERIC_TOPIC in self.topics:
            raise SchemaError(f"{GENERIC_TOPIC!r} is reserved for the generic topic node")

    def space(self, name: str) -> tuple[str, ...]:
        if name == RESTRICTIONS:
            return self.restrictions
        if name == TOPICS:
            return self.topics
        raise SchemaError(f"unknown label space {name!r}")

    @property
    def all_labels(self) -> tuple[str, ...]:
        return self.restrictions + self.topics

    def index(self, label: str) -> int:
        """Position of a label within the concatenated 9-label ordering."""
        try:
            return self.all_labels.index(label)
        except ValueError:
            raise SchemaError(f"unknown label {label!r}") from None


DEFAULT_SCHEMA = LabelSchema()


@dataclass(frozen=True)
class LabelSet:
    """Multi-hot assignment over both label spaces.

    The all-zero set is legal: a sentence may carry zero, one, or
    multiple labels in either space.
    """

    restrictions: tuple[int, ...] = field(default=(0,) * len(RESTRICTION_LABELS))
    topics: tuple[int, ...] = field(default=(0,) * len(TOPIC_LABELS))

    def __post_init__(self) -> None:
        for vec, space in ((self.restrictions, RESTRICTION_LABELS), (self.topics, TOPIC_LABELS)):
            if len(vec) != len(space):
                raise SchemaError(f"multi-hot length {len(vec)} does not match space size {len(space)}")
            if any(v not in (0, 1) for v in vec):
                raise SchemaError(f"multi-hot entries must be 0 or 1, got {vec}")

    @classmethod
    def from_names(cls, names: Iterable[str], schema: LabelSchema = DEFAULT_SCHEMA) -> "LabelSet":
        names = set(names)
        unknown = names - set(schema.all_labels)
        if unknown:
            raise SchemaError(f"unknown labels {sorted(unknown)}")
        return cls(
            restrictions=tuple(int(lbl in names) for lbl in schema.restrictions),
            topics=tuple(int(lbl in names) for lbl in schema.topics),
        )

    def names(self, schema: LabelSchema = DEFAULT_SCHEMA) -> tuple[str, ...]:
        return tuple(
            lbl
            for lbl, v in zip(schema.all_labels, self.restrictions + self.topics)
            if v
        )

    def vector(self, space: str) -> tuple[int, ...]:
        if space == RESTRICTIONS:
            return self.restrictions
        if space == TOPICS:
            return self.topics
        raise SchemaError(f"unknown label space {space!r}")

    @property
    def combined(self) -> tuple[int, ...]:
        """Concatenated 9-dim multi-hot (restrictions then topics)."""
        return self.restrictions + self.topics

    def is_empty(self) -> bool:
        return not any(self.combined)

    def to_json(self, schema: LabelSchema = DEFAULT_SCHEMA) -> dict[str, list[str]]:
        return {
            RESTRICTIONS: [l for l, v in zip(schema.restrictions, self.restrictions) if v],
            TOPICS: [l for l, v in zip(schema.topics, self.topics) if v],
        }

    @classmethod
    def from_json(cls, obj: Mapping[str, Sequence[str]], schema: LabelSchema = DEFAULT_SCHEMA) -> "LabelSet":
        names = list(obj.get(RESTRICTIONS, ())) + list(obj.get(TOPICS, ()))
        return cls.from_names(names, schema)


EMPTY_LABELSET = LabelSet()


@dataclass(frozen=True)
class AnnotationRecord:
    """One annotator's label assignment for one sentence."""

    sentence_id: str
    annotator_id: str
    labels: LabelSet


def validate_keyword_table(table: Mapping[str, Sequence[str]], schema: LabelSchema = DEFAULT_SCHEMA) -> dict[str, list[str]]:
    """Check a keyword table against the schema and normalize it.

    Every label must have at least one keyword; stems are lowercased.
    """
    out: dict[str, list[str]] = {}
    for label in schema.all_labels:
        stems = [str(k).lower() for k in table.get(label, ())]
        if not stems:
            raise SchemaError(f"label {label!r} has no keywords")
        out[label] = stems
    unknown = set(table) - set(schema.all_labels)
    if unknown:
        raise SchemaError(f"keyword table names unknown labels {sorted(unknown)}")
    return out


def load_keyword_table(path: str | Path, schema: LabelSchema = DEFAULT_SCHEMA) -> dict[str, list[str]]:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return validate_keyword_table(raw, schema)
