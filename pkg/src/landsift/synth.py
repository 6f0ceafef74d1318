"""Synthetic corpus generator for desk-scale experiments.

Generates German-ish restriction sentences with known gold labels:
positive labels plant their keywords at a configurable signal
strength, the rest of the positives are expressed through latent
phrases that contain no keyword at all, and a noise rate plants false
keywords on negative sentences. The output mirrors the real pipeline
inputs: OCR pages (with hyphen wraps and hard line breaks), document
metadata, area polygons, and weather isobands.

Every template fragment is screened so it matches exactly the keyword
labels it is supposed to and nothing else; the screen runs at
generator construction, so a careless vocabulary edit fails fast.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .labels import DEFAULT_KEYWORDS, DEFAULT_SCHEMA, LabelSchema, LabelSet
from .bootstrap import match_keywords
from .ocr_ingest import PageText
from .textprep import Sentence, check_validity

# ---------------------------------------------------------------------------
# Template vocabulary. Everything here is screened against the keyword
# table: subjects/tails/neutral phrases must match no label, latent
# phrases must match no label, plant frames must match exactly one.

_SUBJECTS_SG = (
    "Die Nutzung der Teilfläche",
    "Der Zugang zur Halde",
    "Die Zuwegung im Abschnitt Ost",
    "Der Einsatz schwerer Technik",
    "Die Begehung der Ortslage",
    "Das Vorhaben am Standort",
    "Die Entnahme von Proben",
    "Der Transport über die Zufahrt",
    "Die Erweiterung der Anlage",
    "Das Abstellen von Geräten",
    "Die Instandsetzung der Leitung",
)

_SUBJECTS_PL = (
    "Die Arbeiten im Abschnitt Süd",
    "Die Maßnahmen zur Sicherung",
    "Die Transporte zur Halde",
    "Die Kontrollen am Standort",
    "Die Prüfungen der Unterlagen",
    "Die Termine zur Übergabe",
)

_NEUTRAL_SG = ("wird derzeit geprüft", "ist dokumentiert", "wurde erneut aufgenommen")
_NEUTRAL_PL = ("werden derzeit geprüft", "sind dokumentiert", "wurden erneut aufgenommen")

_TAILS = (
    "nach Rücksprache mit der Gemeinde",
    "gemäß dem aktuellen Verzeichnis",
    "laut Protokoll",
    "im laufenden Verfahren",
    "bis auf Weiteres",
    "nach schriftlicher Freigabe",
    "entsprechend der Stellungnahme",
)

# restriction frames: (number, frame text); the frame plants the stem
_PLANT_RESTRICTION: dict[str, tuple[tuple[str, str], ...]] = {
    "Prohibition": (
        ("sg", "ist verboten"),
        ("sg", "ist nicht gestattet"),
        ("sg", "ist nicht erlaubt"),
        ("sg", "ist untersagt"),
        ("sg", "bleibt unbefugten Personen verwehrt"),
        ("pl", "sind verboten"),
        ("pl", "sind nicht gestattet"),
        ("pl", "sind nicht erlaubt"),
        ("pl", "sind untersagt"),
        ("pl", "bleiben unbefugten Personen verwehrt"),
    ),
    "Requirement": (
        ("sg", "muss dokumentiert werden"),
        ("sg", "darf erst nach Freigabe erfolgen"),
        ("sg", "ist nur nach Abstimmung zulässig"),
        ("sg", "ist auf maximal zwölf Meter begrenzt"),
        ("sg", "ist zwingend zu beachten"),
        ("pl", "müssen fristgerecht erfolgen"),
        ("pl", "müssen dokumentiert werden"),
        ("pl", "sind auf maximal zwölf Meter begrenzt"),
        ("pl", "sind zwingend zu beachten"),
        ("pl", "sind nur nach Abstimmung zulässig"),
    ),
}

_LATENT_RESTRICTION: dict[str, dict[str, tuple[str, ...]]] = {
    "Prohibition": {
        "sg": ("ist unzulässig", "ist vollständig ausgeschlossen", "ist zu unterlassen"),
        "pl": ("sind unzulässig", "sind vollständig ausgeschlossen", "sind zu unterlassen"),
    },
    "Requirement": {
        "sg": ("ist erforderlich", "ist rechtzeitig anzuzeigen", "ist schriftlich festzuhalten"),
        "pl": ("sind erforderlich", "sind rechtzeitig anzuzeigen", "sind schriftlich festzuhalten"),
    },
}

# topic fragments planting one keyword stem each
_PLANT_TOPIC: dict[str, tuple[str, ...]] = {
    "Weather": (
        "bei Nebel",
        "bei schlechtem Wetter",
        "bei Sturm",
        "bei Starkniederschlag",
        "bei Frost",
        "bei anhaltender Trockenheit",
        "bei Regen",
        "bei Schnee",
        "bei niedriger Temperatur",
    ),
    "Construction": (
        "für die Bebauung",
        "bei einer Überbauung",
        "beim Errichten von Gebäuden",
        "an Fenstern",
        "an der Mauer",
    ),
    "Geotechnics": (
        "aus geotechnschen Gründen",
        "im Gelände",
        "wegen Rissen",
        "wegen der Absenkung",
        "im Boden",
        "an der Sohle",
    ),
    "RestrictedArea": (
        "für den Aufenthalt",
        "im uferseitigen Abschnitt",
        "beim Betreten",
        "beim Befahren",
        "beim Anlegen von Wegen",
    ),
    "Planting": (
        "an den Bäumen",
        "am Baum",
        "bei den Pflanzen",
        "beim Fällen",
        "im Forst",
    ),
    "Environment": (
        "wegen der Nester",
        "zum Schutz seltener Arten",
        "mit Rücksicht auf die Umwelt",
        "im geschützten Bereich",
    ),
    "Disposal": (
        "im Lager",
        "bei der Entsorgung",
        "für Abfall",
        "beim Verbringen von Material",
        "beim Verklappen",
    ),
}

_LATENT_TOPIC: dict[str, tuple[str, ...]] = {
    "Weather": ("bei widriger Witterung", "in Hitzeperioden", "bei Glätte"),
    "Construction": ("an Gebäuden", "für bauliche Vorhaben", "an Hochbauten"),
    "Geotechnics": (
        "wegen möglicher Setzungen",
        "aus Gründen der Standsicherheit",
        "im lockeren Untergrund",
    ),
    "RestrictedArea": ("in der Sperrzone", "im abgesperrten Teil", "vor dem Kontrollpunkt"),
    "Planting": ("zwischen den Gehölzen", "an den Sträuchern", "zur Begrünung"),
    "Environment": ("im Biotop", "während der Brutzeit", "im angrenzenden Lebensraum"),
    "Disposal": ("an der Deponie", "beim Abtransport des Aushubs", "für Reststoffe"),
}

_REGIONS = ("Lausitz", "Mitteldeutschland")
_AREA_CATEGORIES = ("Kippe", "Restsee", "Betriebsfläche", "Böschung")


class SynthError(ValueError):
    pass


def verify_templates(
    table: Mapping[str, Sequence[str]] = DEFAULT_KEYWORDS,
    schema: LabelSchema = DEFAULT_SCHEMA,
) -> None:
    """Check every template fragment against the keyword table.

    Plant frames must match exactly their own label; everything else
    must match nothing. Raises SynthError on the first violation.
    """

    def expect(fragment: str, want: set[str]) -> None:
        got = match_keywords(fragment, table)
        if got != want:
            raise SynthError(
                f"template fragment {fragment!r} matches {sorted(got)}, expected {sorted(want)}"
            )

    for label, frames in _PLANT_RESTRICTION.items():
        for _, frame in frames:
            expect(frame, {label})
    for topic, fragments in _PLANT_TOPIC.items():
        for frag in fragments:
            expect(frag, {topic})
    for label, by_number in _LATENT_RESTRICTION.items():
        for frames in by_number.values():
            for frame in frames:
                expect(frame, set())
    for fragments in _LATENT_TOPIC.values():
        for frag in fragments:
            expect(frag, set())
    for frag in _SUBJECTS_SG + _SUBJECTS_PL + _NEUTRAL_SG + _NEUTRAL_PL + _TAILS:
        expect(frag, set())
    missing = set(schema.topics) - set(_PLANT_TOPIC)
    if missing:
        raise SynthError(f"no plant fragments for topics {sorted(missing)}")


# label marginals observed in a 2000-sentence annotation round
DEFAULT_PRIORS: dict[str, float] = {
    "Prohibition": 0.0935,
    "Requirement": 0.2985,
    "Weather": 0.034,
    "Construction": 0.168,
    "Geotechnics": 0.068,
    "RestrictedArea": 0.1365,
    "Planting": 0.047,
    "Environment": 0.1355,
    "Disposal": 0.069,
}


@dataclass
class SynthConfig:
    n_sentences: int = 6000
    priors: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_PRIORS))
    signal: float = 0.9
    noise: float = 0.05
    rng_seed: int = 0
    sentences_per_page: tuple[int, int] = (4, 8)
    pages_per_doc: tuple[int, int] = (1, 5)
    n_areas: int = 9
    ref_code_prob: float = 0.6

    def validate(self, schema: LabelSchema = DEFAULT_SCHEMA) -> None:
        if self.n_sentences < 0:
            raise SynthError(f"n_sentences must be >= 0, got {self.n_sentences}")
        unknown = set(self.priors) - set(schema.all_labels)
        if unknown:
            raise SynthError(f"priors for unknown labels {sorted(unknown)}")
        for label, p in self.priors.items():
            if not 0.0 <= p <= 1.0:
                raise SynthError(f"prior for {label} must be in [0,1], got {p}")
        if not 0.0 <= self.signal <= 1.0:
            raise SynthError(f"signal must be in [0,1], got {self.signal}")
        if not 0.0 <= self.noise <= 1.0:
            raise SynthError(f"noise rate must be in [0,1], got {self.noise}")
        for name, (lo, hi) in (
            ("sentences_per_page", self.sentences_per_page),
            ("pages_per_doc", self.pages_per_doc),
        ):
            if lo < 1 or hi < lo:
                raise SynthError(f"{name} range invalid: ({lo}, {hi})")
        if self.n_areas < 1:
            raise SynthError(f"n_areas must be >= 1, got {self.n_areas}")

    def to_json(self) -> dict:
        return {
            "n_sentences": self.n_sentences,
            "priors": self.priors,
            "signal": self.signal,
            "noise": self.noise,
            "rng_seed": self.rng_seed,
            "sentences_per_page": list(self.sentences_per_page),
            "pages_per_doc": list(self.pages_per_doc),
            "n_areas": self.n_areas,
            "ref_code_prob": self.ref_code_prob,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "SynthConfig":
        cfg = cls()
        for key in vars(cfg):
            if key in obj:
                value = obj[key]
                if key in ("sentences_per_page", "pages_per_doc"):
                    value = (int(value[0]), int(value[1]))
                setattr(cfg, key, value)
        cfg.validate()
        return cfg


def _pick(rng: np.random.Generator, options: Sequence) -> object:
    return options[int(rng.integers(len(options)))]


def _render_sentence(
    rng: np.random.Generator,
    gold: LabelSet,
    config: SynthConfig,
    schema: LabelSchema,
    force_ref: bool,
) -> str:
    number = "sg" if rng.random() < 0.7 else "pl"
    subject = str(_pick(rng, _SUBJECTS_SG if number == "sg" else _SUBJECTS_PL))
    if force_ref or rng.random() < config.ref_code_prob:
        subject += f" (Az {int(rng.integers(1, 1000))}/{int(rng.integers(1, 1000))})"

    noise_label = None
    if config.noise > 0 and rng.random() < config.noise:
        negatives = [
            lbl for lbl, v in zip(schema.all_labels, gold.combined) if not v
        ]
        if negatives:
            noise_label = str(_pick(rng, negatives))

    topic_fragments: list[str] = []
    for topic, bit in zip(schema.topics, gold.topics):
        if not bit:
            continue
        pool = _PLANT_TOPIC[topic] if rng.random() < config.signal else _LATENT_TOPIC[topic]
        topic_fragments.append(str(_pick(rng, pool)))
    if noise_label in schema.topics:
        topic_fragments.append(str(_pick(rng, _PLANT_TOPIC[noise_label])))

    verb_phrases: list[str] = []
    for label, bit in zip(schema.restrictions, gold.restrictions):
        if not bit:
            continue
        if rng.random() < config.signal:
            frames = [f for num, f in _PLANT_RESTRICTION[label] if num == number]
            verb_phrases.append(str(_pick(rng, frames)))
        else:
            verb_phrases.append(str(_pick(rng, _LATENT_RESTRICTION[label][number])))
    if noise_label in schema.restrictions:
        frames = [f for num, f in _PLANT_RESTRICTION[noise_label] if num == number]
        verb_phrases.append(str(_pick(rng, frames)))
    if not verb_phrases:
        verb_phrases.append(str(_pick(rng, _NEUTRAL_SG if number == "sg" else _NEUTRAL_PL)))

    parts = [subject]
    parts.extend(topic_fragments)
    parts.append(" und ".join(verb_phrases))
    if rng.random() < 0.5:
        parts.append(str(_pick(rng, _TAILS)))
    return " ".join(parts) + "."


def generate_synthetic_corpus(
    config: SynthConfig, schema: LabelSchema = DEFAULT_SCHEMA
) -> tuple[list[str], list[LabelSet]]:
    """Generate unique sentences with gold labels, deterministic under seed."""
    config.validate(schema)
    verify_templates(schema=schema)
    rng = np.random.default_rng(config.rng_seed)
    n = config.n_sentences
    priors = np.array([config.priors.get(lbl, 0.0) for lbl in schema.all_labels])
    gold_matrix = (rng.random((n, len(priors))) < priors).astype(int)
    k = len(schema.restrictions)

    sentences: list[str] = []
    gold: list[LabelSet] = []
    seen: set[str] = set()
    for i in range(n):
        labels = LabelSet(
            restrictions=tuple(int(v) for v in gold_matrix[i, :k]),
            topics=tuple(int(v) for v in gold_matrix[i, k:]),
        )
        text = ""
        for attempt in range(200):
            text = _render_sentence(rng, labels, config, schema, force_ref=attempt > 0)
            if text not in seen:
                break
        else:
            raise SynthError(f"could not generate a unique sentence after 200 tries (i={i})")
        reason = check_validity(text)
        if reason is not None:
            raise SynthError(f"generated invalid sentence ({reason}): {text!r}")
        seen.add(text)
        sentences.append(text)
        gold.append(labels)
    return sentences, gold


# ---------------------------------------------------------------------------
# Page, document and geo fixture assembly


def _wrap_page_text(rng: np.random.Generator, sentence_texts: Sequence[str]) -> str:
    """Join sentences into page text with line breaks and hyphen wraps."""
    words = " ".join(sentence_texts).split(" ")
    # hyphen-wrap up to 2 long, purely alphabetic words
    eligible = [
        i
        for i, w in enumerate(words)
        if len(w) >= 8 and w.isalpha() and "-" not in w
    ]
    if eligible:
        count = min(len(eligible), int(rng.integers(0, 3)))
        for i in rng.choice(len(eligible), size=count, replace=False):
            wi = eligible[int(i)]
            w = words[wi]
            cut = int(rng.integers(3, len(w) - 2))
            if w[cut].islower():
                words[wi] = w[:cut] + "-\n" + w[cut:]
    out: list[str] = []
    gap = int(rng.integers(7, 12))
    for i, w in enumerate(words):
        out.append(w)
        if i + 1 < len(words):
            if (i + 1) % gap == 0 and not w.endswith("\n"):
                out.append("\n")
            else:
                out.append(" ")
    return "".join(out)


def _grid_ring(x0: float, y0: float, size: float) -> list[list[float]]:
    return [
        [x0, y0],
        [x0 + size, y0],
        [x0 + size, y0 + size],
        [x0, y0 + size],
        [x0, y0],
    ]


@dataclass
class CorpusArtifacts:
    pages: list[PageText]
    gold_by_text: dict[str, LabelSet]
    metas: list[dict]
    areas_geojson: dict
    weather_geojson: dict


def build_corpus_artifacts(
    config: SynthConfig, schema: LabelSchema = DEFAULT_SCHEMA
) -> CorpusArtifacts:
    """Generate the full fixture set: pages, gold, metadata, geodata."""
    sentences, gold = generate_synthetic_corpus(config, schema)
    rng = np.random.default_rng([config.rng_seed, 1])

    gold_by_text = {t: g for t, g in zip(sentences, gold)}

    # chunk sentences into pages, pages into documents
    pages: list[PageText] = []
    page_sentences: list[list[str]] = []
    i = 0
    lo, hi = config.sentences_per_page
    while i < len(sentences):
        take = int(rng.integers(lo, hi + 1))
        page_sentences.append(sentences[i : i + take])
        i += take

    doc_pages: list[list[list[str]]] = []
    i = 0
    lo, hi = config.pages_per_doc
    while i < len(page_sentences):
        take = int(rng.integers(lo, hi + 1))
        doc_pages.append(page_sentences[i : i + take])
        i += take

    metas: list[dict] = []
    for d, pages_of_doc in enumerate(doc_pages):
        doc_id = f"synth-{d:04d}"
        area_ids = [f"A-{d % config.n_areas:02d}"]
        if rng.random() < 0.3:
            extra = f"A-{int(rng.integers(config.n_areas)):02d}"
            if extra not in area_ids:
                area_ids.append(extra)
        metas.append(
            {
                "doc_id": doc_id,
                "title": f"Nutzungsauflagen {doc_id}",
                "region": str(_pick(rng, _REGIONS)),
                "area_ids": area_ids,
            }
        )
        for p, sent_texts in enumerate(pages_of_doc, start=1):
            pages.append(
                PageText(
                    doc_id=doc_id,
                    page_no=p,
                    text=_wrap_page_text(rng, sent_texts),
                    ocr_score=round(float(rng.uniform(76.0, 99.0)), 1),
                )
            )

    # area grid in a planar projected CRS
    cols = max(1, math.ceil(math.sqrt(config.n_areas)))
    size = 1000.0
    x0, y0 = 4500000.0, 5650000.0
    features = []
    for a in range(config.n_areas):
        r, c = divmod(a, cols)
        features.append(
            {
                "type": "Feature",
                "properties": {
                    "area_id": f"A-{a:02d}",
                    "category": _AREA_CATEGORIES[a % len(_AREA_CATEGORIES)],
                    "name": f"Teilfläche {a:02d}",
                },
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [_grid_ring(x0 + c * size, y0 + r * size, size)],
                },
            }
        )
    areas_geojson = {"type": "FeatureCollection", "features": features}

    # weather isobands: three nested precipitation strips spanning the grid
    rows = math.ceil(config.n_areas / cols)
    width = cols * size
    height = rows * size
    bands = []
    for frac, value in ((1.0, 5.0), (2.0 / 3.0, 15.0), (1.0 / 3.0, 30.0)):
        ring = [
            [x0, y0],
            [x0 + width * frac, y0],
            [x0 + width * frac, y0 + height],
            [x0, y0 + height],
            [x0, y0],
        ]
        bands.append(
            {
                "type": "Feature",
                "properties": {"band_value": value},
                "geometry": {"type": "Polygon", "coordinates": [ring]},
            }
        )
    weather_geojson = {"type": "FeatureCollection", "features": bands}

    return CorpusArtifacts(pages, gold_by_text, metas, areas_geojson, weather_geojson)


def write_artifacts(artifacts: CorpusArtifacts, outdir: str | Path) -> dict[str, Path]:
    """Write the fixture files; returns a name → path map."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {
        "pages": outdir / "pages.jsonl",
        "gold": outdir / "gold.jsonl",
        "meta": outdir / "meta.jsonl",
        "areas": outdir / "areas.geojson",
        "weather": outdir / "weather.geojson",
    }
    with open(paths["pages"], "w", encoding="utf-8") as fh:
        for page in artifacts.pages:
            fh.write(json.dumps(page.to_json(), ensure_ascii=False, sort_keys=True) + "\n")
    with open(paths["gold"], "w", encoding="utf-8") as fh:
        for text, labels in artifacts.gold_by_text.items():
            obj = {"text": text, "labels": labels.to_json()}
            fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")
    with open(paths["meta"], "w", encoding="utf-8") as fh:
        for meta in artifacts.metas:
            fh.write(json.dumps(meta, ensure_ascii=False, sort_keys=True) + "\n")
    with open(paths["areas"], "w", encoding="utf-8") as fh:
        json.dump(artifacts.areas_geojson, fh, ensure_ascii=False, sort_keys=True)
    with open(paths["weather"], "w", encoding="utf-8") as fh:
        json.dump(artifacts.weather_geojson, fh, ensure_ascii=False, sort_keys=True)
    return paths


def read_gold(path: str | Path) -> dict[str, LabelSet]:
    gold: dict[str, LabelSet] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            gold[str(obj["text"])] = LabelSet.from_json(obj["labels"])
    return gold


def join_gold(
    sentences: Sequence[Sentence], gold_by_text: Mapping[str, LabelSet]
) -> dict[str, LabelSet]:
    """Map sentence ids to gold labels by exact text match.

    The generator guarantees sentences survive the normalize/segment
    round trip verbatim, so a missing text means the corpus and gold
    file are out of sync.
    """
    out: dict[str, LabelSet] = {}
    missing: list[str] = []
    for s in sentences:
        labels = gold_by_text.get(s.text)
        if labels is None:
            missing.append(s.sentence_id)
        else:
            out[s.sentence_id] = labels
    if missing:
        raise SynthError(
            f"{len(missing)} sentences have no gold entry, first: {missing[:3]}"
        )
    return out
