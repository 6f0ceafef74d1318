"""Project directory layout and typed artifact access.

A project is a plain directory of JSON/JSONL artifacts, diffable and
reproducible. All writes go through atomic replace, so a crash never
leaves a half-written artifact behind.
"""

from __future__ import annotations

from pathlib import Path

from . import active_learning, bootstrap, geograph, ocr_ingest, synth, textprep
from .fileio import atomic_write_json, read_json
from .labels import LabelSet


class ProjectError(ValueError):
    pass


class Project:
    """Path registry and loaders for one pipeline working directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def ensure(self) -> "Project":
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "models").mkdir(exist_ok=True)
        (self.root / "al").mkdir(exist_ok=True)
        return self

    # artifact paths
    @property
    def pages_file(self) -> Path:
        return self.root / "pages.jsonl"

    @property
    def sentences_file(self) -> Path:
        return self.root / "sentences.jsonl"

    @property
    def pool_file(self) -> Path:
        return self.root / "pool.jsonl"

    @property
    def annotations_file(self) -> Path:
        return self.root / "annotations.jsonl"

    @property
    def dataset_file(self) -> Path:
        return self.root / "dataset.jsonl"

    @property
    def splits_file(self) -> Path:
        return self.root / "splits.json"

    @property
    def gold_file(self) -> Path:
        return self.root / "gold.jsonl"

    @property
    def meta_file(self) -> Path:
        return self.root / "meta.jsonl"

    @property
    def areas_file(self) -> Path:
        return self.root / "areas.geojson"

    @property
    def weather_file(self) -> Path:
        return self.root / "weather.geojson"

    @property
    def graph_file(self) -> Path:
        return self.root / "graph.json"

    def model_file(self, label_space: str) -> Path:
        return self.root / "models" / f"{label_space}.npz"

    def al_state_file(self, label_space: str) -> Path:
        return self.root / "al" / f"{label_space}-state.json"

    def al_model_file(self, label_space: str) -> Path:
        return self.root / "al" / f"{label_space}-model.npz"

    def al_history_file(self, label_space: str) -> Path:
        return self.root / "al" / f"{label_space}-history.json"

    def _require(self, path: Path, hint: str) -> Path:
        if not path.exists():
            raise ProjectError(f"{path} missing; run `{hint}` first")
        return path

    # typed loaders
    def pages(self) -> list[ocr_ingest.PageText]:
        return ocr_ingest.read_pages(self._require(self.pages_file, "ingest or synth"))

    def sentences(self) -> list[textprep.Sentence]:
        return textprep.read_sentences(self._require(self.sentences_file, "textprep"))

    def valid_sentences(self) -> list[textprep.Sentence]:
        return [s for s in self.sentences() if s.valid]

    def pool(self) -> list[textprep.Sentence]:
        return textprep.read_sentences(self._require(self.pool_file, "bootstrap"))

    def dataset(self) -> list[bootstrap.LabeledSentence]:
        return bootstrap.read_dataset(self._require(self.dataset_file, "annotate"))

    def splits(self) -> bootstrap.DatasetSplit:
        return bootstrap.DatasetSplit.from_json(
            read_json(self._require(self.splits_file, "split"))
        )

    def save_splits(self, split: bootstrap.DatasetSplit) -> None:
        atomic_write_json(split.to_json(), self.splits_file)

    def gold(self) -> dict[str, LabelSet]:
        return synth.read_gold(self._require(self.gold_file, "synth"))

    def metas(self) -> dict[str, ocr_ingest.DocumentMeta]:
        return ocr_ingest.load_document_meta(self._require(self.meta_file, "synth or ingest"))

    def areas(self) -> list[geograph.AreaFeature]:
        return geograph.load_areas(self._require(self.areas_file, "synth"))

    def isobands(self) -> list[tuple[geograph.Geometry, float]]:
        return geograph.load_isobands(self._require(self.weather_file, "synth"))

    def graph(self) -> geograph.Graph:
        return geograph.load_graph(self._require(self.graph_file, "graph build"))

    def al_state(self, label_space: str) -> tuple[active_learning.ALState, active_learning.ALConfig]:
        return active_learning.load_state(
            self._require(self.al_state_file(label_space), "al run")
        )

    def save_al_state(
        self, state: active_learning.ALState, config: active_learning.ALConfig
    ) -> None:
        self.ensure()
        active_learning.save_state(
            state,
            config,
            self.al_state_file(state.label_space),
            self.al_model_file(state.label_space),
        )

    def doc_text(self, doc_id: str) -> str:
        """Full document text: accepted pages joined in page order."""
        pages = [p for p in self.pages() if p.doc_id == doc_id]
        if not pages:
            raise ProjectError(f"unknown document {doc_id!r}")
        pages.sort(key=lambda p: p.page_no)
        return "\n\n".join(textprep.normalize(p.text) for p in pages)

    def texts_by_id(self) -> dict[str, str]:
        return {s.sentence_id: s.text for s in self.valid_sentences()}
