"""Page-level OCR confidence aggregation and threshold filtering.

Consumes word-level confidence output (TSV), aggregates it to page
scores, filters pages against the acceptance threshold, and emits one
text blob per accepted page with document/page provenance.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 75.0

TSV_HEADER = ("doc_id", "page_no", "word", "confidence")


class IngestError(ValueError):
    """Raised for malformed ingestion input that cannot be recovered."""


@dataclass(frozen=True)
class WordConfidenceRecord:
    doc_id: str
    page_no: int
    word: str
    confidence: float  # percent in [0, 100]


@dataclass(frozen=True)
class PageScore:
    doc_id: str
    page_no: int
    score: float
    word_count: int
    accepted: bool


@dataclass(frozen=True)
class DocumentMeta:
    doc_id: str
    title: str
    region: str
    area_ids: tuple[str, ...]


@dataclass(frozen=True)
class PageText:
    doc_id: str
    page_no: int
    text: str
    ocr_score: float

    def to_json(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "page_no": self.page_no,
            "text": self.text,
            "ocr_score": self.ocr_score,
        }


@dataclass
class IngestStats:
    pages_total: int = 0
    pages_accepted: int = 0
    pages_rejected: int = 0
    words_total: int = 0
    rows_malformed: int = 0
    confidences_clamped: int = 0
    docs_without_meta: list[str] = field(default_factory=list)
    docs_meta_only: list[str] = field(default_factory=list)
    malformed_lines: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "pages_total": self.pages_total,
            "pages_accepted": self.pages_accepted,
            "pages_rejected": self.pages_rejected,
            "words_total": self.words_total,
            "rows_malformed": self.rows_malformed,
            "confidences_clamped": self.confidences_clamped,
            "docs_without_meta": self.docs_without_meta,
            "docs_meta_only": self.docs_meta_only,
            "malformed_lines": self.malformed_lines,
        }


def aggregate_page_confidence(
    words: Sequence[WordConfidenceRecord], threshold: float = DEFAULT_THRESHOLD
) -> PageScore:
    """Mean word confidence for one page; empty pages score 0.

    All records must share doc_id and page_no, otherwise the input is
    rejected as malformed.
    """
    if not words:
        return PageScore(doc_id="", page_no=0, score=0.0, word_count=0, accepted=0.0 >= threshold)
    doc_id = words[0].doc_id
    page_no = words[0].page_no
    for w in words:
        if w.doc_id != doc_id or w.page_no != page_no:
            raise IngestError(
                f"mixed pages in input: ({doc_id}, {page_no}) vs ({w.doc_id}, {w.page_no})"
            )
    score = sum(w.confidence for w in words) / len(words)
    return PageScore(doc_id, page_no, score, len(words), accepted=score >= threshold)


def filter_pages(
    pages: Sequence[PageScore], threshold: float = DEFAULT_THRESHOLD
) -> tuple[list[PageScore], list[PageScore]]:
    """Partition pages into (accepted, rejected) by score >= threshold.

    Both lists preserve input order; accepted flags are re-evaluated
    against the given threshold.
    """
    if not 0.0 <= threshold <= 100.0:
        raise IngestError(f"threshold must be in [0, 100], got {threshold}")
    accepted: list[PageScore] = []
    rejected: list[PageScore] = []
    for page in pages:
        keep = page.score >= threshold
        page = PageScore(page.doc_id, page.page_no, page.score, page.word_count, keep)
        (accepted if keep else rejected).append(page)
    return accepted, rejected


def _parse_tsv_rows(lines: Iterable[str], stats: IngestStats) -> list[WordConfidenceRecord]:
    records: list[WordConfidenceRecord] = []
    header_seen = False
    for lineno, line in enumerate(lines, start=1):
        line = line.rstrip("\n")
        if not line.strip():
            continue
        parts = line.split("\t")
        if not header_seen:
            header_seen = True
            if tuple(p.strip() for p in parts) == TSV_HEADER:
                continue
            raise IngestError(
                f"line 1: expected header {' '.join(TSV_HEADER)!r}, got {line!r}"
            )
        if len(parts) != 4:
            stats.rows_malformed += 1
            stats.malformed_lines.append(f"line {lineno}: expected 4 columns, got {len(parts)}")
            continue
        doc_id, page_raw, word, conf_raw = parts
        try:
            page_no = int(page_raw)
            confidence = float(conf_raw)
        except ValueError:
            stats.rows_malformed += 1
            stats.malformed_lines.append(f"line {lineno}: bad page_no/confidence {page_raw!r}/{conf_raw!r}")
            continue
        if page_no < 1:
            stats.rows_malformed += 1
            stats.malformed_lines.append(f"line {lineno}: page_no must be >= 1, got {page_no}")
            continue
        if not 0.0 <= confidence <= 100.0:
            # scanner exports are unreliable; clamp instead of dropping
            clamped = min(100.0, max(0.0, confidence))
            logger.warning("line %d: confidence %s outside [0,100], clamped to %s", lineno, confidence, clamped)
            stats.confidences_clamped += 1
            confidence = clamped
        records.append(WordConfidenceRecord(doc_id, page_no, word, confidence))
    return records


def load_document_meta(path: str | Path) -> dict[str, DocumentMeta]:
    """Read the JSON-lines document metadata file keyed by doc_id."""
    metas: dict[str, DocumentMeta] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                meta = DocumentMeta(
                    doc_id=str(obj["doc_id"]),
                    title=str(obj.get("title", "")),
                    region=str(obj.get("region", "")),
                    area_ids=tuple(str(a) for a in obj.get("area_ids", ())),
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise IngestError(f"{path}: line {lineno}: bad document meta: {exc}") from exc
            if meta.doc_id in metas:
                raise IngestError(f"{path}: line {lineno}: duplicate doc_id {meta.doc_id!r}")
            metas[meta.doc_id] = meta
    return metas


def ingest_corpus(
    word_confidence_file: str | Path,
    document_meta_file: str | Path | None = None,
    threshold: float = DEFAULT_THRESHOLD,
) -> tuple[list[PageText], list[PageScore], IngestStats, dict[str, DocumentMeta]]:
    """Build the accepted-page corpus from a word-confidence TSV.

    Returns (accepted page texts, all page scores, statistics, metas).
    Page text is the space-joined word sequence in input order.
    """
    stats = IngestStats()
    with open(word_confidence_file, encoding="utf-8") as fh:
        records = _parse_tsv_rows(fh, stats)
    stats.words_total = len(records)

    by_page: dict[tuple[str, int], list[WordConfidenceRecord]] = {}
    for rec in records:
        by_page.setdefault((rec.doc_id, rec.page_no), []).append(rec)

    metas = load_document_meta(document_meta_file) if document_meta_file else {}

    scores: list[PageScore] = []
    accepted_texts: list[PageText] = []
    seen_docs = set()
    for (doc_id, page_no), page_words in by_page.items():
        seen_docs.add(doc_id)
        score = aggregate_page_confidence(page_words, threshold)
        scores.append(score)
        if score.accepted:
            text = " ".join(w.word for w in page_words)
            accepted_texts.append(PageText(doc_id, page_no, text, score.score))
    stats.pages_total = len(scores)
    stats.pages_accepted = len(accepted_texts)
    stats.pages_rejected = stats.pages_total - stats.pages_accepted

    if metas:
        stats.docs_without_meta = sorted(seen_docs - set(metas))
        stats.docs_meta_only = sorted(set(metas) - seen_docs)
        for doc_id in stats.docs_without_meta:
            logger.warning("doc %s has OCR output but no metadata entry; pages kept", doc_id)
        for doc_id in stats.docs_meta_only:
            logger.warning("doc %s listed in metadata but absent from OCR output", doc_id)

    return accepted_texts, scores, stats, metas


def write_pages(pages: Sequence[PageText], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for page in pages:
            fh.write(json.dumps(page.to_json(), ensure_ascii=False, sort_keys=True) + "\n")


def read_pages(path: str | Path) -> list[PageText]:
    pages = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            pages.append(
                PageText(
                    doc_id=str(obj["doc_id"]),
                    page_no=int(obj["page_no"]),
                    text=str(obj["text"]),
                    ocr_score=float(obj.get("ocr_score", 0.0)),
                )
            )
    return pages
