"""Text normalization, sentence segmentation and validity filtering.

Raw OCR page text is noisy: hyphenated line wraps, hard line breaks
mid-sentence, stray scanner artifacts. Normalization repairs the wraps
and produces a single-line page string; segmentation cuts it into
sentence candidates; the validity rules throw out fragments that would
only pollute annotation.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .ocr_ingest import PageText

TERMINATORS = ".!?:"

# lowercased, terminator included; matched against the whole whitespace
# delimited token ending at the boundary candidate
DEFAULT_ABBREVIATIONS = frozenset(
    {"z.b.", "ca.", "nr.", "bzw.", "u.a.", "abs.", "ggf."}
)

MIN_TOKENS = 3
MAX_TOKENS = 120
SPECIAL_CHAR_RATIO = 0.2
ALLOWED_PUNCT = frozenset(".,;:!?()-/%§\"'")

_HYPHEN_WRAP = re.compile(r"(\w)-[ \t]*\n[ \t]*(\w)")


def _join_wrap(match: re.Match) -> str:
    head, cont = match.group(1), match.group(2)
    if cont.islower():
        # wrapped word: "Bau-\nstelle" -> "Baustelle"
        return head + cont
    # compound kept hyphenated: "Nord-\nOst" -> "Nord-Ost"
    return head + "-" + cont


def normalize(text: str) -> str:
    """Repair hyphen wraps, flatten line breaks, collapse whitespace.

    Idempotent: a second pass leaves the result unchanged.
    """
    text = _HYPHEN_WRAP.sub(_join_wrap, text)
    text = text.replace("\r", "\n")
    text = re.sub(r"\s+", " ", text)
    return text.strip()


def segment(text: str, abbreviations: frozenset[str] = DEFAULT_ABBREVIATIONS) -> list[str]:
    """Split normalized text into sentence candidates.

    A terminator (. ! ? :) followed by whitespace ends a sentence,
    unless the token it closes is a known abbreviation or the
    terminator directly follows a digit (enumerations, dates, section
    numbers). The final remainder is emitted even without a terminator.
    """
    sentences: list[str] = []
    start = 0
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch in TERMINATORS and (i + 1 == n or text[i + 1].isspace()):
            token_start = i
            while token_start > start and not text[token_start - 1].isspace():
                token_start -= 1
            token = text[token_start : i + 1].lower()
            digit_before = i > 0 and text[i - 1].isdigit()
            if token not in abbreviations and not digit_before:
                piece = text[start : i + 1].strip()
                if piece:
                    sentences.append(piece)
                start = i + 1
        i += 1
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def check_validity(text: str) -> str | None:
    """Return the first failing rule name, or None for a valid sentence.

    Rules, in order: special_chars, lowercase_start, no_terminal_punct,
    too_short, too_long.
    """
    if text:
        special = sum(
            1 for c in text if not (c.isalnum() or c.isspace() or c in ALLOWED_PUNCT)
        )
        if special / len(text) > SPECIAL_CHAR_RATIO:
            return "special_chars"
    if text and text[0].islower():
        return "lowercase_start"
    if not text or text[-1] not in TERMINATORS:
        return "no_terminal_punct"
    tokens = text.split()
    if len(tokens) < MIN_TOKENS:
        return "too_short"
    if len(tokens) > MAX_TOKENS:
        return "too_long"
    return None


def is_valid(text: str) -> bool:
    return check_validity(text) is None


@dataclass(frozen=True)
class Sentence:
    sentence_id: str
    doc_id: str
    page_no: int
    text: str
    valid: bool
    reject_reason: str | None = None

    def to_json(self) -> dict:
        return {
            "sentence_id": self.sentence_id,
            "doc_id": self.doc_id,
            "page_no": self.page_no,
            "text": self.text,
            "valid": self.valid,
            "reject_reason": self.reject_reason,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Sentence":
        return cls(
            sentence_id=str(obj["sentence_id"]),
            doc_id=str(obj["doc_id"]),
            page_no=int(obj["page_no"]),
            text=str(obj["text"]),
            valid=bool(obj["valid"]),
            reject_reason=obj.get("reject_reason"),
        )


def process_page(page: PageText, abbreviations: frozenset[str] = DEFAULT_ABBREVIATIONS) -> list[Sentence]:
    """Normalize and segment one page into id-stable sentence records."""
    out: list[Sentence] = []
    for idx, text in enumerate(segment(normalize(page.text), abbreviations)):
        reason = check_validity(text)
        out.append(
            Sentence(
                sentence_id=f"{page.doc_id}-p{page.page_no}-s{idx}",
                doc_id=page.doc_id,
                page_no=page.page_no,
                text=text,
                valid=reason is None,
                reject_reason=reason,
            )
        )
    return out


def process_pages(pages: Iterable[PageText]) -> list[Sentence]:
    sentences: list[Sentence] = []
    for page in pages:
        sentences.extend(process_page(page))
    return sentences


def write_sentences(sentences: Sequence[Sentence], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in sentences:
            fh.write(json.dumps(s.to_json(), ensure_ascii=False, sort_keys=True) + "\n")


def read_sentences(path: str | Path) -> list[Sentence]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(Sentence.from_json(json.loads(line)))
    return out
