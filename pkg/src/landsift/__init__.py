"""Restriction mining from OCR document corpora with active learning."""

__version__ = "0.1.0"
