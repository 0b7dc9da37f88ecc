"""Forced alignment of digital editions to OCR output for page-layout
annotation, plus pixel/word/region-level evaluation of layout predictions."""

__version__ = "0.1.0"

from .geometry import BBox
from .tei import RegionType, PageRecord, RegionTranscript, SelectorRuleSet, parse_edition
from .ocr import OcrPage, OcrLine, OcrWord, normalize_text, parse_hocr
from .align import AlignmentParams, CharAlignment, align_page, score_page_pair, match_books

__all__ = [
    "BBox",
    "RegionType",
    "PageRecord",
    "RegionTranscript",
    "SelectorRuleSet",
    "parse_edition",
    "OcrPage",
    "OcrLine",
    "OcrWord",
    "normalize_text",
    "parse_hocr",
    "AlignmentParams",
    "CharAlignment",
    "align_page",
    "score_page_pair",
    "match_books",
]
