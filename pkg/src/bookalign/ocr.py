"""Baseline OCR ingestion: hOCR parsing, a canonical page JSON schema, and
text normalization for alignment.

Canonical page schema (one JSON object per page, ndjson for a book):

    {"image": "p0001.png", "width": 900, "height": 1200,
     "lines": [{"bbox": [x0, y0, x1, y1], "text": "...", "hyphen": false,
                "words": [{"text": "...", "bbox": [...], "conf": 0.96}]}]}

Any OCR engine plugs in by emitting this schema; hOCR is just a converter.
"""

from __future__ import annotations

import re
import unicodedata
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Optional

from .geometry import BBox

# line-final hyphens that may mark a broken word (U+2E17 is the Fraktur
# double oblique hyphen)
HYPHEN_CHARS = ("-", "⸗", "­")

DEFAULT_CHAR_MAP = {
    "ſ": "s",    # long s
    "ﬀ": "ff",
    "ﬁ": "fi",
    "ﬂ": "fl",
    "ﬃ": "ffi",
    "ﬄ": "ffl",
    "ﬅ": "ft",
    "ﬆ": "st",
    "⸗": "-",
    "­": "-",
}

_WS = re.compile(r"\s+")


@dataclass(frozen=True)
class NormalizeConfig:
    char_map: tuple[tuple[str, str], ...] = tuple(sorted(DEFAULT_CHAR_MAP.items()))
    lowercase: bool = True

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizeConfig":
        char_map = dict(DEFAULT_CHAR_MAP)
        char_map.update(d.get("map", {}))
        return cls(tuple(sorted(char_map.items())), d.get("lowercase", True))


DEFAULT_NORMALIZE = NormalizeConfig()


def normalize_text(s: str, config: NormalizeConfig = DEFAULT_NORMALIZE) -> str:
    """NFC, character map (long s, ligatures), optional lowercasing, and
    whitespace-run collapse. Idempotent."""
    s = unicodedata.normalize("NFC", s)
    table = str.maketrans(dict(config.char_map))
    s = s.translate(table)
    if config.lowercase:
        s = s.lower()
    return _WS.sub(" ", s).strip()


@dataclass
class OcrWord:
    text: str
    bbox: BBox
    conf: Optional[float] = None

    def to_json(self) -> dict:
        d = {"text": self.text, "bbox": self.bbox.to_list()}
        if self.conf is not None:
            d["conf"] = self.conf
        return d


@dataclass
class OcrLine:
    words: list[OcrWord]
    bbox: BBox
    hyphen: bool = False

    @property
    def text(self) -> str:
        return " ".join(w.text for w in self.words)

    def to_json(self) -> dict:
        return {"bbox": self.bbox.to_list(), "text": self.text,
                "hyphen": self.hyphen, "words": [w.to_json() for w in self.words]}


@dataclass
class OcrPage:
    image: str
    width: int
    height: int
    lines: list[OcrLine] = field(default_factory=list)

    def text(self) -> str:
        return " ".join(l.text for l in self.lines)

    def to_json(self) -> dict:
        return {"image": self.image, "width": self.width, "height": self.height,
                "lines": [l.to_json() for l in self.lines]}


class OcrParseError(Exception):
    pass


def _canonical_page(image: str, width, height, raw_lines,
                    warnings: list[str]) -> OcrPage:
    """Clamp geometry to page bounds and enforce nesting invariants.

    raw_lines: iterable of (bbox, words, hyphen_hint) where words is a list of
    (text, bbox, conf). Word boxes are clamped to the page, line boxes are
    grown to cover their words and then clamped.
    """
    width, height = int(width), int(height)
    if width <= 0 or height <= 0:
        raise OcrParseError(f"page {image!r} has empty bounds {width}x{height}")
    lines = []
    for lbox, raw_words, hyphen_hint in raw_lines:
        words = []
        for text, wbox, conf in raw_words:
            text = text.strip()
            if not text:
                continue
            clamped = wbox.clamped(width, height)
            if clamped != wbox:
                warnings.append(f"word bbox {wbox.to_list()} clamped to page {image!r}")
            if clamped.area == 0 and wbox.area > 0:
                warnings.append(f"word {text!r} entirely outside page {image!r}; dropped")
                continue
            words.append(OcrWord(text, clamped, conf))
        if words:
            lbox = BBox.hull([lbox] + [w.bbox for w in words])
        clamped = lbox.clamped(width, height)
        if clamped != lbox:
            warnings.append(f"line bbox {lbox.to_list()} clamped to page {image!r}")
        text = " ".join(w.text for w in words)
        hyphen = hyphen_hint if hyphen_hint is not None else \
            bool(text) and text.endswith(HYPHEN_CHARS)
        lines.append(OcrLine(words, clamped, hyphen))
    return OcrPage(image, width, height, lines)


def page_from_json(d: dict, warnings: list[str] | None = None) -> OcrPage:
    """Load a canonical page object, re-applying the ingest invariants."""
    if warnings is None:
        warnings = []
    raw_lines = []
    for l in d.get("lines", []):
        words = [(w["text"], BBox.from_list(w["bbox"]), w.get("conf"))
                 for w in l.get("words", [])]
        raw_lines.append((BBox.from_list(l["bbox"]), words, l.get("hyphen")))
    return _canonical_page(d.get("image", ""), d["width"], d["height"],
                           raw_lines, warnings)


# ---------------------------------------------------------------------------
# hOCR


_LINE_CLASSES = {"ocr_line", "ocr_header", "ocr_caption", "ocr_textfloat"}


def _props(title: str) -> dict[str, list[str]]:
    out = {}
    for part in (title or "").split(";"):
        toks = part.split()
        if toks:
            out[toks[0]] = toks[1:]
    return out


def _prop_bbox(props) -> Optional[BBox]:
    vals = props.get("bbox")
    if not vals or len(vals) < 4:
        return None
    try:
        x0, y0, x1, y1 = (int(float(v)) for v in vals[:4])
        return BBox(min(x0, x1), min(y0, y1), max(x0, x1), max(y0, y1))
    except ValueError:
        return None


def _elem_text(elem) -> str:
    return "".join(elem.itertext())


def _cls(elem) -> str:
    return (elem.get("class") or "").strip()


def _hocr_page(page_elem, warnings: list[str]) -> OcrPage:
    props = _props(page_elem.get("title", ""))
    pbox = _prop_bbox(props)
    if pbox is None:
        raise OcrParseError("ocr_page is missing its bbox property")
    image = ""
    if "image" in props and props["image"]:
        image = " ".join(props["image"]).strip("'\"")

    raw_lines = []
    for lelem in page_elem.iter():
        if _cls(lelem) not in _LINE_CLASSES:
            continue
        lprops = _props(lelem.get("title", ""))
        lbox = _prop_bbox(lprops)
        if lbox is None:
            warnings.append("line without bbox skipped")
            continue
        words = []
        for welem in lelem.iter():
            if _cls(welem) != "ocrx_word":
                continue
            wprops = _props(welem.get("title", ""))
            wbox = _prop_bbox(wprops)
            if wbox is None:
                warnings.append("word without bbox skipped")
                continue
            conf = None
            if wprops.get("x_wconf"):
                try:
                    conf = min(max(float(wprops["x_wconf"][0]) / 100.0, 0.0), 1.0)
                except ValueError:
                    conf = None
            words.append((_elem_text(welem).strip(), wbox, conf))
        raw_lines.append((lbox, words, None))
    return _canonical_page(image, pbox.x1, pbox.y1, raw_lines, warnings)


def parse_hocr_document(data, warnings: list[str] | None = None) -> list[OcrPage]:
    """All ocr_page elements of an hOCR document, in document order.

    Elements without a usable bbox property are skipped with a warning;
    geometry is clamped to the page bounds.
    """
    if warnings is None:
        warnings = []
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        root = ET.fromstring(data)
    except ET.ParseError as e:
        raise OcrParseError(f"malformed hOCR: {e}") from e
    pages = [_hocr_page(elem, warnings) for elem in root.iter()
             if _cls(elem) == "ocr_page"]
    if not pages:
        raise OcrParseError("no ocr_page element found")
    return pages


def parse_hocr(data, warnings: list[str] | None = None) -> tuple[OcrPage, list[str]]:
    """Parse the first (usually only) hOCR page; see parse_hocr_document."""
    if warnings is None:
        warnings = []
    return parse_hocr_document(data, warnings)[0], warnings
