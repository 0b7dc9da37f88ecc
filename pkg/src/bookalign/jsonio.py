"""Newline-delimited JSON and annotation/detection file loading."""

from __future__ import annotations

import json
import logging
import time
from pathlib import Path
from typing import Iterable, Iterator

from .annotate import DetectionCandidate, PageAnnotation
from .geometry import BBox


def read_ndjson(path) -> Iterator[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        for ln, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}:{ln}: bad JSON: {e}") from e


def write_ndjson(path, objs: Iterable[dict]):
    with open(path, "w", encoding="utf-8") as fh:
        for obj in objs:
            fh.write(json.dumps(obj, ensure_ascii=False))
            fh.write("\n")


def canonical_json(obj) -> str:
    """Deterministic serialization for run summaries."""
    return json.dumps(obj, ensure_ascii=False, sort_keys=True,
                      separators=(", ", ": "), indent=1)


def load_annotations_with_paths(path) -> tuple[dict[str, PageAnnotation],
                                               dict[str, str]]:
    """Annotations from a directory of JSON files or one ndjson file.

    Pages are keyed by their image reference; files without one fall back to
    the file stem. Duplicate keys are an error. The second mapping gives the
    source file of each page (for directory inputs).
    """
    path = Path(path)
    out: dict[str, PageAnnotation] = {}
    sources: dict[str, str] = {}

    def add(ann: PageAnnotation, fallback: str, source: str | None):
        key = ann.image or fallback
        if key in out:
            raise ValueError(f"duplicate page id {key!r} in {path}")
        out[key] = ann
        if source is not None:
            sources[key] = source

    if path.is_dir():
        for f in sorted(path.glob("*.json")):
            if f.name in ("summary.json", "config.json"):
                continue  # run metadata living next to the page files
            with open(f, "r", encoding="utf-8") as fh:
                add(PageAnnotation.from_json(json.load(fh)), f.stem, str(f))
    else:
        for i, obj in enumerate(read_ndjson(path)):
            add(PageAnnotation.from_json(obj), f"page-{i}", None)
    return out, sources


def load_annotations(path) -> dict[str, PageAnnotation]:
    return load_annotations_with_paths(path)[0]


def load_detections(path) -> dict[str, list[DetectionCandidate]]:
    """Detector candidates from a JSON list of {image, bbox, score, class}."""
    with open(path, "r", encoding="utf-8") as fh:
        entries = json.load(fh)
    out: dict[str, list[DetectionCandidate]] = {}
    for e in entries:
        out.setdefault(e["image"], []).append(
            DetectionCandidate(BBox.from_list(e["bbox"]), float(e["score"]),
                               e.get("class", "figure")))
    return out


class JsonLineFormatter(logging.Formatter):
    """One JSON object per log line; timestamps stay in the log, never in
    run summaries."""

    def format(self, record: logging.LogRecord) -> str:
        entry = {
            "ts": round(time.time(), 3),
            "level": record.levelname.lower(),
            "logger": record.name,
            "msg": record.getMessage(),
        }
        return json.dumps(entry, ensure_ascii=False)
