"""Command-line pipeline.

Stages communicate through documented files (ndjson page records, canonical
OCR pages, alignment records, annotation JSON, detection JSON), so any stage
can be replaced by external tools. Every run prints a deterministic one-line
summary JSON on stdout; directory-output commands also write summary.json
and the resolved config.json into the output directory. Timestamps only ever
appear in the ndjson log stream.

Exit codes: 0 ok, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np
import yaml

from . import __version__
from .align import AlignmentError, AlignmentParams, align_page, match_books, \
    score_page_pair
from .annotate import PageAnnotation, build_page_annotation, save_annotation
from .jsonio import (
    JsonLineFormatter,
    canonical_json,
    load_annotations,
    load_annotations_with_paths,
    load_detections,
    read_ndjson,
    write_ndjson,
)
from .metrics import (
    ConfusionTally,
    RegionGate,
    RetrievalCounts,
    detection_ap,
    merge_tallies,
    pearson,
    pixel_metrics,
    region_level_retrieval,
    word_level_retrieval,
)
from .ocr import DEFAULT_NORMALIZE, NormalizeConfig, OcrPage, normalize_text, \
    page_from_json, parse_hocr_document
from .raster import rasterize, type_masks
from .report import render_scatter, scatter_points_csv, write_csv
from .selftrain import SelectionPolicy, balance_layouts, select_pages
from .tei import PageRecord, RegionType, load_rule_set, parse_edition

log = logging.getLogger("bookalign")


def _setup_logging(log_file, verbose):
    handler = logging.StreamHandler(sys.stderr)
    if log_file:
        handler = logging.FileHandler(log_file)
    handler.setFormatter(JsonLineFormatter())
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(logging.INFO if verbose else logging.WARNING)


def _load_params(path) -> tuple[AlignmentParams, NormalizeConfig]:
    if not path:
        return AlignmentParams(), DEFAULT_NORMALIZE
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh) or {}
    return (AlignmentParams.from_dict(doc),
            NormalizeConfig.from_dict(doc.get("normalize", {})))


def _emit(summary: dict, out_dir: Path | None = None, config: dict | None = None):
    """Deterministic summary on stdout; echoed into the output directory."""
    line = json.dumps(summary, ensure_ascii=False, sort_keys=True)
    click.echo(line)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "summary.json").write_text(canonical_json(summary) + "\n",
                                              encoding="utf-8")
        if config is not None:
            (out_dir / "config.json").write_text(canonical_json(config) + "\n",
                                                 encoding="utf-8")


def _load_ocr_book(path) -> list[OcrPage]:
    return [page_from_json(obj) for obj in read_ndjson(path)]


def _page_text(page: OcrPage, norm) -> str:
    return normalize_text(page.text(), norm)


def _edition_text(rec: PageRecord, norm) -> str:
    return normalize_text(" ".join(r.text for r in rec.regions if r.text), norm)


class _Cli(click.Group):
    def main(self, *args, **kwargs):
        try:
            return super().main(*args, standalone_mode=False, **kwargs)
        except click.UsageError as e:
            e.show()
            sys.exit(2)
        except click.ClickException as e:
            e.show()
            sys.exit(1)
        except click.Abort:
            sys.exit(1)
        except Exception as e:  # runtime failure boundary: exit 1, not a traceback
            log.error("%s", e)
            click.echo(f"error: {e}", err=True)
            sys.exit(1)


@click.group(cls=_Cli, context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="Pipeline config YAML: one section per subcommand supplying "
                   "flag defaults (flags on the command line win).")
@click.option("--log", "log_file", type=click.Path(dir_okay=False),
              help="Write ndjson log lines to this file instead of stderr.")
@click.option("-v", "--verbose", is_flag=True, help="Log at info level.")
@click.pass_context
def main(ctx, config_path, log_file, verbose):
    """Forced alignment of digital editions to OCR, layout annotation, and
    layout-prediction evaluation."""
    _setup_logging(log_file, verbose)
    if config_path:
        with open(config_path, "r", encoding="utf-8") as fh:
            ctx.default_map = yaml.safe_load(fh) or {}


# ---------------------------------------------------------------------------
# pipeline stages


@main.command()
@click.option("--edition", required=True, type=click.Path(exists=True, dir_okay=False),
              help="TEI XML file.")
@click.option("--rules", required=True,
              help="Rule set: bundled corpus name (dta/tcp/wwo) or a YAML path.")
@click.option("--edition-id", default=None, help="Defaults to the file stem.")
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False),
              help="Page records, ndjson.")
def extract(edition, rules, edition_id, output):
    """Extract per-page region transcripts from a digital edition."""
    rule_set = load_rule_set(rules)
    edition_id = edition_id or Path(edition).stem
    warnings: list[str] = []
    with open(edition, "rb") as fh:
        pages = parse_edition(fh.read(), rule_set, edition_id, warnings)
    for w in warnings:
        log.warning("%s", w)
    write_ndjson(output, (p.to_json() for p in pages))
    regions = sum(len(p.regions) for p in pages)
    _emit({"command": "extract", "edition": edition_id, "corpus": rule_set.corpus_id,
           "pages": len(pages), "regions": regions, "warnings": len(warnings),
           "output": str(output)})


@main.command()
@click.option("--format", "fmt", type=click.Choice(["hocr", "json"]), required=True)
@click.argument("inputs", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False),
              help="Canonical OCR pages, ndjson.")
def ingest(fmt, inputs, output):
    """Convert OCR output (hOCR pages or canonical JSON) to canonical ndjson."""
    pages = []
    warnings: list[str] = []
    for path in inputs:
        if fmt == "hocr":
            with open(path, "rb") as fh:
                pages.extend(parse_hocr_document(fh.read(), warnings))
        else:
            for obj in read_ndjson(path):
                pages.append(page_from_json(obj, warnings))
    for w in warnings:
        log.warning("%s", w)
    write_ndjson(output, (p.to_json() for p in pages))
    _emit({"command": "ingest", "format": fmt, "pages": len(pages),
           "warnings": len(warnings), "output": str(output)})


def _align_one(args):
    page_obj, ocr_obj, params, norm = args
    page = PageRecord.from_json(page_obj)
    ocr = page_from_json(ocr_obj)
    try:
        return align_page(page, ocr, params, norm).to_json(page, ocr)
    except AlignmentError as e:
        # one pathological page must not kill a corpus run
        return {"edition": page.edition_id, "page_index": page.page_index,
                "image": ocr.image or page.image, "error": str(e),
                "regions": [], "lines": []}


@main.command()
@click.option("--edition", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Page records from extract (ndjson).")
@click.option("--ocr", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Canonical OCR pages (ndjson), one per edition page, in order.")
@click.option("--params", "params_path", type=click.Path(exists=True, dir_okay=False),
              help="Alignment parameter YAML.")
@click.option("--jobs", default=1, show_default=True)
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False),
              help="Alignment records, ndjson.")
def align(edition, ocr, params_path, jobs, output):
    """Align edition pages to OCR pages and assign lines to regions."""
    params, norm = _load_params(params_path)
    page_objs = list(read_ndjson(edition))
    ocr_objs = list(read_ndjson(ocr))
    if len(page_objs) != len(ocr_objs):
        raise click.ClickException(
            f"page count mismatch: {len(page_objs)} edition pages vs "
            f"{len(ocr_objs)} OCR pages")
    work = [(p, o, params, norm) for p, o in zip(page_objs, ocr_objs)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            records = list(ex.map(_align_one, work, chunksize=4))
    else:
        records = [_align_one(w) for w in work]
    write_ndjson(output, records)
    errors = sum(1 for r in records if r.get("error"))
    for r in records:
        if r.get("error"):
            log.warning("page %s: %s", r.get("image"), r["error"])
    total = sum(len(r["regions"]) for r in records)
    located = sum(1 for r in records for reg in r["regions"] if reg["located"])
    _emit({"command": "align", "pages": len(records), "regions": total,
           "located": located, "errors": errors, "jobs": jobs,
           "output": str(output)})


def _sim_row(args):
    scan_text, edition_texts, params = args
    return [score_page_pair(scan_text, e, params) for e in edition_texts]


@main.command("match-books")
@click.option("--scan", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Scanned book: canonical OCR pages (ndjson).")
@click.option("--edition", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Edition: page records (ndjson).")
@click.option("--params", "params_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--page-threshold", default=0.5, show_default=True,
              help="Similarity at which a page pair counts as aligned.")
@click.option("--jobs", default=1, show_default=True)
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False),
              help="Match report, JSON.")
def match_books_cmd(scan, edition, params_path, page_threshold, jobs, output):
    """Decide whether a scanned book and an edition are the same printing
    (80%/80%/<10% page-alignment rule)."""
    params, norm = _load_params(params_path)
    scan_texts = [_page_text(p, norm) for p in _load_ocr_book(scan)]
    edition_texts = [_edition_text(PageRecord.from_json(obj), norm)
                     for obj in read_ndjson(edition)]
    sim = None
    if scan_texts and edition_texts:
        work = [(s, edition_texts, params) for s in scan_texts]
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as ex:
                rows = list(ex.map(_sim_row, work, chunksize=1))
        else:
            rows = [_sim_row(w) for w in work]
        sim = np.asarray(rows)
    report = match_books(scan_texts, edition_texts, params,
                         page_threshold=page_threshold,
                         scan_book_id=Path(scan).stem,
                         edition_id=Path(edition).stem,
                         sim_matrix=sim)
    Path(output).write_text(canonical_json(report.to_json()) + "\n",
                            encoding="utf-8")
    _emit({"command": "match-books", "accepted": report.accepted,
           "frac_scan_aligned": report.frac_scan_aligned,
           "frac_edition_aligned": report.frac_edition_aligned,
           "frac_scan_multimatch": report.frac_scan_multimatch,
           "output": str(output)})


@main.command()
@click.option("--alignments", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--ocr", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--detections", type=click.Path(exists=True, dir_okay=False),
              help="Figure detector candidates, JSON.")
@click.option("--mode", type=click.Choice(["poly", "rect"]), default="poly",
              show_default=True)
@click.option("--overlap-iou", type=float, default=None,
              help="Treat candidates as overlapping only above this IoU "
                   "(default: any positive intersection).")
@click.option("--figure-class", default="figure", show_default=True)
@click.option("-o", "--output", required=True, type=click.Path(file_okay=False),
              help="Directory of per-page annotation JSON files.")
def annotate(alignments, ocr, detections, mode, overlap_iou, figure_class, output):
    """Turn line-to-region assignments into annotation files."""
    records = list(read_ndjson(alignments))
    ocr_pages = _load_ocr_book(ocr)
    if len(records) != len(ocr_pages):
        raise click.ClickException("alignments and OCR page counts differ")
    dets = load_detections(detections) if detections else {}
    out_dir = Path(output)
    out_dir.mkdir(parents=True, exist_ok=True)
    unlocated = under = 0
    warnings: list[str] = []
    for idx, (rec, page) in enumerate(zip(records, ocr_pages)):
        page_regions = [(r["index"], RegionType(r["type"])) for r in rec["regions"]]
        assignments = [l["region"] for l in rec["lines"]]
        cands = [c for c in dets.get(page.image, [])
                 if c.class_label == figure_class]
        ann, report = build_page_annotation(page_regions, assignments, page,
                                            cands, mode, overlap_iou)
        for item in report:
            if item["status"] == "unlocated":
                unlocated += 1
            else:
                under += 1
            log.warning("page %s: %s", page.image or idx, item)
        stem = Path(page.image).stem if page.image else f"page-{idx:04d}"
        save_annotation(ann, out_dir / f"{stem}.json", warnings)
    for w in warnings:
        log.warning("%s", w)
    summary = {"command": "annotate", "pages": len(records), "mode": mode,
               "unlocated_regions": unlocated, "under_detected_pages": under,
               "output": str(output)}
    _emit(summary, out_dir, {"mode": mode, "overlap_iou": overlap_iou,
                             "figure_class": figure_class})


# ---------------------------------------------------------------------------
# evaluation


def _paired_annotations(ref, pred):
    ref_pages = load_annotations(ref)
    pred_pages = load_annotations(pred)
    missing = sorted(set(ref_pages) ^ set(pred_pages))
    if missing:
        raise click.ClickException(f"page ids not in both streams: {missing[:10]}")
    return ref_pages, pred_pages


def _tally_one(args):
    ref_obj, pred_obj, scale = args
    ref = PageAnnotation.from_json(ref_obj)
    pred = PageAnnotation.from_json(pred_obj)
    if (ref.width, ref.height) != (pred.width, pred.height):
        raise ValueError(f"page {ref.image!r}: size mismatch")
    return ConfusionTally.from_grids(rasterize(ref, scale).labels,
                                     rasterize(pred, scale).labels).n


@main.command("eval-pixel")
@click.option("--ref", required=True, type=click.Path(exists=True))
@click.option("--pred", required=True, type=click.Path(exists=True))
@click.option("--scale", default=1, show_default=True,
              help="Integer rasterization downscale factor.")
@click.option("--exclude-background", is_flag=True)
@click.option("--jobs", default=1, show_default=True)
@click.option("-o", "--output", required=True, type=click.Path(file_okay=False))
def eval_pixel(ref, pred, scale, exclude_background, jobs, output):
    """Pixel metrics (p_acc, m_acc, m_iu, f_iu) over paired annotations."""
    ref_pages, pred_pages = _paired_annotations(ref, pred)
    ids = sorted(ref_pages)
    work = [(ref_pages[i].to_json(), pred_pages[i].to_json(), scale) for i in ids]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            mats = list(ex.map(_tally_one, work, chunksize=4))
    else:
        mats = [_tally_one(w) for w in work]
    tally = merge_tallies(ConfusionTally(m) for m in mats)
    metrics = pixel_metrics(tally, exclude_background)
    out_dir = Path(output)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(out_dir / "per_class.csv", ["class", "p_acc", "iu"],
              [(c, metrics.per_class_acc[c], metrics.per_class_iu[c])
               for c in metrics.per_class_iu])
    (out_dir / "confusion.json").write_text(
        canonical_json(tally.to_json()) + "\n", encoding="utf-8")
    summary = {"command": "eval-pixel", "pages": len(ids), "scale": scale,
               "exclude_background": exclude_background,
               "metrics": metrics.to_json()}
    _emit(summary, out_dir, {"scale": scale,
                             "exclude_background": exclude_background,
                             "jobs": jobs})


def _ocr_by_image(path) -> dict[str, OcrPage]:
    out = {}
    for i, page in enumerate(_load_ocr_book(path)):
        out[page.image or f"page-{i}"] = page
    return out


@main.command("eval-word")
@click.option("--ref", required=True, type=click.Path(exists=True))
@click.option("--pred", required=True, type=click.Path(exists=True))
@click.option("--ocr", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Canonical OCR pages supplying word boxes.")
@click.option("--min-coverage", default=0.5, show_default=True)
@click.option("-o", "--output", required=True, type=click.Path(file_okay=False))
def eval_word(ref, pred, ocr, min_coverage, output):
    """Word-level retrieval (Rc/Pr/F1) per region type."""
    ref_pages, pred_pages = _paired_annotations(ref, pred)
    ocr_pages = _ocr_by_image(ocr)
    totals: dict[RegionType, list[int]] = {}
    for pid in sorted(ref_pages):
        page = ocr_pages.get(pid)
        if page is None:
            raise click.ClickException(f"no OCR page for {pid!r}")
        words = [w.bbox for line in page.lines for w in line.words]
        counts = word_level_retrieval(type_masks(ref_pages[pid]),
                                      type_masks(pred_pages[pid]),
                                      words, min_coverage)
        for t, c in counts.items():
            agg = totals.setdefault(t, [0, 0, 0])
            agg[0] += c.tp
            agg[1] += c.fp
            agg[2] += c.fn
    result = {t.value: RetrievalCounts(*v).to_json() for t, v in
              sorted(totals.items(), key=lambda kv: kv[0].value)}
    out_dir = Path(output)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(out_dir / "per_type.csv",
              ["type", "tp", "fp", "fn", "recall", "precision", "f1"],
              [(t, d["tp"], d["fp"], d["fn"], d["recall"], d["precision"],
                d["f1"]) for t, d in result.items()])
    summary = {"command": "eval-word", "pages": len(ref_pages),
               "min_coverage": min_coverage, "per_type": result}
    _emit(summary, out_dir, {"min_coverage": min_coverage})


@main.command("eval-region")
@click.option("--ref", required=True, type=click.Path(exists=True))
@click.option("--pred", required=True, type=click.Path(exists=True))
@click.option("--gate-mode", type=click.Choice(["score", "iou"]), default=None,
              help="Optional presence gate for predicted instances.")
@click.option("--gate-threshold", type=float, default=0.5, show_default=True)
@click.option("-o", "--output", required=True, type=click.Path(file_okay=False))
def eval_region(ref, pred, gate_mode, gate_threshold, output):
    """Region-presence retrieval (Rc/Pr/F1) per region type."""
    ref_pages, pred_pages = _paired_annotations(ref, pred)
    gate = RegionGate(gate_mode, gate_threshold) if gate_mode else None
    counts = region_level_retrieval(ref_pages, pred_pages, gate)
    result = {t.value: c.to_json() for t, c in
              sorted(counts.items(), key=lambda kv: kv[0].value)}
    out_dir = Path(output)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(out_dir / "per_type.csv",
              ["type", "tp", "fp", "fn", "recall", "precision", "f1"],
              [(t, d["tp"], d["fp"], d["fn"], d["recall"], d["precision"],
                d["f1"]) for t, d in result.items()])
    summary = {"command": "eval-region", "pages": len(ref_pages),
               "gate": gate_mode, "gate_threshold": gate_threshold if gate_mode else None,
               "per_type": result}
    _emit(summary, out_dir, {"gate_mode": gate_mode,
                             "gate_threshold": gate_threshold})


@main.command("eval-ap")
@click.option("--gt", required=True, type=click.Path(exists=True),
              help="Ground-truth annotations (dir or ndjson).")
@click.option("--pred", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Detections JSON: [{image, bbox, score, class}].")
@click.option("-o", "--output", required=True, type=click.Path(file_okay=False))
def eval_ap(gt, pred, output):
    """Detection AP @ IoU [0.5:0.95] per class and mAP."""
    gt_pages = load_annotations(gt)
    dets = load_detections(pred)
    gt_boxes = {pid: [(r.region_type.value, r.bbox) for r in ann.regions]
                for pid, ann in gt_pages.items()}
    det_boxes = {pid: [(c.class_label, c.bbox, c.score) for c in cands]
                 for pid, cands in dets.items() if pid in gt_boxes}
    dropped = sorted(set(dets) - set(gt_boxes))
    if dropped:
        log.warning("detections for %d unknown pages ignored", len(dropped))
    result = detection_ap(gt_boxes, det_boxes)
    out_dir = Path(output)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(out_dir / "per_class.csv", ["class", "ap"],
              sorted(result.per_class.items()))
    summary = {"command": "eval-ap", "pages": len(gt_pages),
               "result": result.to_json()}
    _emit(summary, out_dir, {})


# ---------------------------------------------------------------------------
# self-training and correlation


@main.group("self-train")
def self_train():
    """Self-training data selection."""


@self_train.command("select")
@click.option("--gt", required=True, type=click.Path(exists=True),
              help="Page-level ground truth annotations (dir or ndjson).")
@click.option("--pred", required=True, type=click.Path(exists=True),
              help="Model predictions as annotations (dir or ndjson).")
@click.option("--iou", default=0.5, show_default=True)
@click.option("--strict/--no-strict", default=True, show_default=True,
              help="Reject pages with unmatched predicted regions.")
@click.option("--cap", type=int, default=None,
              help="Per-layout-signature cap (balancing).")
@click.option("--seed", default=0, show_default=True)
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False),
              help="Selection report, JSON.")
def self_train_select(gt, pred, iou, strict, cap, seed, output):
    """Select pages whose regions were all successfully detected."""
    gt_pages = load_annotations(gt)
    pred_pages, pred_sources = load_annotations_with_paths(pred)
    policy = SelectionPolicy(iou_threshold=iou,
                             require_no_extra_predictions=strict,
                             per_layout_cap=cap)
    report = select_pages(gt_pages, pred_pages, policy)
    if cap is not None:
        report = balance_layouts(report, gt_pages, cap, seed)
    doc = report.to_json()
    doc["files"] = [pred_sources[pid] for pid in report.selected
                    if pid in pred_sources]
    Path(output).write_text(canonical_json(doc) + "\n", encoding="utf-8")
    _emit({"command": "self-train-select", "selected": len(report.selected),
           "rejections": report.rejections, "iou": iou, "strict": strict,
           "cap": cap, "seed": seed, "output": str(output)})


@main.command()
@click.option("--ref", required=True, type=click.Path(exists=True))
@click.option("--pred", required=True, type=click.Path(exists=True))
@click.option("--ocr", type=click.Path(exists=True, dir_okay=False),
              help="OCR pages (needed for the word-level y metric).")
@click.option("--y-metric", type=click.Choice(["word", "region"]),
              default="word", show_default=True)
@click.option("--types", default=None,
              help="Comma-separated region types (default: all present).")
@click.option("--scale", default=1, show_default=True)
@click.option("-o", "--output", required=True, type=click.Path(file_okay=False))
def correlate(ref, pred, ocr, y_metric, types, scale, output):
    """Per-type Pearson correlation of pixel IoU against word- or
    region-level F1, with CSV + SVG scatter plots."""
    ref_pages, pred_pages = _paired_annotations(ref, pred)
    if y_metric == "word" and not ocr:
        raise click.UsageError("--ocr is required for the word-level metric")
    ocr_pages = _ocr_by_image(ocr) if ocr else {}
    if types:
        wanted = [RegionType(t.strip()) for t in types.split(",")]
    else:
        wanted = sorted({r.region_type for a in ref_pages.values()
                         for r in a.regions}, key=lambda t: t.value)
    out_dir = Path(output)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary: dict = {"command": "correlate", "y_metric": y_metric, "types": {}}
    for rtype in wanted:
        points = []
        for pid in sorted(ref_pages):
            ref_ann, pred_ann = ref_pages[pid], pred_pages[pid]
            if rtype not in ref_ann.types_present():
                continue
            tally = ConfusionTally.from_grids(rasterize(ref_ann, scale).labels,
                                              rasterize(pred_ann, scale).labels)
            pm = pixel_metrics(tally)
            iu = pm.per_class_iu.get(rtype.value)
            if iu is None:
                continue
            if y_metric == "word":
                page = ocr_pages.get(pid)
                if page is None:
                    raise click.ClickException(f"no OCR page for {pid!r}")
                words = [w.bbox for line in page.lines for w in line.words]
                counts = word_level_retrieval(type_masks(ref_ann),
                                              type_masks(pred_ann), words)
            else:
                counts = region_level_retrieval({pid: ref_ann}, {pid: pred_ann})
            c = counts.get(rtype)
            if c is None:
                continue
            points.append((pid, iu, c.f1))
        entry: dict = {"n": len(points)}
        csv_path = out_dir / f"scatter_{rtype.value}.csv"
        scatter_points_csv(csv_path, points, "pixel_iu", f"{y_metric}_f1")
        if len(points) >= 2:
            fit = render_scatter(out_dir / f"scatter_{rtype.value}.svg", points,
                                 "pixel IoU", f"{y_metric}-level F1",
                                 title=rtype.value)
            if fit is not None:
                entry["slope"], entry["intercept"] = fit
        try:
            pr = pearson([p[1] for p in points], [p[2] for p in points])
            entry.update(pr.to_json())
        except ValueError as e:
            entry["error"] = str(e)
        summary["types"][rtype.value] = entry
    _emit(summary, out_dir, {"y_metric": y_metric, "scale": scale,
                             "types": [t.value for t in wanted]})


if __name__ == "__main__":
    main()
