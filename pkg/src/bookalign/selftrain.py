"""Self-training page selection.

Corpus-scale inference output extends the training set only where it is
trustworthy: a page qualifies when every ground-truth region was detected
(same-type match with IoU at or above the policy threshold, one-to-one,
greedy by descending IoU) and, under the strict default, no predicted region
is left over. Layout balancing subsamples over-represented page layouts so
rare layouts (figure pages...) are not starved in the next round.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional

from .annotate import PageAnnotation


@dataclass(frozen=True)
class SelectionPolicy:
    iou_threshold: float = 0.5
    require_no_extra_predictions: bool = True
    per_layout_cap: Optional[int] = None


def layout_signature(ann: PageAnnotation) -> str:
    """Sorted multiset of region types on the page, e.g. "body+note+note"."""
    return "+".join(sorted(r.region_type.value for r in ann.regions)) or "(empty)"


@dataclass
class SelectionReport:
    selected: list[str] = field(default_factory=list)
    signatures: dict[str, int] = field(default_factory=dict)
    rejections: dict[str, int] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"selected": self.selected, "signatures": self.signatures,
                "rejections": self.rejections}


def _page_fully_detected(gt: PageAnnotation, pred: PageAnnotation,
                         policy: SelectionPolicy) -> Optional[str]:
    """None when the page qualifies, else the rejection reason."""
    unmatched_pred = list(range(len(pred.regions)))
    for g in gt.regions:
        best_iou, best_idx = -1.0, None
        for idx in unmatched_pred:
            p = pred.regions[idx]
            if p.region_type is not g.region_type:
                continue
            iou = p.bbox.iou(g.bbox)
            if iou > best_iou:
                best_iou, best_idx = iou, idx
        if best_idx is None or best_iou < policy.iou_threshold:
            return "unmatched-gt"
        unmatched_pred.remove(best_idx)
    if policy.require_no_extra_predictions and unmatched_pred:
        return "extra-predictions"
    return None


def select_pages(gt_pages: dict[str, PageAnnotation],
                 pred_pages: dict[str, PageAnnotation],
                 policy: SelectionPolicy = SelectionPolicy()) -> SelectionReport:
    """Pick the pages where all ground-truth regions were detected.

    gt_pages / pred_pages map page id -> PageAnnotation; pages missing from
    the predictions are rejected with reason "no-predictions".
    """
    report = SelectionReport()
    for pid in sorted(gt_pages):
        pred = pred_pages.get(pid)
        if pred is None:
            report.rejections["no-predictions"] = \
                report.rejections.get("no-predictions", 0) + 1
            continue
        reason = _page_fully_detected(gt_pages[pid], pred, policy)
        if reason is not None:
            report.rejections[reason] = report.rejections.get(reason, 0) + 1
            continue
        report.selected.append(pid)
        sig = layout_signature(gt_pages[pid])
        report.signatures[sig] = report.signatures.get(sig, 0) + 1
    return report


def balance_layouts(report: SelectionReport,
                    gt_pages: dict[str, PageAnnotation],
                    per_layout_cap: int, seed: int = 0) -> SelectionReport:
    """Uniformly subsample each layout-signature group to the cap.

    Seeded and reproducible; every non-empty signature keeps at least one
    page (the cap must be >= 1).
    """
    if per_layout_cap < 1:
        raise ValueError("per-layout cap must be >= 1")
    groups: dict[str, list[str]] = {}
    for pid in report.selected:
        groups.setdefault(layout_signature(gt_pages[pid]), []).append(pid)
    rng = random.Random(seed)
    keep: list[str] = []
    signatures: dict[str, int] = {}
    for sig in sorted(groups):
        pages = sorted(groups[sig])
        if len(pages) > per_layout_cap:
            pages = sorted(rng.sample(pages, per_layout_cap))
        keep.extend(pages)
        signatures[sig] = len(pages)
    out = SelectionReport(selected=sorted(keep), signatures=signatures,
                          rejections=dict(report.rejections))
    return out
