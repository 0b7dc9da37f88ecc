"""Evaluation metrics: pixel-level segmentation scores, word- and
region-level retrieval, detection average precision, and Pearson correlation.

Pixel metrics derive from a mergeable confusion tally so corpus evaluation
can map over pages in parallel and sum the tallies. With t_i the reference
pixel count of class i and n_ij the count of class-i pixels predicted as j:

    p_acc = sum_i n_ii / sum_i t_i
    m_acc = mean_i n_ii / t_i
    iu_i  = n_ii / (t_i + sum_j n_ji - n_ii)
    m_iu  = mean_i iu_i
    f_iu  = sum_i t_i * iu_i / sum_k t_k

Means run over classes with t_i > 0. Background is class 0 and participates
by default; ``exclude_background`` removes it from sums and means (per-class
IoU denominators still see background false positives).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .geometry import BBox
from .tei import CLASS_IDS, RegionType

NUM_CLASSES = len(CLASS_IDS) + 1  # background + region types

CLASS_NAMES = ["background"] + [t.value for t in RegionType]


# ---------------------------------------------------------------------------
# pixel metrics


@dataclass
class ConfusionTally:
    n: np.ndarray  # (NUM_CLASSES, NUM_CLASSES) int64, reference x predicted

    @classmethod
    def empty(cls) -> "ConfusionTally":
        return cls(np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64))

    @classmethod
    def from_grids(cls, ref: np.ndarray, pred: np.ndarray) -> "ConfusionTally":
        if ref.shape != pred.shape:
            raise ValueError(f"grid shapes differ: {ref.shape} vs {pred.shape}")
        joint = ref.astype(np.int64).ravel() * NUM_CLASSES + pred.ravel()
        counts = np.bincount(joint, minlength=NUM_CLASSES * NUM_CLASSES)
        return cls(counts.reshape(NUM_CLASSES, NUM_CLASSES))

    def merge(self, other: "ConfusionTally") -> "ConfusionTally":
        return ConfusionTally(self.n + other.n)

    @property
    def total(self) -> int:
        return int(self.n.sum())

    def to_json(self) -> dict:
        return {"classes": CLASS_NAMES, "matrix": self.n.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> "ConfusionTally":
        return cls(np.asarray(d["matrix"], dtype=np.int64))


def merge_tallies(tallies) -> ConfusionTally:
    out = ConfusionTally.empty()
    for t in tallies:
        out = out.merge(t)
    return out


@dataclass
class PixelMetrics:
    p_acc: float
    m_acc: float
    m_iu: float
    f_iu: float
    per_class_acc: dict[str, float]
    per_class_iu: dict[str, float]

    def to_json(self) -> dict:
        return {"p_acc": self.p_acc, "m_acc": self.m_acc,
                "m_iu": self.m_iu, "f_iu": self.f_iu,
                "per_class_acc": self.per_class_acc,
                "per_class_iu": self.per_class_iu}


def pixel_metrics(tally: ConfusionTally, exclude_background: bool = False
                  ) -> PixelMetrics:
    n = tally.n
    if n.sum() == 0:
        raise ValueError("empty confusion tally")
    t = n.sum(axis=1)
    col = n.sum(axis=0)
    diag = np.diag(n)
    classes = [c for c in range(NUM_CLASSES) if t[c] > 0]
    if exclude_background:
        classes = [c for c in classes if c != 0]
    if not classes:
        raise ValueError("no reference pixels in scored classes")
    accs = {c: diag[c] / t[c] for c in classes}
    ius = {c: diag[c] / (t[c] + col[c] - diag[c]) for c in classes}
    t_sum = sum(int(t[c]) for c in classes)
    return PixelMetrics(
        p_acc=sum(int(diag[c]) for c in classes) / t_sum,
        m_acc=sum(accs.values()) / len(classes),
        m_iu=sum(ius.values()) / len(classes),
        f_iu=sum(int(t[c]) * ius[c] for c in classes) / t_sum,
        per_class_acc={CLASS_NAMES[c]: float(accs[c]) for c in classes},
        per_class_iu={CLASS_NAMES[c]: float(ius[c]) for c in classes},
    )


# ---------------------------------------------------------------------------
# retrieval counts


@dataclass
class RetrievalCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def merge(self, other: "RetrievalCounts") -> "RetrievalCounts":
        return RetrievalCounts(self.tp + other.tp, self.fp + other.fp,
                               self.fn + other.fn)

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def to_json(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn,
                "recall": self.recall, "precision": self.precision,
                "f1": self.f1}


# ---------------------------------------------------------------------------
# word-level retrieval


def words_inside(mask: np.ndarray, words: Sequence[BBox],
                 min_coverage: float = 0.5) -> set[int]:
    """Indices of word boxes covered by the mask for at least the given
    fraction of their area (mask at scale 1). Degenerate boxes never count."""
    inside = set()
    h, w = mask.shape
    for i, box in enumerate(words):
        x0 = max(0, int(np.floor(box.x0)))
        y0 = max(0, int(np.floor(box.y0)))
        x1 = min(w, int(np.ceil(box.x1)))
        y1 = min(h, int(np.ceil(box.y1)))
        area = (x1 - x0) * (y1 - y0)
        if area <= 0:
            continue
        covered = int(mask[y0:y1, x0:x1].sum())
        if covered >= min_coverage * area:
            inside.add(i)
    return inside


def word_level_retrieval(ref_masks: dict[RegionType, np.ndarray],
                         pred_masks: dict[RegionType, np.ndarray],
                         words: Sequence[BBox],
                         min_coverage: float = 0.5
                         ) -> dict[RegionType, RetrievalCounts]:
    """Per-type retrieval of OCR word boxes: a word belongs to a type when at
    least half its area lies in the union of that type's regions."""
    out: dict[RegionType, RetrievalCounts] = {}
    for rtype in set(ref_masks) | set(pred_masks):
        ref_words = words_inside(ref_masks[rtype], words, min_coverage) \
            if rtype in ref_masks else set()
        pred_words = words_inside(pred_masks[rtype], words, min_coverage) \
            if rtype in pred_masks else set()
        out[rtype] = RetrievalCounts(tp=len(ref_words & pred_words),
                                     fp=len(pred_words - ref_words),
                                     fn=len(ref_words - pred_words))
    return out


# ---------------------------------------------------------------------------
# region-level retrieval


@dataclass(frozen=True)
class RegionGate:
    """Optional presence gate for predicted instances.

    mode "score": an instance counts only with confidence >= threshold.
    mode "iou": an instance counts only when it overlaps some same-type
    reference region with IoU >= threshold (bounding-rectangle IoU).
    """
    mode: str  # "score" | "iou"
    threshold: float


def _present_types(ann, gate: Optional[RegionGate], ref_ann=None) -> set[RegionType]:
    present = set()
    for r in ann.regions:
        if gate is None:
            present.add(r.region_type)
        elif gate.mode == "score":
            if r.score is None or r.score >= gate.threshold:
                present.add(r.region_type)
        elif gate.mode == "iou":
            if ref_ann is None:
                raise ValueError("iou gate needs reference geometries")
            for ref in ref_ann.regions:
                if ref.region_type is r.region_type \
                        and r.bbox.iou(ref.bbox) >= gate.threshold:
                    present.add(r.region_type)
                    break
        else:
            raise ValueError(f"unknown gate mode {gate.mode!r}")
    return present


def region_level_retrieval(ref_pages: dict, pred_pages: dict,
                           gate: Optional[RegionGate] = None
                           ) -> dict[RegionType, RetrievalCounts]:
    """Page-level presence retrieval per region type.

    ref_pages / pred_pages map page id -> PageAnnotation. Both streams must
    cover the same pages.
    """
    missing = sorted(set(ref_pages) ^ set(pred_pages))
    if missing:
        raise ValueError(f"page streams disagree on ids: {missing[:10]}")
    out = {t: RetrievalCounts() for t in RegionType}
    for pid in sorted(ref_pages):
        ref_present = {r.region_type for r in ref_pages[pid].regions}
        pred_present = _present_types(pred_pages[pid], gate, ref_pages[pid])
        for t in RegionType:
            if t in pred_present and t in ref_present:
                out[t].tp += 1
            elif t in pred_present:
                out[t].fp += 1
            elif t in ref_present:
                out[t].fn += 1
    return {t: c for t, c in out.items() if c.tp + c.fp + c.fn > 0}


# ---------------------------------------------------------------------------
# detection AP


@dataclass
class ApResult:
    per_class: dict[str, float]
    map: float
    classes_without_gt: list[str]

    def to_json(self) -> dict:
        return {"per_class": self.per_class, "mAP": self.map,
                "classes_without_gt": self.classes_without_gt}


IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))


def _class_ap(gt_boxes: dict, dets: list, taus=IOU_THRESHOLDS) -> float:
    """gt_boxes: page id -> [BBox]; dets: [(page_id, BBox, score)]."""
    total_gt = sum(len(v) for v in gt_boxes.values())
    ranked = sorted(range(len(dets)), key=lambda i: (-dets[i][2], i))
    recall_pts = np.linspace(0, 1, 101)
    aps = []
    for tau in taus:
        used = {pid: np.zeros(len(boxes), dtype=bool)
                for pid, boxes in gt_boxes.items()}
        tp = np.zeros(len(dets))
        for rank, di in enumerate(ranked):
            pid, box, _ = dets[di]
            best_iou, best_g = 0.0, -1
            for g, gt_box in enumerate(gt_boxes.get(pid, [])):
                if used[pid][g]:
                    continue
                iou = box.iou(gt_box)
                if iou >= tau and iou > best_iou:
                    best_iou, best_g = iou, g
            if best_g >= 0:
                used[pid][best_g] = True
                tp[rank] = 1
        cum_tp = np.cumsum(tp)
        recall = cum_tp / total_gt
        precision = cum_tp / np.arange(1, len(dets) + 1)
        # interpolated precision: best precision at recall >= r
        interp = np.maximum.accumulate(precision[::-1])[::-1]
        ap = 0.0
        for r in recall_pts:
            idx = np.searchsorted(recall, r - 1e-12)
            ap += interp[idx] if idx < len(interp) else 0.0
        aps.append(ap / len(recall_pts))
    return float(np.mean(aps))


def detection_ap(gt: dict, detections: dict, taus=IOU_THRESHOLDS) -> ApResult:
    """COCO-style AP averaged over IoU thresholds 0.50:0.05:0.95.

    gt: page id -> [(class_label, BBox)]; detections: page id ->
    [(class_label, BBox, score)]. Detections match greedily in descending
    score to the unmatched same-page ground-truth box of highest IoU.
    Classes with no ground-truth instances are reported separately and
    excluded from the mean.
    """
    classes = sorted({c for boxes in gt.values() for c, _ in boxes}
                     | {c for dets in detections.values() for c, _, _ in dets})
    per_class: dict[str, float] = {}
    without_gt: list[str] = []
    for cls in classes:
        gt_boxes = {pid: [b for c, b in boxes if c == cls]
                    for pid, boxes in gt.items()}
        gt_boxes = {pid: v for pid, v in gt_boxes.items() if v}
        dets = [(pid, b, s) for pid, ds in sorted(detections.items())
                for c, b, s in ds if c == cls]
        if not any(gt_boxes.values()):
            without_gt.append(cls)
            continue
        if not dets:
            per_class[cls] = 0.0
            continue
        per_class[cls] = _class_ap(gt_boxes, dets, taus)
    mean = float(np.mean(list(per_class.values()))) if per_class else 0.0
    return ApResult(per_class, mean, without_gt)


# ---------------------------------------------------------------------------
# correlation


@dataclass
class PearsonResult:
    r: float
    n: int
    p_value: float

    def to_json(self) -> dict:
        return {"r": self.r, "n": self.n, "p_value": self.p_value}


def pearson(x: Sequence[float], y: Sequence[float]) -> PearsonResult:
    """Sample Pearson r with a two-sided p-value from the t-transform."""
    if len(x) != len(y):
        raise ValueError("x and y lengths differ")
    n = len(x)
    if n < 3:
        raise ValueError("need at least 3 points")
    xs = np.asarray(x, dtype=float)
    ys = np.asarray(y, dtype=float)
    dx = xs - xs.mean()
    dy = ys - ys.mean()
    vx = float(dx @ dx)
    vy = float(dy @ dy)
    if vx == 0.0 or vy == 0.0:
        raise ValueError("zero variance: correlation undefined")
    r = float(dx @ dy) / (vx ** 0.5 * vy ** 0.5)
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        p = 0.0
    else:
        t = abs(r) * ((n - 2) / (1.0 - r * r)) ** 0.5
        p = 2.0 * float(stats.t.sf(t, n - 2))
    return PearsonResult(r, n, p)


def least_squares_fit(x: Sequence[float], y: Sequence[float]
                      ) -> tuple[float, float]:
    """Closed-form simple linear regression; returns (slope, intercept)."""
    xs = np.asarray(x, dtype=float)
    ys = np.asarray(y, dtype=float)
    if len(xs) < 2:
        raise ValueError("need at least 2 points to fit")
    dx = xs - xs.mean()
    sxx = float(dx @ dx)
    if sxx == 0.0:
        raise ValueError("x has zero variance")
    slope = float(dx @ (ys - ys.mean())) / sxx
    return slope, float(ys.mean() - slope * xs.mean())
