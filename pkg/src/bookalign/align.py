"""Two-stage forced alignment of ground-truth page text to OCR text.

Stage one finds anchors: n-grams unique in both texts, merged into maximal
runs and chained monotonically (the role the line-level text-reuse pass plays
at corpus scale). Stage two closes the gaps between anchors with a banded
global character alignment under an affine gap model, which also localizes
short regions (page numbers, signatures, catchwords) that are too small to
anchor. OCR lines are then assigned to the region whose ground-truth span
holds the majority of the line's matched characters.

The DP kernel works in band-offset coordinates (column d = j - i + k) so the
same code serves the banded case and the full-matrix fallback (band wide
enough to cover every cell). Rows are numpy-vectorized; the horizontal gap
layer uses a running-maximum scan so affine costs stay O(width) per row.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .ocr import NormalizeConfig, DEFAULT_NORMALIZE, OcrPage, normalize_text
from .tei import PageRecord

log = logging.getLogger(__name__)

NEG = -(2 ** 28)
MAX_DP_CELLS = 16_000_000


class AlignmentError(Exception):
    pass


class SegmentTooLongError(AlignmentError):
    """Segment exceeds the DP capacity; raise band-width or split the segment."""


@dataclass(frozen=True)
class AlignmentParams:
    anchor_ngram: int = 12
    band_width: int = 64
    match_score: int = 1
    mismatch_cost: int = -1
    gap_open: int = -2
    gap_extend: int = -1
    min_line_assign_fraction: float = 0.5
    max_segment: int = 10_000

    def __post_init__(self):
        if self.band_width < self.anchor_ngram:
            raise ValueError("band-width must be >= anchor n-gram length")

    @classmethod
    def from_dict(cls, d: dict) -> "AlignmentParams":
        keys = {
            "anchor-ngram": "anchor_ngram",
            "band-width": "band_width",
            "match-score": "match_score",
            "mismatch-cost": "mismatch_cost",
            "gap-open": "gap_open",
            "gap-extend": "gap_extend",
            "min-line-assign-fraction": "min_line_assign_fraction",
            "max-segment": "max_segment",
        }
        kwargs = {keys[k]: v for k, v in d.items() if k in keys}
        unknown = [k for k in d if k not in keys and k != "normalize"]
        if unknown:
            raise ValueError(f"unknown alignment parameter(s): {unknown}")
        return cls(**kwargs)


class Anchor(NamedTuple):
    gt: int
    ocr: int
    length: int


@dataclass
class AnchorChain:
    anchors: list[Anchor]
    monotone: bool = True


@dataclass
class CharAlignment:
    """Global character correspondence.

    Each pair is (gt_offset, ocr_offset); one side None encodes a gap. Every
    character of both inputs appears exactly once, offsets strictly increase.
    """

    pairs: list[tuple[Optional[int], Optional[int]]]
    score: int

    def matched(self, gt: str, ocr: str) -> list[tuple[int, int]]:
        """Pairs whose characters are actually equal."""
        return [(g, o) for g, o in self.pairs
                if g is not None and o is not None and gt[g] == ocr[o]]


# ---------------------------------------------------------------------------
# anchors


def find_anchors(gt: str, ocr: str, params: AlignmentParams) -> list[Anchor]:
    """N-grams of the configured length occurring exactly once in each text,
    merged into maximal diagonal runs."""
    L = params.anchor_ngram
    if len(gt) < L or len(ocr) < L:
        return []

    def unique_grams(s):
        seen: dict[str, int] = {}
        for i in range(len(s) - L + 1):
            g = s[i: i + L]
            seen[g] = -1 if g in seen else i
        return {g: i for g, i in seen.items() if i >= 0}

    ug, uo = unique_grams(gt), unique_grams(ocr)
    pairs = sorted((i, uo[g]) for g, i in ug.items() if g in uo)
    anchors: list[Anchor] = []
    for g, o in pairs:
        if anchors and g == anchors[-1].gt + anchors[-1].length - L + 1 \
                and o == anchors[-1].ocr + anchors[-1].length - L + 1:
            anchors[-1] = anchors[-1]._replace(length=anchors[-1].length + 1)
        else:
            anchors.append(Anchor(g, o, L))
    return anchors


def chain_anchors(anchors: Sequence[Anchor]) -> AnchorChain:
    """Maximum-total-length subset strictly increasing in both offsets.

    Ties go to the chain whose gt-offset sequence is lexicographically
    earliest.
    """
    order = sorted(anchors)
    n = len(order)
    total = [0] * n
    nxt = [-1] * n
    for i in range(n - 1, -1, -1):
        best, best_j = 0, -1
        for j in range(i + 1, n):
            if order[j].gt > order[i].gt and order[j].ocr > order[i].ocr:
                if total[j] > best:  # first hit in (gt, ocr) order wins ties
                    best, best_j = total[j], j
        total[i] = order[i].length + best
        nxt[i] = best_j
    start, best = -1, 0
    for i in range(n):
        if total[i] > best:
            best, start = total[i], i
    chain = []
    while start != -1:
        chain.append(order[start])
        start = nxt[start]
    return AnchorChain(chain, monotone=True)


def trim_anchor_overlaps(anchors: Sequence[Anchor]) -> list[Anchor]:
    """Shrink chained anchors so consecutive spans are disjoint on both sides."""
    out: list[Anchor] = []
    for a in anchors:
        if out:
            prev = out[-1]
            cut = max(0, prev.gt + prev.length - a.gt, prev.ocr + prev.length - a.ocr)
            if cut >= a.length:
                continue
            if cut:
                a = Anchor(a.gt + cut, a.ocr + cut, a.length - cut)
        out.append(a)
    return out


# ---------------------------------------------------------------------------
# banded affine-gap DP


def _codes(s: str) -> np.ndarray:
    return np.frombuffer(s.encode("utf-32-le"), dtype=np.uint32)


def _dp_matrices(a: str, b: str, params: AlignmentParams, k: int,
                 free_b: np.ndarray | None):
    """Fill the three Gotoh layers in band-offset storage.

    M ends in a substitution pair, X ends consuming a char of ``a`` (gap in
    b), Y ends consuming a char of ``b`` (gap in a). Cell (i, d) is matrix
    cell (i, j) with j = i + d - k.

    Cells outside the valid j-range start at NEG and can only drift by small
    per-row costs, so they stay far below any reachable score and valid cells
    never read them; no per-row masking is needed.
    """
    n, m = len(a), len(b)
    width = 2 * k + 1
    mt, mm = params.match_score, params.mismatch_cost
    go, ge = params.gap_open, params.gap_extend
    goe = go + ge

    acodes = _codes(a)
    pad_len = max(n, m) + width + 1
    bpad = np.zeros(pad_len, dtype=np.uint32)  # bpad[j + k] = b[j-1]
    if m:
        bpad[k + 1: k + 1 + m] = _codes(b)

    M = np.full((n + 1, width), NEG, dtype=np.int32)
    X = np.full((n + 1, width), NEG, dtype=np.int32)
    Y = np.full((n + 1, width), NEG, dtype=np.int32)
    M[0, k] = 0

    uniform = free_b is None or not free_b.any()
    if uniform:
        # constant costs: the prefix-sum vector is a fixed ramp
        S = ge * (np.arange(width, dtype=np.int64) + 1)
    else:
        # per-column gap costs; free columns cost nothing to skip
        Epad = np.full(pad_len, ge, dtype=np.int32)
        Opad = np.full(pad_len, goe, dtype=np.int32)
        idx = np.nonzero(free_b)[0]
        Epad[idx + k + 1] = 0
        Opad[idx + k + 1] = 0

    w = np.empty(width, dtype=np.int64)
    t1 = np.empty(width - 1, dtype=np.int32)
    t2 = np.empty(width - 1, dtype=np.int32)

    def fill_y(i: int, P: np.ndarray):
        # Y[i][d] = max(P[d-1] + O_j(d), Y[i][d-1] + E_j(d)); substituting
        # u = Y - S (S = prefix sums of extends) turns it into a running max.
        if uniform:
            s = S
            w[1:] = P[:-1]
            w[1:] += goe
            w[1:] -= s[1:]
        else:
            s = np.cumsum(Epad[i: i + width], dtype=np.int64)
            w[1:] = P[:-1]
            w[1:] += Opad[i + 1: i + width]
            w[1:] -= s[1:]
        w[0] = NEG
        np.maximum.accumulate(w, out=w)
        row = Y[i]
        np.add(w, s, out=w)
        row[:] = np.minimum(w, 2 ** 30)  # keep int32-safe; garbage stays huge-negative
        row[0] = NEG

    P0 = np.maximum(M[0], X[0])
    fill_y(0, P0)

    for i in range(1, n + 1):
        prevM, prevX, prevY = M[i - 1], X[i - 1], Y[i - 1]
        mrow, xrow = M[i], X[i]
        # M: diagonal move from the best previous layer
        np.maximum(prevM, prevX, out=mrow)
        np.maximum(mrow, prevY, out=mrow)
        eq = bpad[i: i + width] == acodes[i - 1]
        mrow += mm
        mrow += eq * np.int32(mt - mm)
        # X: vertical move (consume a[i-1]) from (i-1, d+1)
        np.maximum(prevM[1:], prevY[1:], out=t1)
        t1 += goe
        np.add(prevX[1:], ge, out=t2)
        np.maximum(t1, t2, out=xrow[:-1])
        xrow[-1] = NEG
        fill_y(i, np.maximum(mrow, xrow))
    return M, X, Y


def _traceback(a, b, params, k, free_b, M, X, Y) -> CharAlignment:
    n, m = len(a), len(b)
    go, ge = params.gap_open, params.gap_extend
    goe = go + ge
    d = m - n + k
    i = n
    state = max(((M[i][d], 2), (X[i][d], 1), (Y[i][d], 0)))[1]
    score = int((M, X, Y)[2 - state][i][d])
    pairs: list[tuple[Optional[int], Optional[int]]] = []

    def col_costs(j):
        if free_b is not None and j >= 1 and free_b[j - 1]:
            return 0, 0
        return goe, ge

    while True:
        j = i + d - k
        if i == 0 and j == 0:
            break
        if state == 2:  # M: consume a[i-1], b[j-1]
            pairs.append((i - 1, j - 1))
            val = int(M[i][d]) - (params.match_score if a[i - 1] == b[j - 1]
                                  else params.mismatch_cost)
            i -= 1
            if M[i][d] == val:
                state = 2
            elif X[i][d] == val:
                state = 1
            elif Y[i][d] == val:
                state = 0
            else:
                raise AlignmentError("traceback desync in M layer")
        elif state == 1:  # X: consume a[i-1]
            pairs.append((i - 1, None))
            val = int(X[i][d])
            i -= 1
            d += 1
            if X[i][d] == val - ge:
                state = 1
            elif M[i][d] == val - goe:
                state = 2
            elif Y[i][d] == val - goe:
                state = 0
            else:
                raise AlignmentError("traceback desync in X layer")
        else:  # Y: consume b[j-1]
            pairs.append((None, j - 1))
            o_cost, e_cost = col_costs(j)
            val = int(Y[i][d])
            d -= 1
            if Y[i][d] == val - e_cost:
                state = 0
            elif M[i][d] == val - o_cost:
                state = 2
            elif X[i][d] == val - o_cost:
                state = 1
            else:
                raise AlignmentError("traceback desync in Y layer")
    pairs.reverse()
    return CharAlignment(pairs, score)


def banded_char_align(gt: str, ocr: str, params: AlignmentParams = AlignmentParams(),
                      free_ocr: np.ndarray | None = None) -> CharAlignment:
    """Optimal global alignment of two segments under the affine gap model.

    Within the diagonal band |i - j| <= band-width when the length difference
    fits; otherwise a full-matrix computation (band covering every cell).
    ``free_ocr`` marks OCR positions whose deletion is free (hyphen joins).
    """
    n, m = len(gt), len(ocr)
    if max(n, m) > params.max_segment:
        raise SegmentTooLongError(
            f"segment of {max(n, m)} chars exceeds max-segment "
            f"({params.max_segment}); raise band-width/max-segment or split")
    if n == 0 and m == 0:
        return CharAlignment([], 0)
    if n == 0 or m == 0:
        return _degenerate_alignment(gt, ocr, params, free_ocr)

    if abs(n - m) >= params.band_width:
        k = max(n, m)  # full matrix
    else:
        k = min(params.band_width, max(n, m))
    cells = (n + 1) * (2 * k + 1)
    if cells > MAX_DP_CELLS:
        raise SegmentTooLongError(
            f"DP of {cells} cells exceeds capacity; raise band-width or "
            f"split the segment")
    M, X, Y = _dp_matrices(gt, ocr, params, k, free_ocr)
    return _traceback(gt, ocr, params, k, free_ocr, M, X, Y)


def _degenerate_alignment(gt, ocr, params, free_ocr) -> CharAlignment:
    if len(gt) == 0:
        billable = [j for j in range(len(ocr))
                    if free_ocr is None or not free_ocr[j]]
        score = (params.gap_open if billable else 0) \
            + params.gap_extend * len(billable)
        return CharAlignment([(None, j) for j in range(len(ocr))], score)
    score = params.gap_open + params.gap_extend * len(gt)
    return CharAlignment([(i, None) for i in range(len(gt))], score)


# ---------------------------------------------------------------------------
# page alignment


def _align_with_anchors(gt: str, ocr: str, params: AlignmentParams,
                        free_ocr: np.ndarray | None = None) -> CharAlignment:
    """Anchor-seeded global alignment: exact matches on the anchor chain,
    banded DP on the segments between anchors."""
    anchors = trim_anchor_overlaps(chain_anchors(find_anchors(gt, ocr, params)).anchors)
    pairs: list[tuple[Optional[int], Optional[int]]] = []
    score = 0
    cg = co = 0
    for g, o, length in list(anchors) + [Anchor(len(gt), len(ocr), 0)]:
        seg = banded_char_align(
            gt[cg:g], ocr[co:o], params,
            None if free_ocr is None else free_ocr[co:o])
        pairs.extend((None if pg is None else pg + cg,
                      None if po is None else po + co) for pg, po in seg.pairs)
        score += seg.score
        pairs.extend((g + t, o + t) for t in range(length))
        score += params.match_score * length
        cg, co = g + length, o + length
    return CharAlignment(pairs, score)


@dataclass
class LineAssignment:
    line_index: int
    region_index: Optional[int]
    fraction: float
    matched: int


@dataclass
class PageAlignment:
    gt_text: str
    ocr_text: str
    alignment: CharAlignment
    region_spans: list[tuple[int, int]]
    line_spans: list[tuple[int, int]]
    lines: list[LineAssignment]

    def to_json(self, page: PageRecord, ocr: OcrPage) -> dict:
        return {
            "edition": page.edition_id,
            "page_index": page.page_index,
            "image": ocr.image or page.image,
            "score": self.alignment.score,
            "regions": [
                {"index": i, "type": r.region_type.value, "run_on": r.run_on,
                 "gt_span": list(self.region_spans[i]),
                 "located": any(l.region_index == i for l in self.lines)}
                for i, r in enumerate(page.regions)
            ],
            "lines": [
                {"index": l.line_index, "region": l.region_index,
                 "fraction": round(l.fraction, 6), "matched": l.matched}
                for l in self.lines
            ],
        }


def align_page(page: PageRecord, ocr: OcrPage,
               params: AlignmentParams = AlignmentParams(),
               norm: NormalizeConfig = DEFAULT_NORMALIZE) -> PageAlignment:
    """Align a page's region transcripts to its OCR and assign lines to regions.

    The ground-truth stream is the page's regions in reading order (body
    first, floats after); OCR lines are joined with single-space sentinels.
    A line goes to the region whose span covers the largest fraction of the
    line's matched characters, provided the fraction reaches the configured
    floor; lines with no matches stay unassigned.
    """
    gt_parts, region_spans = [], []
    pos = 0
    for r in page.regions:
        t = normalize_text(r.text, norm)
        if gt_parts and t:
            pos += 1  # separator
        start = pos
        if t:
            gt_parts.append(t)
            pos += len(t)
        region_spans.append((start, pos))
    gt_text = " ".join(gt_parts)

    ocr_parts, line_spans = [], []
    free: list[int] = []
    pos = 0
    for line in ocr.lines:
        t = normalize_text(line.text, norm)
        if ocr_parts and t:
            pos += 1
        start = pos
        if t:
            ocr_parts.append(t)
            pos += len(t)
            if line.hyphen and t.endswith("-"):
                free.append(pos - 1)  # the hyphen itself
                free.append(pos)      # the separator that follows (if any)
        line_spans.append((start, pos))
    ocr_text = " ".join(ocr_parts)

    free_mask = None
    if free:
        free_mask = np.zeros(len(ocr_text), dtype=bool)
        free_mask[[f for f in free if f < len(ocr_text)]] = True

    alignment = _align_with_anchors(gt_text, ocr_text, params, free_mask)

    # matched gt offset for every matched ocr offset
    gt_of = {o: g for g, o in alignment.matched(gt_text, ocr_text)}
    assignments = []
    for idx, (s, e) in enumerate(line_spans):
        hits = [gt_of[o] for o in range(s, e) if o in gt_of]
        if not hits:
            assignments.append(LineAssignment(idx, None, 0.0, 0))
            continue
        counts = [0] * len(region_spans)
        for g in hits:
            for ri, (rs, re_) in enumerate(region_spans):
                if rs <= g < re_:
                    counts[ri] += 1
                    break
        best = max(range(len(counts)), key=lambda ri: (counts[ri], -ri))
        frac = counts[best] / len(hits)
        if counts[best] == 0 or frac < params.min_line_assign_fraction:
            assignments.append(LineAssignment(idx, None, frac, len(hits)))
        else:
            assignments.append(LineAssignment(idx, best, frac, len(hits)))
    return PageAlignment(gt_text, ocr_text, alignment, region_spans,
                         line_spans, assignments)


# ---------------------------------------------------------------------------
# page and book matching


def score_page_pair(a: str, b: str, params: AlignmentParams = AlignmentParams()
                    ) -> float:
    """Similarity = matched characters / max length, in [0, 1].

    Two empty texts count as identical. Operands are ordered canonically
    before aligning so the measure is exactly symmetric.
    """
    if not a and not b:
        return 1.0
    x, y = sorted((a, b))
    try:
        alignment = _align_with_anchors(x, y, params)
    except SegmentTooLongError:
        log.warning("page pair too long for DP without anchors; similarity 0")
        return 0.0
    return len(alignment.matched(x, y)) / max(len(a), len(b))


@dataclass
class PageMatch:
    scan_page: int
    edition_page: int
    similarity: float


@dataclass
class BookMatchReport:
    scan_book_id: str
    edition_id: str
    frac_scan_aligned: float = 0.0
    frac_edition_aligned: float = 0.0
    frac_scan_multimatch: float = 0.0
    accepted: bool = False
    reason: Optional[str] = None
    matches: list[PageMatch] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "scan_book": self.scan_book_id,
            "edition": self.edition_id,
            "frac_scan_aligned": self.frac_scan_aligned,
            "frac_edition_aligned": self.frac_edition_aligned,
            "frac_scan_multimatch": self.frac_scan_multimatch,
            "accepted": self.accepted,
            "reason": self.reason,
            "matches": [{"scan_page": m.scan_page, "edition_page": m.edition_page,
                         "similarity": round(m.similarity, 6)} for m in self.matches],
        }


def match_books(scan_texts: Sequence[str], edition_texts: Sequence[str],
                params: AlignmentParams = AlignmentParams(),
                page_threshold: float = 0.5,
                scan_book_id: str = "", edition_id: str = "",
                sim_matrix: np.ndarray | None = None) -> BookMatchReport:
    """Accept a scan/edition book pair when 80% of pages align each way and
    fewer than 10% of scan pages align ambiguously.

    A page pair "aligns" when its similarity reaches ``page_threshold``; a
    scan page is ambiguous when two or more edition pages do. ``sim_matrix``
    lets callers supply precomputed similarities (e.g. from a parallel map).
    """
    report = BookMatchReport(scan_book_id, edition_id)
    if not scan_texts or not edition_texts:
        report.reason = "empty-book"
        return report
    ns, ne = len(scan_texts), len(edition_texts)
    if sim_matrix is None:
        sim_matrix = np.zeros((ns, ne))
        for i, s in enumerate(scan_texts):
            for j, e in enumerate(edition_texts):
                sim_matrix[i, j] = score_page_pair(s, e, params)
    hits = sim_matrix >= page_threshold
    scan_aligned = hits.any(axis=1)
    report.frac_scan_aligned = float(scan_aligned.mean())
    report.frac_edition_aligned = float(hits.any(axis=0).mean())
    report.frac_scan_multimatch = float((hits.sum(axis=1) >= 2).mean())
    report.accepted = (report.frac_scan_aligned >= 0.8
                       and report.frac_edition_aligned >= 0.8
                       and report.frac_scan_multimatch < 0.1)
    if not report.accepted:
        report.reason = "thresholds-not-met"
    for i in range(ns):
        if scan_aligned[i]:
            j = int(sim_matrix[i].argmax())
            report.matches.append(PageMatch(i, j, float(sim_matrix[i, j])))
    return report
