import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bookalign.align import (
    AlignmentParams,
    Anchor,
    SegmentTooLongError,
    banded_char_align,
    chain_anchors,
    find_anchors,
    match_books,
    score_page_pair,
    trim_anchor_overlaps,
)

from oracles import (
    best_chain_exhaustive,
    best_chain_memo,
    gotoh_full,
    gotoh_tiny,
    path_fits_band,
)

P = AlignmentParams()


def rand_text(rng, n, alphabet="abcdefghijklmnopqrstuvwxyz0123"):
    return "".join(rng.choice(alphabet) for _ in range(n))


def noisy_copy(rng, s, rate, alphabet="abcdefghijklmnopqrstuvwxyz0123"):
    out = []
    for ch in s:
        r = rng.random()
        if r < rate * 0.6:
            out.append(rng.choice(alphabet))
        elif r < rate * 0.8:
            pass  # deletion
        else:
            out.append(ch)
            if r < rate:
                out.append(rng.choice(alphabet))
    return "".join(out)


# ---------------------------------------------------------------------------
# oracle self-check


def test_oracle_against_tiny_recursion():
    rng = random.Random(7)
    for _ in range(40):
        a = rand_text(rng, rng.randint(0, 9), "abc")
        b = rand_text(rng, rng.randint(0, 9), "abc")
        full, _ = gotoh_full(a, b)
        tiny = gotoh_tiny(a, b)
        assert full == pytest.approx(tiny)


# ---------------------------------------------------------------------------
# banded_char_align


def test_identity():
    out = banded_char_align("abc", "abc", P)
    assert out.pairs == [(0, 0), (1, 1), (2, 2)]
    assert out.score == 3


def test_kitten_sitting():
    out = banded_char_align("kitten", "sitting", P)
    score, _ = gotoh_full("kitten", "sitting")
    assert out.score == score
    subs = sum(1 for g, o in out.pairs
               if g is not None and o is not None and "kitten"[g] != "sitting"[o])
    ins = sum(1 for g, o in out.pairs if g is None)
    dels = sum(1 for g, o in out.pairs if o is None)
    assert (subs, ins, dels) == (2, 1, 0)  # edit distance 3


def test_empty_sides():
    out = banded_char_align("abc", "", P)
    assert out.pairs == [(0, None), (1, None), (2, None)]
    assert out.score == P.gap_open + 3 * P.gap_extend
    out = banded_char_align("", "xy", P)
    assert out.score == P.gap_open + 2 * P.gap_extend
    assert banded_char_align("", "", P).score == 0


def test_segment_cap():
    params = AlignmentParams(max_segment=10)
    with pytest.raises(SegmentTooLongError):
        banded_char_align("a" * 11, "a" * 11, params)


def _check_complete(out, a, b):
    gts = [g for g, _ in out.pairs if g is not None]
    ocrs = [o for _, o in out.pairs if o is not None]
    assert gts == list(range(len(a)))
    assert ocrs == list(range(len(b)))


def test_band_matches_full_dp_when_path_fits():
    rng = random.Random(1234)
    checked = 0
    for _ in range(150):
        n = rng.randint(0, 160)
        a = rand_text(rng, n)
        b = noisy_copy(rng, a, rng.random() * 0.3)
        out = banded_char_align(a, b, P)
        _check_complete(out, a, b)
        full_score, full_pairs = gotoh_full(a, b)
        assert out.score <= full_score + 1e-9
        if abs(len(a) - len(b)) < P.band_width and path_fits_band(full_pairs, P.band_width):
            assert out.score == full_score
            checked += 1
    assert checked > 100  # the property was actually exercised


def test_full_fallback_on_large_length_gap():
    rng = random.Random(5)
    a = rand_text(rng, 150)
    b = a[:40]  # length difference 110 >= band width
    out = banded_char_align(a, b, P)
    full_score, _ = gotoh_full(a, b)
    assert out.score == full_score
    _check_complete(out, a, b)


def test_free_columns_cost_nothing():
    # deleting the marked OCR chars is free and opens no gap
    a = "auflage"
    b = "auf- lage"
    free = np.zeros(len(b), dtype=bool)
    free[3] = free[4] = True  # "-" and the separator
    out = banded_char_align(a, b, AlignmentParams(), free_ocr=free)
    assert out.score == len(a) * P.match_score
    matched = out.matched(a, b)
    assert len(matched) == len(a)


@settings(max_examples=60, deadline=None)
@given(st.text(alphabet="abcd", max_size=40), st.text(alphabet="abcd", max_size=40))
def test_alignment_completeness_and_monotonicity(a, b):
    out = banded_char_align(a, b, P)
    _check_complete(out, a, b)
    # strictly increasing offsets on each side
    last_g = last_o = -1
    for g, o in out.pairs:
        if g is not None:
            assert g > last_g
            last_g = g
        if o is not None:
            assert o > last_o
            last_o = o


@settings(max_examples=60, deadline=None)
@given(st.text(alphabet="abc", max_size=30), st.text(alphabet="abc", min_size=1,
                                                     max_size=30),
       st.integers(0, 2 ** 30 - 1))
def test_free_columns_never_hurt(a, b, mask_bits):
    free = np.array([(mask_bits >> i) & 1 == 1 for i in range(len(b))])
    base = banded_char_align(a, b, P)
    freed = banded_char_align(a, b, P, free_ocr=free)
    assert freed.score >= base.score  # free deletions can only help
    _check_complete(freed, a, b)


# ---------------------------------------------------------------------------
# anchors


def test_anchor_identity_run():
    rng = random.Random(99)
    text = rand_text(rng, 100, "abcdefghijklmnopqrstuvwxyz0123456789")
    anchors = find_anchors(text, text, P)
    assert anchors == [Anchor(0, 0, 100)]


def test_anchor_single_shared_gram():
    gram = "0123456789AB"
    gt = "aaaaa" + gram + "bbbbbbbb"
    ocr = "n" * 40 + gram + "ppp"
    assert find_anchors(gt, ocr, P) == [Anchor(5, 40, 12)]


def test_repeated_gram_is_no_anchor():
    gram = "0123456789AB"
    gt = gram + "x" + gram  # twice in gt
    ocr = "q" * 7 + gram + "r" * 9
    assert find_anchors(gt, ocr, P) == []


def test_chain_monotone_input_unchanged():
    anchors = [Anchor(0, 0, 12), Anchor(20, 25, 14), Anchor(50, 60, 12)]
    assert chain_anchors(anchors).anchors == anchors


def test_chain_tie_prefers_earliest_gt():
    anchors = [Anchor(0, 50, 12), Anchor(20, 10, 12)]
    assert chain_anchors(anchors).anchors == [Anchor(0, 50, 12)]


def test_chain_against_bruteforce():
    rng = random.Random(42)
    for trial in range(30):
        n = rng.randint(0, 15)
        anchors = [Anchor(rng.randint(0, 80), rng.randint(0, 80),
                          rng.randint(1, 12)) for _ in range(n)]
        got = sum(a.length for a in chain_anchors(anchors).anchors)
        assert got == best_chain_exhaustive(anchors)


def test_chain_50_anchors_against_memo_oracle():
    rng = random.Random(7)
    anchors = [Anchor(rng.randint(0, 400), rng.randint(0, 400),
                      rng.randint(1, 12)) for _ in range(50)]
    got = sum(a.length for a in chain_anchors(anchors).anchors)
    assert got == best_chain_memo(anchors)


def test_trim_overlaps():
    anchors = [Anchor(0, 0, 12), Anchor(8, 8, 12)]
    trimmed = trim_anchor_overlaps(anchors)
    assert trimmed == [Anchor(0, 0, 12), Anchor(12, 12, 8)]
    spans_ok = all(a.gt + a.length <= b.gt and a.ocr + a.length <= b.ocr
                   for a, b in zip(trimmed, trimmed[1:]))
    assert spans_ok


# ---------------------------------------------------------------------------
# page similarity and book matching


def test_score_identity_and_disjoint():
    rng = random.Random(3)
    t = rand_text(rng, 200)
    assert score_page_pair(t, t, P) == 1.0
    a = rand_text(rng, 80, "abcde")
    b = rand_text(rng, 80, "vwxyz")
    assert score_page_pair(a, b, P) == 0.0
    assert score_page_pair("", "", P) == 1.0


def test_score_half_overlap_matches_oracle():
    rng = random.Random(11)
    shared = rand_text(rng, 100)
    a = rand_text(rng, 50, "abcde") + shared
    b = shared + rand_text(rng, 50, "vwxyz")
    got = score_page_pair(a, b, P)
    x, y = sorted((a, b))
    _, pairs = gotoh_full(x, y)
    matched = sum(1 for g, o in pairs
                  if g is not None and o is not None and x[g] == y[o])
    assert got == pytest.approx(matched / max(len(a), len(b)))


@settings(max_examples=30, deadline=None)
@given(st.text(alphabet="ab", max_size=30), st.text(alphabet="ab", max_size=30))
def test_score_symmetry(a, b):
    assert score_page_pair(a, b, P) == score_page_pair(b, a, P)


def _book(rng, n_pages, length=150):
    return [rand_text(rng, length) for _ in range(n_pages)]


def test_match_books_identical():
    rng = random.Random(21)
    book = _book(rng, 10)
    rep = match_books(book, list(book), P)
    assert (rep.frac_scan_aligned, rep.frac_edition_aligned,
            rep.frac_scan_multimatch) == (1.0, 1.0, 0.0)
    assert rep.accepted


def test_match_books_low_coverage_rejected():
    rng = random.Random(22)
    edition = _book(rng, 10)
    scan = edition[:7] + _book(rng, 3, 150)  # 0.7 coverage
    rep = match_books(scan, edition, P)
    assert rep.frac_scan_aligned == pytest.approx(0.7)
    assert not rep.accepted


def test_match_books_duplicate_edition_pages_rejected():
    rng = random.Random(23)
    scan = _book(rng, 5)
    edition = scan + scan  # every scan page matches two edition pages
    rep = match_books(scan, edition, P)
    assert rep.frac_scan_multimatch == 1.0
    assert not rep.accepted


def test_match_books_empty_rejected():
    rep = match_books([], ["x"], P)
    assert not rep.accepted and rep.reason == "empty-book"
