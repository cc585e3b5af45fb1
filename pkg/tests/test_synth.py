"""Synthetic identity-watermark corpus generator."""

from __future__ import annotations

import math

import numpy as np
import pytest

from deidpipe.errors import DeidError
from deidpipe.lexicon import match_terms
from deidpipe.synth import generate_corpus
from deidpipe.textkit import filter_report


@pytest.fixture(scope="module")
def corpus():
    return generate_corpus(40, 7, seed=11)


def test_same_seed_reproduces_the_corpus(corpus):
    again = generate_corpus(40, 7, seed=11)
    for a, b in zip(corpus.records, again.records):
        assert a.id == b.id and a.patient_id == b.patient_id and a.report == b.report
        np.testing.assert_array_equal(a.image, b.image)
    assert corpus.ground_truth == again.ground_truth


def test_different_seed_changes_reports():
    a = generate_corpus(6, 2, seed=1)
    b = generate_corpus(6, 2, seed=2)
    assert any(x.report != y.report for x, y in zip(a.records, b.records))


def test_patient_record_counts_are_balanced(corpus):
    counts: dict[str, int] = {}
    for r in corpus.records:
        counts[r.patient_id] = counts.get(r.patient_id, 0) + 1
    lo, hi = math.floor(40 / 7), math.ceil(40 / 7)
    assert len(counts) == 7
    assert all(c in (lo, hi) for c in counts.values())


def test_images_are_quantized_in_unit_range(corpus):
    for r in corpus.records[:10]:
        img = r.image
        assert img.shape == (64, 64)
        assert img.min() >= 0.0 and img.max() <= 1.0
        np.testing.assert_array_equal(img, np.rint(img * 255.0) / 255.0)


def test_image_size_parameter_changes_shape():
    corpus = generate_corpus(4, 2, seed=3, image_size=32)
    assert all(r.image.shape == (32, 32) for r in corpus.records)


def test_ground_truth_spans_equal_matcher_output(corpus):
    for rec in corpus.records:
        for kind in ("blacklist", "whitelist"):
            want = [
                (m.start, m.end)
                for m in match_terms(rec.report, corpus.lexicon)
                if m.kind == kind
            ]
            got = [
                (s["start"], s["end"])
                for s in corpus.ground_truth[rec.id]
                if s["kind"] == kind
            ]
            assert sorted(got) == want, (rec.id, kind)


def test_ground_truth_surfaces_slice_the_report(corpus):
    for rec in corpus.records[:8]:
        for span in corpus.ground_truth[rec.id]:
            assert rec.report[span["start"] : span["end"]] == span["surface"]


def test_every_report_carries_injected_phi(corpus):
    for rec in corpus.records:
        injected = [s for s in corpus.ground_truth[rec.id] if s["kind"] == "blacklist"]
        assert len(injected) >= 4


def test_filtering_removes_every_injected_span(corpus):
    for rec in corpus.records:
        filtered, removals = filter_report(rec.report, corpus.lexicon)
        injected = [s for s in corpus.ground_truth[rec.id] if s["kind"] == "blacklist"]
        assert len(removals) == len(injected)
        left = [m for m in match_terms(filtered, corpus.lexicon) if m.kind == "blacklist"]
        assert left == []


def test_whitelist_terms_survive_filtering(corpus):
    kept = 0
    for rec in corpus.records:
        before = sum(1 for m in match_terms(rec.report, corpus.lexicon) if m.kind == "whitelist")
        filtered, _ = filter_report(rec.report, corpus.lexicon)
        after = sum(1 for m in match_terms(filtered, corpus.lexicon) if m.kind == "whitelist")
        assert after == before
        kept += after
    assert kept > 0, "the corpus must exercise the whitelist at all"


def test_same_patient_images_share_the_watermark_offset(corpus):
    by_pid: dict[str, list[np.ndarray]] = {}
    for r in corpus.records:
        by_pid.setdefault(r.patient_id, []).append(r.image)
    region = np.s_[: 64 // 2, 64 // 2 :]
    means = {}
    for pid, imgs in by_pid.items():
        vals = [float(img[region].mean()) for img in imgs]
        assert max(vals) - min(vals) < 0.02, "within-patient watermark must be stable"
        means[pid] = sum(vals) / len(vals)
    spread = max(means.values()) - min(means.values())
    assert spread > 0.2, "across patients the watermark must vary"


def test_corpus_validates_arguments():
    with pytest.raises(DeidError):
        generate_corpus(0, 1, seed=0)
    with pytest.raises(DeidError):
        generate_corpus(10, 0, seed=0)
    with pytest.raises(DeidError):
        generate_corpus(10, 2, seed=0, image_size=8)
