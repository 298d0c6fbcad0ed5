import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dino_forge.metrics import (ConfusionCounts, confusion_counts, evaluate, f1_normal, f2_ciw, f_beta,
                                per_class_f2, rankme)
from dino_forge.objectives import CiwTable


# brute-force oracles: explicit loops over samples


def loop_fbeta(pred, true, beta):
    tp = fp = fn = 0
    for p, t in zip(pred, true):
        tp += p and t
        fp += p and not t
        fn += (not p) and t
    if tp == 0:
        return 0.0
    prec, rec = tp / (tp + fp), tp / (tp + fn)
    return (1 + beta ** 2) * prec * rec / (beta ** 2 * prec + rec)


def loop_f2_ciw(scores, labels, w, thr):
    num = 0.0
    for c in range(scores.shape[1]):
        f = loop_fbeta([s >= thr for s in scores[:, c]], [bool(v) for v in labels[:, c]], 2.0)
        num += w[c] * f
    return 100 * num / sum(w)


def loop_f1_normal(scores, labels, thr):
    pred, true = [], []
    for i in range(scores.shape[0]):
        pred.append(all(s < thr for s in scores[i]))
        true.append(all(v == 0 for v in labels[i]))
    return 100 * loop_fbeta(pred, true, 1.0)


def eigh_rankme(z, eps=1e-7):
    # singular values from the Gram matrix: an independent route to the spectrum
    g = z.T @ z if z.shape[1] <= z.shape[0] else z @ z.T
    lam = np.clip(np.linalg.eigvalsh(g), 0, None)
    s = np.sqrt(lam)
    p = s / s.sum() + eps
    return math.exp(-sum(pi * math.log(pi) for pi in p))


def random_instance(rng):
    n, c = int(rng.integers(1, 40)), int(rng.integers(1, 8))
    labels = (rng.random((n, c)) < rng.uniform(0.05, 0.6)).astype(int)
    scores = np.clip(labels * rng.uniform(0.2, 1, (n, c)) + rng.uniform(0, 0.6, (n, c)), 0, 1)
    w = rng.uniform(0.1, 3, c)
    return scores, labels, w, float(rng.uniform(0.2, 0.8))


def test_f_beta_examples():
    assert f_beta(10, 0, 0) == 1.0
    assert f_beta(0, 0, 0) == 0.0
    assert f_beta(0, 5, 0) == 0.0
    assert f_beta(0, 0, 5) == 0.0
    assert f_beta(5, 5, 0, beta=1.0) == pytest.approx(2 / 3)
    # p=0.5, r=1: F2 = 5*0.5/(4*0.5+1)
    assert f_beta(5, 5, 0, beta=2.0) == pytest.approx(2.5 / 3)
    with pytest.raises(ValueError):
        f_beta(-1, 0, 0)


def test_metrics_match_loop_oracles():
    rng = np.random.default_rng(0)
    for _ in range(100):
        scores, labels, w, thr = random_instance(rng)
        codes = tuple(f"c{i}" for i in range(len(w)))
        counts = confusion_counts(scores, labels, thr)
        for c in range(len(w)):
            want = loop_fbeta([s >= thr for s in scores[:, c]], [bool(v) for v in labels[:, c]], 2.0)
            assert abs(per_class_f2(counts)[c] - want) < 1e-9
        assert abs(f2_ciw(counts, CiwTable(codes, tuple(w))) - loop_f2_ciw(scores, labels, w, thr)) < 1e-9
        assert abs(f1_normal(scores, labels, thr) - loop_f1_normal(scores, labels, thr)) < 1e-9


def test_rankme_matches_gram_oracle():
    rng = np.random.default_rng(1)
    for _ in range(100):
        n, d = int(rng.integers(2, 60)), int(rng.integers(1, 20))
        r = int(rng.integers(1, d + 1))
        z = rng.normal(size=(n, r)) @ rng.normal(size=(r, d))
        assert abs(rankme(z) - eigh_rankme(z)) < 1e-6


def test_rankme_known_values():
    assert rankme(np.eye(8)) == pytest.approx(8.0, rel=1e-5)
    assert rankme(np.outer(np.arange(1, 6), np.ones(4))) == pytest.approx(1.0, abs=1e-4)
    with pytest.raises(ValueError):
        rankme(np.zeros((5, 3)))
    with pytest.raises(ValueError):
        rankme(np.ones((1, 3)))
    with pytest.raises(ValueError):
        rankme(np.array([[1.0, np.nan], [0, 1]]))


@given(st.integers(0, 2**31 - 1), st.floats(1e-3, 1e3))
@settings(max_examples=50, deadline=None)
def test_rankme_rotation_and_scale_invariant(seed, k):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(30, 6)) * rng.uniform(0.1, 3, 6)
    q, _ = np.linalg.qr(rng.normal(size=(6, 6)))
    assert abs(rankme(z @ q) - rankme(z)) < 1e-6
    assert abs(rankme(k * z) - rankme(z)) < 1e-6


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=50, deadline=None)
def test_rankme_bounds(seed):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(int(rng.integers(2, 20)), int(rng.integers(1, 10))))
    assert 1.0 - 1e-6 <= rankme(z) <= min(z.shape) * (1 + 1e-5)


@given(st.integers(0, 2**31 - 1), st.floats(0.01, 100))
@settings(max_examples=50, deadline=None)
def test_f2_ciw_scale_invariant_and_bounded(seed, k):
    rng = np.random.default_rng(seed)
    scores, labels, w, thr = random_instance(rng)
    codes = tuple(f"c{i}" for i in range(len(w)))
    counts = confusion_counts(scores, labels, thr)
    a = f2_ciw(counts, CiwTable(codes, tuple(w)))
    b = f2_ciw(counts, CiwTable(codes, tuple(k * v for v in w)))
    assert abs(a - b) < 1e-9
    assert 0.0 <= a <= 100.0


@given(arrays(np.int8, st.tuples(st.integers(1, 20), st.integers(1, 6)), elements=st.integers(0, 1)))
@settings(max_examples=50, deadline=None)
def test_perfect_predictions(labels):
    scores = labels.astype(float)
    counts = confusion_counts(scores, labels)
    f2 = per_class_f2(counts)
    present = labels.sum(axis=0) > 0
    assert np.all(f2[present] == 1.0)
    assert np.all(f2[~present] == 0.0)
    if np.any(labels.sum(axis=1) == 0):
        assert f1_normal(scores, labels) == 100.0


def test_perfect_file_scores_100():
    labels = np.array([[1, 0, 0], [0, 1, 0], [0, 0, 1], [0, 0, 0], [1, 1, 0]])
    report = evaluate(labels.astype(float), labels, CiwTable(("a", "b", "c"), (1.0, 2.0, 3.0)))
    assert report.f2_ciw == 100.0
    assert report.f1_normal == 100.0


def test_confusion_counts_validation():
    with pytest.raises(ValueError):
        confusion_counts(np.zeros((3, 2)), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        ConfusionCounts([1], [0], [0], [-1])
    with pytest.raises(ValueError):
        ConfusionCounts([1, 0], [0, 0], [0, 0], [0, 0])


def test_report_serialisation_stable():
    rng = np.random.default_rng(4)
    scores, labels, w, thr = random_instance(rng)
    codes = tuple(f"c{i}" for i in range(len(w)))
    rep = evaluate(scores, labels, CiwTable(codes, tuple(w)), thr, embeddings=rng.normal(size=(10, 4)))
    a = json.dumps(rep.to_dict(), sort_keys=True)
    b = json.dumps(evaluate(scores, labels, CiwTable(codes, tuple(w)), thr,
                            embeddings=np.random.default_rng(4).normal(size=(10, 4))).to_dict(), sort_keys=True)
    assert json.loads(a)["f2_ciw"] == rep.f2_ciw
    assert "F2_CIW" in rep.table() and "RankMe" in rep.table()
    assert len({len(line) for line in rep.table().splitlines()[:len(codes) + 1]}) == 1
