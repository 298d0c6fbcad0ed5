import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from dino_forge.numerics import grad_check
from dino_forge.objectives import (CiwTable, DinoState, dino_loss, hybrid_loss, load_ciw, pos_weights, save_ciw,
                                   teacher_temp_at, update_center, weighted_bce)


def np_softmax(v, t):
    z = v / t
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def loop_dino(s_views, t_views, center, tt, ts):
    total = 0.0
    for a in range(2):
        for b in range(2):
            if a == b:
                continue
            acc = 0.0
            for i in range(s_views[0].shape[0]):
                p_t = np_softmax(t_views[a][i] - center, tt)
                p_s = np_softmax(s_views[b][i], ts)
                acc += -sum(p_t[k] * math.log(p_s[k]) for k in range(len(p_t)))
            total += acc / s_views[0].shape[0]
    return total / 2


def loop_bce(x, y, w):
    acc = 0.0
    for i in range(x.shape[0]):
        for c in range(x.shape[1]):
            s = 1 / (1 + math.exp(-x[i, c]))
            acc += -(w[c] * y[i, c] * math.log(s) + (1 - y[i, c]) * math.log(1 - s))
    return acc / x.size


def test_pos_weights_examples():
    assert np.allclose(pos_weights(CiwTable(("a", "b"), (1.0, 1.0))), [4.0, 4.0])
    assert np.allclose(pos_weights(CiwTable(("a", "b"), (1.0, 3.0))), [3.0, 5.0])


def test_pos_weights_oracle_random():
    rng = np.random.default_rng(0)
    for _ in range(100):
        c = int(rng.integers(1, 18))
        w = rng.uniform(0.01, 10, c)
        got = pos_weights(CiwTable(tuple(f"c{i}" for i in range(c)), tuple(w)))
        mean = sum(w) / c
        for k in range(c):
            assert abs(got[k] - 2 * (1 + w[k] / mean)) < 1e-12


@given(st.lists(st.floats(0.01, 100), min_size=1, max_size=17), st.floats(0.01, 100))
@settings(max_examples=50, deadline=None)
def test_pos_weights_scale_invariant(ws, k):
    codes = tuple(str(i) for i in range(len(ws)))
    a = pos_weights(CiwTable(codes, tuple(ws)))
    b = pos_weights(CiwTable(codes, tuple(k * w for w in ws)))
    assert np.allclose(a, b, rtol=1e-12)
    assert np.all(a > 2)


def test_weighted_bce_oracle_random():
    rng = np.random.default_rng(1)
    for _ in range(100):
        b, c = rng.integers(1, 6, 2)
        x = rng.normal(0, 3, (b, c))
        y = (rng.random((b, c)) < 0.4).astype(float)
        w = rng.uniform(2, 6, c)
        got = float(weighted_bce(torch.from_numpy(x), torch.from_numpy(y), torch.from_numpy(w)))
        assert abs(got - loop_bce(x, y, w)) < 1e-4 * max(1.0, abs(got))


def test_weighted_bce_extreme_logits_finite():
    x = torch.tensor([[1000.0, -1000.0]], dtype=torch.float64)
    y = torch.tensor([[0.0, 1.0]], dtype=torch.float64)
    loss = weighted_bce(x, y, torch.tensor([4.0, 4.0], dtype=torch.float64))
    assert torch.isfinite(loss)
    assert float(loss) == pytest.approx((1000 + 4 * 1000) / 2)


def test_weighted_bce_validation():
    with pytest.raises(ValueError):
        weighted_bce(torch.zeros(2, 3), torch.zeros(2, 2), torch.ones(3))
    with pytest.raises(ValueError):
        weighted_bce(torch.zeros(2, 3), torch.full((2, 3), 0.5), torch.ones(3))
    with pytest.raises(ValueError):
        weighted_bce(torch.zeros(2, 3), torch.zeros(2, 3), torch.ones(2))


def test_weighted_bce_pos_weight_one_is_plain_bce():
    g = torch.Generator().manual_seed(0)
    x = torch.randn(4, 5, generator=g, dtype=torch.float64)
    y = (torch.rand(4, 5, generator=g) < 0.5).double()
    ref = torch.nn.functional.binary_cross_entropy_with_logits(x, y)
    assert float(weighted_bce(x, y, torch.ones(5, dtype=torch.float64))) == pytest.approx(float(ref), abs=1e-12)


def test_dino_loss_uniform_case():
    k = 16
    state = DinoState.zeros(k)
    s = [torch.zeros(3, k), torch.zeros(3, k)]
    t = [torch.zeros(3, k), torch.zeros(3, k)]
    assert float(dino_loss(s, t, state)) == pytest.approx(math.log(k), abs=1e-6)


def test_dino_loss_aligned_sharp_case():
    k = 8
    state = DinoState.zeros(k, teacher_temp=0.04, student_temp=0.1)
    onehot = torch.zeros(2, k)
    onehot[0, 3] = onehot[1, 5] = 50.0
    loss = dino_loss([onehot, onehot], [onehot, onehot], state)
    assert float(loss) < 1e-4
    shuffled = onehot.roll(1, dims=0)
    assert float(dino_loss([shuffled, shuffled], [onehot, onehot], state)) > 100


def test_dino_loss_oracle_random():
    rng = np.random.default_rng(2)
    for _ in range(100):
        b, k = int(rng.integers(1, 5)), int(rng.integers(2, 12))
        s = [rng.normal(0, 1, (b, k)) for _ in range(2)]
        t = [rng.normal(0, 1, (b, k)) for _ in range(2)]
        c = rng.normal(0, 0.3, k)
        tt, ts = float(rng.uniform(0.02, 0.1)), float(rng.uniform(0.05, 0.5))
        state = DinoState(torch.from_numpy(c), teacher_temp=tt, student_temp=ts)
        got = float(dino_loss([torch.from_numpy(v) for v in s], [torch.from_numpy(v) for v in t], state))
        want = loop_dino(s, t, c, tt, ts)
        assert abs(got - want) < 1e-4 * max(1.0, abs(want))


def test_dino_loss_gradient_only_through_student():
    k = 6
    s = torch.randn(4, k, requires_grad=True)
    t = torch.randn(4, k, requires_grad=True)
    dino_loss(s.chunk(2), t.chunk(2), DinoState.zeros(k)).backward()
    assert s.grad is not None and t.grad is None


def test_dino_loss_validation():
    with pytest.raises(ValueError):
        dino_loss([torch.zeros(2, 4)], [torch.zeros(2, 4)] * 2, DinoState.zeros(4))
    with pytest.raises(ValueError):
        dino_loss([torch.zeros(2, 4)] * 2, [torch.zeros(2, 4)] * 2, DinoState.zeros(5))
    with pytest.raises(ValueError):
        DinoState.zeros(3, teacher_temp=0.0)
    with pytest.raises(ValueError):
        DinoState.zeros(3, momentum=1.5)


def test_center_update_oracle():
    rng = np.random.default_rng(3)
    for _ in range(100):
        b, k = int(rng.integers(1, 9)), int(rng.integers(1, 10))
        c = rng.normal(size=k)
        logits = rng.normal(size=(b, k))
        m = float(rng.uniform(0, 1))
        got = update_center(DinoState(torch.from_numpy(c), momentum=m), torch.from_numpy(logits)).numpy()
        for j in range(k):
            mean = sum(logits[i, j] for i in range(b)) / b
            assert abs(got[j] - (m * c[j] + (1 - m) * mean)) < 1e-12


def test_center_momentum_one_freezes_center():
    state = DinoState.zeros(4, momentum=1.0)
    assert torch.all(update_center(state, torch.randn(3, 4)) == 0)


def test_hybrid_gradient_is_sum():
    g = torch.Generator().manual_seed(5)
    k, c = 6, 3
    t = torch.randn(4, k, generator=g, dtype=torch.float64)
    y = (torch.rand(2, c, generator=g) < 0.5).double()
    pw = torch.tensor([3.0, 4.0, 5.0], dtype=torch.float64)
    proj = torch.randn(k, c, generator=g, dtype=torch.float64)
    state = DinoState(torch.zeros(k, dtype=torch.float64))
    lam = 0.7

    def dino(x):
        return dino_loss(x.chunk(2), t.chunk(2), state)

    def bce(x):
        return weighted_bce(x[:2] @ proj, y, pw)

    def hyb(x):
        return hybrid_loss(dino(x), bce(x), lam)

    x = torch.randn(4, k, generator=g, dtype=torch.float64)
    assert grad_check(hyb, x).passed
    grads = []
    for f in (dino, bce, hyb):
        xi = x.clone().requires_grad_(True)
        f(xi).backward()
        grads.append(xi.grad)
    assert torch.allclose(grads[2], grads[0] + lam * grads[1], atol=1e-12)


def test_teacher_temp_warmup():
    assert teacher_temp_at(0) == 0.04
    assert teacher_temp_at(0, final=0.07, warmup_start=0.04, warmup_epochs=3) == 0.04
    assert teacher_temp_at(3, final=0.07, warmup_start=0.04, warmup_epochs=3) == 0.07


def test_ciw_roundtrip(tmp_path):
    table = CiwTable(("RB", "OB", "PF"), (1.0, 0.5, 0.25))
    save_ciw(table, tmp_path / "ciw.csv")
    assert load_ciw(tmp_path / "ciw.csv") == table
    assert table.reorder(["PF", "RB", "OB"]).weights == (0.25, 1.0, 0.5)
    with pytest.raises(ValueError):
        table.reorder(["XX"])


def test_ciw_rejects_bad_values(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("code,ciw\nRB,0\n")
    with pytest.raises(ValueError):
        load_ciw(p)
    p.write_text("code,weight\nRB,1\n")
    with pytest.raises(ValueError):
        load_ciw(p)
    with pytest.raises(ValueError):
        CiwTable(("a", "a"), (1.0, 1.0))


def test_shipped_placeholder_ciw_loads():
    from pathlib import Path
    table = load_ciw(Path(__file__).resolve().parents[1] / "data" / "ciw_placeholder.csv")
    assert len(table) == 17
