"""Autodiff primitives against brute-force oracles."""
import math

import numpy as np
import pytest

from velex import numerics as nt
from velex.numerics import (
    DegenerateMaskError,
    ShapeError,
    Tensor,
)


def test_linear_identity():
    x = Tensor([[1.0, 2.0], [3.0, 4.0]])
    w = Tensor(np.eye(2))
    b = Tensor(np.zeros((1, 2)))
    out = nt.linear(x, w, b)
    np.testing.assert_array_equal(out.data, x.data)


def test_linear_hand_case():
    out = nt.linear(Tensor([[1.0, 2.0]]), Tensor([[1.0], [1.0]]))
    assert out.data.tolist() == [[3.0]]


def test_linear_matches_triple_loop_oracle():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(3, 4))
    w = rng.normal(size=(4, 2))
    expected = np.zeros((3, 2))
    for i in range(3):
        for j in range(2):
            for k in range(4):
                expected[i, j] += x[i, k] * w[k, j]
    out = nt.linear(Tensor(x), Tensor(w))
    np.testing.assert_allclose(out.data, expected, rtol=0, atol=1e-12)


def test_linear_shape_error():
    with pytest.raises(ShapeError):
        nt.linear(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))


def test_masked_softmax_single_survivor():
    out = nt.masked_softmax(Tensor([[5.0, -3.0]]), np.array([[True, False]]))
    assert out.data.tolist() == [[1.0, 0.0]]


def test_masked_softmax_symmetry():
    out = nt.masked_softmax(Tensor([[0.0, 0.0, 0.0]]), np.ones((1, 3), dtype=bool))
    np.testing.assert_allclose(out.data, [[1 / 3] * 3], atol=1e-15)


def test_masked_softmax_matches_exp_renormalize_oracle():
    scores = np.array([[1.0, 2.0, 3.0]])
    mask = np.array([[True, False, True]])
    out = nt.masked_softmax(Tensor(scores), mask)
    e1, e3 = math.exp(1.0), math.exp(3.0)
    expected = [[e1 / (e1 + e3), 0.0, e3 / (e1 + e3)]]
    np.testing.assert_allclose(out.data, expected, atol=1e-12)
    assert out.data[0, 1] == 0.0


def test_masked_softmax_all_false_raises():
    with pytest.raises(DegenerateMaskError):
        nt.masked_softmax(Tensor([[1.0, 2.0]]), np.array([[False, False]]))


def test_masked_softmax_rows_sum_to_one():
    rng = np.random.default_rng(1)
    for _ in range(50):
        rows, cols = rng.integers(1, 6), rng.integers(2, 8)
        scores = rng.normal(size=(rows, cols)) * 10
        mask = rng.random((rows, cols)) < 0.6
        mask[np.arange(rows), rng.integers(0, cols, rows)] = True
        out = nt.masked_softmax(Tensor(scores), mask)
        np.testing.assert_allclose(out.data.sum(axis=1), 1.0, atol=1e-9)
        assert (out.data[~mask] == 0.0).all()
        assert (out.data[mask] > 0.0).all()


def test_attention_single_key():
    q = Tensor([[1.0, 0.0]])
    k = Tensor([[0.3, 0.4]])
    v = Tensor([[7.0, -2.0]])
    out, w = nt.attention(q, k, v, np.array([[True]]))
    np.testing.assert_array_equal(out.data, v.data)
    assert w.data.tolist() == [[1.0]]


def test_attention_orthogonal_queries_uniform():
    q = Tensor([[1.0, 0.0]])
    k = Tensor([[0.0, 1.0], [0.0, -1.0], [0.0, 2.0]])
    v = Tensor(np.arange(6.0).reshape(3, 2))
    out, w = nt.attention(q, k, v, np.ones((1, 3), dtype=bool))
    np.testing.assert_allclose(w.data, [[1 / 3] * 3], atol=1e-12)


def test_attention_matches_per_row_oracle():
    rng = np.random.default_rng(2)
    q = rng.normal(size=(4, 4))
    k = rng.normal(size=(4, 4))
    v = rng.normal(size=(4, 4))
    mask = np.ones((4, 4), dtype=bool)
    mask[2, 1] = False
    out, w = nt.attention(Tensor(q), Tensor(k), Tensor(v), mask)
    for i in range(4):
        scores = np.array(
            [q[i] @ k[j] / math.sqrt(4) if mask[i, j] else -np.inf for j in range(4)]
        )
        e = np.exp(scores - scores[np.isfinite(scores)].max())
        e[~np.isfinite(scores)] = 0.0
        probs = e / e.sum()
        np.testing.assert_allclose(w.data[i], probs, atol=1e-12)
        np.testing.assert_allclose(out.data[i], probs @ v, atol=1e-12)


def test_attention_output_in_value_convex_hull():
    rng = np.random.default_rng(3)
    q = rng.normal(size=(5, 3))
    k = rng.normal(size=(6, 3))
    v = rng.normal(size=(6, 3))
    mask = rng.random((5, 6)) < 0.7
    mask[:, 0] = True
    out, _ = nt.attention(Tensor(q), Tensor(k), Tensor(v), mask)
    for i in range(5):
        rows = v[mask[i]]
        assert (out.data[i] >= rows.min(axis=0) - 1e-12).all()
        assert (out.data[i] <= rows.max(axis=0) + 1e-12).all()


def test_attention_degenerate_row_names_row():
    mask = np.ones((3, 2), dtype=bool)
    mask[1] = False
    with pytest.raises(DegenerateMaskError, match="row 1"):
        nt.attention(Tensor(np.ones((3, 2))), Tensor(np.ones((2, 2))),
                     Tensor(np.ones((2, 2))), mask)


def test_attention_multihead_matches_manual_split():
    rng = np.random.default_rng(4)
    q, k, v = (rng.normal(size=(3, 4)) for _ in range(3))
    mask = np.ones((3, 3), dtype=bool)
    out, w = nt.attention(Tensor(q), Tensor(k), Tensor(v), mask, heads=2)
    parts, weights = [], []
    for h in range(2):
        s = slice(2 * h, 2 * h + 2)
        o, ww = nt.attention(Tensor(q[:, s]), Tensor(k[:, s]), Tensor(v[:, s]), mask)
        parts.append(o.data)
        weights.append(ww.data)
    np.testing.assert_allclose(out.data, np.hstack(parts), atol=1e-12)
    np.testing.assert_allclose(w.data, np.mean(weights, axis=0), atol=1e-12)


def test_cross_entropy_saturated():
    logits = np.zeros((1, 4))
    logits[0, 2] = 30.0
    loss = nt.cross_entropy(Tensor(logits), 2)
    assert loss.item() < 1e-9


def test_cross_entropy_uniform_closed_form():
    for n in (2, 5, 11):
        loss = nt.cross_entropy(Tensor(np.zeros((1, n))), 0)
        assert loss.item() == pytest.approx(math.log(n), abs=1e-12)


def test_cross_entropy_matches_logsumexp_oracle():
    rng = np.random.default_rng(5)
    z = rng.normal(size=5) * 3
    target = 3
    expected = math.log(np.exp(z).sum()) - z[target]
    loss = nt.cross_entropy(Tensor(z.reshape(1, -1)), target)
    assert loss.item() == pytest.approx(expected, abs=1e-12)
    assert loss.item() >= 0.0


def test_cross_entropy_target_out_of_range():
    with pytest.raises(IndexError):
        nt.cross_entropy(Tensor(np.zeros((1, 3))), 3)


def test_backward_through_composition():
    # d/dx of sum((x @ w) * x) checked against central differences
    rng = np.random.default_rng(6)
    x_data = rng.normal(size=(3, 3))
    w_data = rng.normal(size=(3, 3))
    x = Tensor(x_data, requires_grad=True)
    loss = nt.sum_all(nt.mul(nt.matmul(x, Tensor(w_data)), x))
    loss.backward()
    eps = 1e-6
    for i in range(3):
        for j in range(3):
            xp, xm = x_data.copy(), x_data.copy()
            xp[i, j] += eps
            xm[i, j] -= eps
            hi = ((xp @ w_data) * xp).sum()
            lo = ((xm @ w_data) * xm).sum()
            assert x.grad[i, j] == pytest.approx((hi - lo) / (2 * eps), abs=1e-6)


def test_layer_norm_rows_standardized():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(4, 8)) * 5 + 2
    out = nt.layer_norm(Tensor(x), Tensor(np.ones((1, 8))), Tensor(np.zeros((1, 8))))
    np.testing.assert_allclose(out.data.mean(axis=1), 0.0, atol=1e-12)
    np.testing.assert_allclose(out.data.std(axis=1), 1.0, atol=1e-4)


def test_take_rows_gather_and_scatter():
    table = Tensor(np.arange(12.0).reshape(4, 3), requires_grad=True)
    out = nt.take_rows(table, [2, 0, 2])
    np.testing.assert_array_equal(out.data, table.data[[2, 0, 2]])
    nt.sum_all(out).backward()
    np.testing.assert_array_equal(table.grad, [[1, 1, 1], [0, 0, 0], [2, 2, 2], [0, 0, 0]])


def test_no_grad_skips_graph():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with nt.no_grad():
        y = nt.matmul(x, x)
    assert not y.requires_grad and y._backward is None


def test_concat_and_slice_gradients():
    a = Tensor(np.ones((2, 3)), requires_grad=True)
    b = Tensor(np.ones((1, 3)), requires_grad=True)
    out = nt.slice_rows(nt.vcat([a, b]), 1, 3)
    nt.sum_all(out).backward()
    np.testing.assert_array_equal(a.grad, [[0, 0, 0], [1, 1, 1]])
    np.testing.assert_array_equal(b.grad, [[1, 1, 1]])


def test_mul_broadcast_gradient():
    gate = Tensor([[0.25]], requires_grad=True)
    row = Tensor([[1.0, 2.0, 3.0]], requires_grad=True)
    nt.sum_all(nt.mul(gate, row)).backward()
    assert gate.grad.tolist() == [[6.0]]
    np.testing.assert_array_equal(row.grad, [[0.25, 0.25, 0.25]])


def test_dropout_zero_is_identity():
    x = Tensor(np.ones((2, 2)))
    assert nt.dropout(x, 0.0, np.random.default_rng(0)) is x
