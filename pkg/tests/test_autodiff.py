"""Reverse-mode tape: hand-derived gradients and finite-difference checks.

Two independent oracles are used side by side: tiny cases whose gradients
are worked out by hand (or by explicit loops written differently from the
library's vectorized rules), and central finite differences at random
points kept away from the relu kink.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from uccatree import autodiff as ad
from uccatree.autodiff import Var, _unbroadcast


def weighted(out: Var, weights: np.ndarray) -> Var:
    """Scalarize a tensor with distinct weights so FD sees each coordinate."""
    return ad.vsum(ad.mul(out, Var(weights)))


def rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


class TestHandDerived:
    def test_matmul_matrix_vector(self):
        a = Var(np.array([[1.0, 2.0], [3.0, 4.0]]))
        b = Var(np.array([2.0, 1.0]))
        out = ad.matmul(a, b)
        assert out.value.tolist() == [4.0, 10.0]
        ad.vsum(out).backward()
        assert a.grad.tolist() == [[2.0, 1.0], [2.0, 1.0]]
        assert b.grad.tolist() == [4.0, 6.0]

    def test_mul_and_broadcast_add(self):
        a = Var(np.array([[1.0, 2.0], [3.0, 4.0]]))
        bias = Var(np.array([10.0, 20.0]))
        out = ad.add(a, bias)
        ad.vsum(ad.mul(out, Var(np.array([[1.0, 2.0], [3.0, 4.0]])))).backward()
        assert a.grad.tolist() == [[1.0, 2.0], [3.0, 4.0]]
        # Broadcast bias gradient sums over the rows it fed.
        assert bias.grad.tolist() == [4.0, 6.0]

    def test_take_rows_accumulates_duplicates(self):
        a = Var(np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]))
        out = ad.take_rows(a, [0, 0, 2])
        weighted(out, np.array([[1.0, 2.0], [4.0, 8.0], [16.0, 32.0]])).backward()
        assert a.grad.tolist() == [[5.0, 10.0], [0.0, 0.0], [16.0, 32.0]]

    def test_cross_entropy_against_logsumexp(self):
        scores = [1.0, 2.0, 0.5]
        gold = 1
        v = Var(np.array(scores))
        loss = ad.cross_entropy_logits(v, gold)
        z = sum(math.exp(s) for s in scores)
        assert loss.value == pytest.approx(math.log(z) - scores[gold], abs=1e-12)
        loss.backward()
        softmax = [math.exp(s) / z for s in scores]
        expected = [p - (1.0 if i == gold else 0.0) for i, p in enumerate(softmax)]
        assert v.grad == pytest.approx(expected, abs=1e-12)

    def test_bilinear_against_explicit_loops(self):
        r = rng(3)
        u = r.standard_normal(3)
        w = r.standard_normal((3, 2, 4))
        v = r.standard_normal(4)
        uv, wv, vv = Var(u.copy()), Var(w.copy()), Var(v.copy())
        out = ad.bilinear_vec(uv, wv, vv)
        manual = [
            sum(u[i] * w[i, l, j] * v[j] for i in range(3) for j in range(4))
            for l in range(2)
        ]
        assert out.value == pytest.approx(manual, abs=1e-12)
        c = np.array([1.0, -2.0])
        weighted(out, c).backward()
        gu = [
            sum(c[l] * w[i, l, j] * v[j] for l in range(2) for j in range(4))
            for i in range(3)
        ]
        gv = [
            sum(c[l] * u[i] * w[i, l, j] for l in range(2) for i in range(3))
            for j in range(4)
        ]
        gw = np.einsum("i,l,j->ilj", u, c, v)
        assert uv.grad == pytest.approx(gu, abs=1e-12)
        assert vv.grad == pytest.approx(gv, abs=1e-12)
        assert wv.grad == pytest.approx(gw, abs=1e-12)

    def test_relu_subgradient_at_zero_is_zero(self):
        x = Var(np.array([-1.0, 0.0, 2.0]))
        ad.vsum(ad.relu(x)).backward()
        assert x.grad.tolist() == [0.0, 0.0, 1.0]

    def test_shared_node_gets_both_contributions(self):
        x = Var(np.array([1.0, 2.0, 3.0]))
        s = ad.vsum(x)
        loss = ad.mul(s, s)
        loss.backward()
        assert loss.value == 36.0
        assert x.grad.tolist() == [12.0, 12.0, 12.0]

    def test_deep_reuse_chain(self):
        # f(x) = (x + x) . (x + x) = 4 |x|^2, df/dx = 8x.
        x = Var(np.array([1.0, -2.0]))
        y = ad.add(x, x)
        ad.matmul(y, y).backward()
        assert x.grad.tolist() == [8.0, -16.0]

    def test_add_n_empty_is_zero_scalar(self):
        z = ad.add_n([])
        assert z.value.shape == () and float(z.value) == 0.0
        z.backward()  # must not blow up on a leaf

    def test_backward_requires_scalar(self):
        with pytest.raises(ValueError, match="scalar"):
            Var(np.zeros(3)).backward()

    def test_operator_sugar_matches_functions(self):
        a = Var(np.array(2.0))
        b = Var(np.array(3.0))
        assert float((a * b + 1.0 - b).value) == 4.0
        assert float((-a).value) == -2.0
        assert float((5.0 - a).value) == 3.0


class TestUnbroadcast:
    def test_extra_leading_axis_summed(self):
        g = np.ones((3, 2))
        assert _unbroadcast(g, (2,)).tolist() == [3.0, 3.0]

    def test_keepdim_axis_summed(self):
        g = np.arange(6.0).reshape(3, 2)
        assert _unbroadcast(g, (3, 1)).tolist() == [[1.0], [5.0], [9.0]]

    def test_matching_shape_untouched(self):
        g = np.arange(4.0).reshape(2, 2)
        assert _unbroadcast(g, (2, 2)) is g


def fd_check(build, tensors, tol=1e-7):
    err = ad.gradcheck(build, tensors, eps=1e-5)
    assert err < tol, f"finite differences disagree: {err:.3e}"


class TestFiniteDifferences:
    """Each op at a random smooth point against central differences."""

    def test_add_sub_mul_broadcast(self):
        r = rng(0)
        tensors = {"a": r.standard_normal((3, 4)), "b": r.standard_normal(4)}
        w = r.standard_normal((3, 4))

        def build(v):
            return weighted(
                ad.mul(ad.sub(ad.add(v["a"], v["b"]), v["b"]), v["a"]), w
            )

        fd_check(build, tensors)

    def test_matmul_all_shape_cases(self):
        r = rng(1)
        tensors = {
            "m1": r.standard_normal((2, 3)),
            "m2": r.standard_normal((3, 2)),
            "v1": r.standard_normal(3),
            "v2": r.standard_normal(2),
        }
        w = r.standard_normal((2, 2))

        def build(v):
            mm = weighted(ad.matmul(v["m1"], v["m2"]), w)  # 2D @ 2D
            mv = weighted(ad.matmul(v["m1"], v["v1"]), np.array([2.0, -1.0]))
            vm = weighted(ad.matmul(v["v2"], v["m1"]), np.array([1.0, 3.0, -2.0]))
            vv = ad.matmul(v["v1"], v["v1"])  # 1D @ 1D
            return ad.add_n([mm, mv, vm, vv])

        fd_check(build, tensors)

    def test_shape_ops(self):
        r = rng(2)
        tensors = {"a": r.standard_normal((4, 3)), "b": r.standard_normal((4, 2))}
        w = r.standard_normal((4, 5))
        w2 = r.standard_normal((3, 3))

        def build(v):
            cat = weighted(ad.concat([v["a"], v["b"]], axis=-1), w)
            rows = weighted(ad.take_rows(v["a"], [1, 1, 3]), w2)
            sl = weighted(ad.slice0(v["b"], 1, 3), np.array([[1.0, 2.0], [3.0, 4.0]]))
            st = weighted(
                ad.stack_rows([ad.row(v["a"], 0), ad.row(v["a"], 2)]),
                np.array([[1.0, -1.0, 2.0], [0.5, 1.5, -2.5]]),
            )
            elem = ad.add(ad.pick(ad.row(v["a"], 1), 2), ad.at(v["b"], 0, 1))
            return ad.add_n([cat, rows, sl, st, elem])

        fd_check(build, tensors)

    def test_nonlinearities(self):
        r = rng(4)
        x = r.standard_normal(6)
        x[np.abs(x) < 0.2] += 0.5  # keep relu inputs away from its kink
        tensors = {"x": x}
        w = r.standard_normal(6)

        def build(v):
            return ad.add_n(
                [
                    weighted(ad.tanh(v["x"]), w),
                    weighted(ad.sigmoid(v["x"]), w[::-1].copy()),
                    weighted(ad.relu(v["x"]), np.arange(1.0, 7.0)),
                ]
            )

        fd_check(build, tensors)

    def test_cross_entropy(self):
        r = rng(5)
        tensors = {"s": r.standard_normal(7)}

        def build(v):
            return ad.add(
                ad.cross_entropy_logits(v["s"], 0),
                ad.cross_entropy_logits(v["s"], 4),
            )

        fd_check(build, tensors)

    def test_bilinear(self):
        r = rng(6)
        tensors = {
            "u": r.standard_normal(4),
            "w": r.standard_normal((4, 3, 5)),
            "v": r.standard_normal(5),
        }
        c = r.standard_normal(3)

        def build(v):
            return weighted(ad.bilinear_vec(v["u"], v["w"], v["v"]), c)

        fd_check(build, tensors)

    def test_composite_mlp(self):
        r = rng(7)
        tensors = {
            "x": r.standard_normal(5),
            "w1": r.standard_normal((5, 4)) * 0.7,
            "b1": r.standard_normal(4),
            "w2": r.standard_normal((4, 3)) * 0.7,
        }

        def build(v):
            h = ad.relu(ad.add(ad.matmul(v["x"], v["w1"]), v["b1"]))
            return ad.cross_entropy_logits(ad.matmul(h, v["w2"]), 1)

        fd_check(build, tensors)


class TestErrorMetric:
    def test_large_values_relative(self):
        a = {"t": np.array([2.0e5])}
        n = {"t": np.array([1.0e5])}
        assert ad.max_relative_error(a, n) == pytest.approx(0.5)

    def test_small_values_absolute(self):
        a = {"t": np.array([0.5])}
        n = {"t": np.array([0.0])}
        assert ad.max_relative_error(a, n) == pytest.approx(0.5)

    def test_exact_match_is_zero(self):
        a = {"t": np.arange(3.0)}
        assert ad.max_relative_error(a, {"t": np.arange(3.0)}) == 0.0

    def test_worst_tensor_wins(self):
        a = {"x": np.array([1.0]), "y": np.array([1.0])}
        n = {"x": np.array([1.0]), "y": np.array([0.2])}
        assert ad.max_relative_error(a, n) == pytest.approx(0.8)


def test_numeric_grads_restore_inputs():
    tensors = {"x": np.array([1.0, 2.0])}
    before = tensors["x"].copy()
    ad.numeric_grads(lambda v: ad.vsum(ad.tanh(v["x"])), tensors)
    assert tensors["x"].tolist() == before.tolist()


def test_var_preserves_float64():
    v = Var(np.array([1.0, 2.0]))
    assert v.value.dtype == np.float64
    assert ad.tanh(v).value.dtype == np.float64
