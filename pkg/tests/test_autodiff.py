import math

import numpy as np
import pytest

from conftest import central_diff, max_rel_err
from qfsum import autodiff as ad
from qfsum.autodiff import ShapeError, Tensor


class TestMatmul:
    def test_identity(self):
        rng = np.random.default_rng(0)
        m = Tensor(rng.normal(size=(2, 2)))
        out = ad.matmul(Tensor(np.eye(2)), m)
        np.testing.assert_array_equal(out.data, m.data)

    def test_hand_product(self):
        out = ad.matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[0.0], [1.0]]))
        np.testing.assert_array_equal(out.data, [[2.0], [4.0]])

    def test_one_by_one(self):
        out = ad.matmul(Tensor([[3.0]]), Tensor([[-2.0]]))
        np.testing.assert_array_equal(out.data, [[-6.0]])

    def test_mismatch_reports_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))

    def test_associativity_on_random_chains(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            a = Tensor(rng.normal(size=(3, 4)))
            b = Tensor(rng.normal(size=(4, 5)))
            c = Tensor(rng.normal(size=(5, 2)))
            left = ad.matmul(ad.matmul(a, b), c).data
            right = ad.matmul(a, ad.matmul(b, c)).data
            np.testing.assert_allclose(left, right, atol=1e-9, rtol=0)


class TestSoftmaxRows:
    def test_symmetric_row(self):
        out = ad.softmax_rows(Tensor([[0.0, 0.0, 0.0]]))
        np.testing.assert_allclose(out.data, [[1 / 3] * 3], atol=1e-15)

    def test_shift_invariance(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            row = rng.uniform(-1e3, 1e3, size=(1, 6))
            c = rng.uniform(-1e3, 1e3)
            a = ad.softmax_rows(Tensor(row)).data
            b = ad.softmax_rows(Tensor(row + c)).data
            np.testing.assert_allclose(a, b, atol=1e-12, rtol=0)

    def test_closed_form(self):
        # softmax([0, ln 2]) = [1, 2] / 3
        out = ad.softmax_rows(Tensor([[0.0, math.log(2.0)]]))
        np.testing.assert_allclose(out.data, [[1 / 3, 2 / 3]], atol=1e-15)

    def test_rows_sum_to_one_large_entries(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            m = rng.uniform(-1e3, 1e3, size=(4, 7))
            p = ad.softmax_rows(Tensor(m)).data
            assert p.min() >= 0.0
            np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12, rtol=0)
            assert np.all(np.isfinite(p))


class TestLayerNorm:
    def test_constant_row_zeroes(self):
        x = Tensor([[5.0, 5.0, 5.0]])
        out = ad.layer_norm(x, Tensor(np.ones(3)), Tensor(np.zeros(3)))
        np.testing.assert_allclose(out.data, 0.0, atol=1e-6)

    def test_zero_gamma_gives_beta(self):
        rng = np.random.default_rng(4)
        x = Tensor(rng.normal(size=(3, 4)))
        beta = rng.normal(size=4)
        out = ad.layer_norm(x, Tensor(np.zeros(4)), Tensor(beta))
        np.testing.assert_array_equal(out.data, np.tile(beta, (3, 1)))

    def test_two_point_row(self):
        # mean 2, population std 1 -> [-1, 1] as eps -> 0
        out = ad.layer_norm(Tensor([[1.0, 3.0]]), Tensor(np.ones(2)),
                            Tensor(np.zeros(2)), eps=1e-12)
        np.testing.assert_allclose(out.data, [[-1.0, 1.0]], atol=1e-9)

    def test_eps_validation(self):
        with pytest.raises(ValueError, match="eps"):
            ad.layer_norm(Tensor([[1.0, 2.0]]), Tensor(np.ones(2)),
                          Tensor(np.zeros(2)), eps=0.0)


class TestCrossEntropy:
    def test_uniform_logits(self):
        v = 7
        loss = ad.cross_entropy(Tensor(np.zeros((3, v))), np.array([1, 2, 3]), pad_id=0)
        np.testing.assert_allclose(loss.data, math.log(v), atol=1e-12)

    def test_margin_limit(self):
        logits = np.zeros((1, 4))
        logits[0, 2] = 60.0
        loss = ad.cross_entropy(Tensor(logits), np.array([2]), pad_id=0)
        assert float(loss.data) < 1e-20

    def test_closed_form(self):
        loss = ad.cross_entropy(Tensor([[0.0, math.log(3.0)]]), np.array([1]), pad_id=0)
        np.testing.assert_allclose(loss.data, math.log(4.0 / 3.0), atol=1e-12)

    def test_all_pad_is_zero(self):
        loss = ad.cross_entropy(Tensor(np.random.default_rng(5).normal(size=(3, 4))),
                                np.array([0, 0, 0]), pad_id=0)
        assert float(loss.data) == 0.0

    def test_target_out_of_vocab(self):
        with pytest.raises(IndexError, match="outside vocabulary"):
            ad.cross_entropy(Tensor(np.zeros((1, 4))), np.array([4]), pad_id=0)


class TestBackward:
    def test_sum_gradient_is_ones(self):
        x = Tensor(np.arange(6, dtype=float).reshape(2, 3))
        ad.backward(ad.sum_all(x))
        np.testing.assert_array_equal(x.grad, np.ones((2, 3)))

    def test_scalar_product_gradients(self):
        x = Tensor(np.array(3.0))
        y = Tensor(np.array(-2.0))
        ad.backward(ad.mul(x, y))
        assert float(x.grad) == -2.0
        assert float(y.grad) == 3.0

    def test_non_scalar_loss_rejected(self):
        with pytest.raises(ShapeError, match="scalar"):
            ad.backward(Tensor(np.zeros(3)))

    def test_three_layer_composition_matches_finite_differences(self):
        rng = np.random.default_rng(6)
        x = Tensor(rng.normal(size=(3, 4)))
        w1 = Tensor(rng.normal(size=(4, 5)) * 0.5)
        b1 = Tensor(rng.normal(size=5) * 0.1)
        w2 = Tensor(rng.normal(size=(5, 4)) * 0.5)
        c = rng.normal(size=(3, 4))

        def compose():
            h = ad.gelu(ad.add(ad.matmul(x, w1), b1))
            p = ad.softmax_rows(ad.matmul(h, w2))
            return ad.sum_all(ad.mul(p, Tensor(c)))

        ad.backward(compose())
        for t in (x, w1, b1, w2):
            analytic = t.grad.copy()
            fd = central_diff(lambda: float(compose().data), t.data, h=1e-5)
            assert max_rel_err(analytic, fd) < 1e-6

    def test_every_op_gradient(self):
        rng = np.random.default_rng(7)
        a = Tensor(rng.normal(size=(3, 4)))
        b = Tensor(rng.normal(size=(4, 3)))
        bias = Tensor(rng.normal(size=4))
        gamma = Tensor(rng.uniform(0.5, 1.5, size=4))
        beta = Tensor(rng.normal(size=4))
        table = Tensor(rng.normal(size=(5, 4)))
        ids = np.array([0, 2, 4])
        weights = Tensor(rng.normal(size=(4, 3)))
        targets = np.array([1, 0, 2])

        def compose():
            g = ad.embedding(table, ids)
            h = ad.add(a, g)
            h = ad.add(h, bias)
            h = ad.layer_norm(h, gamma, beta)
            h = ad.gelu(h)
            left = ad.slice_cols(h, 0, 2)
            right = ad.slice_cols(h, 2, 4)
            h = ad.concat_cols([right, left])
            h = ad.add_const(ad.scale(h, 1.7), 0.3)
            s = ad.softmax_rows(ad.matmul(h, b))
            logits = ad.matmul(s, ad.transpose(weights))
            ce = ad.cross_entropy(logits, targets, pad_id=0)
            tail = ad.slice_rows(h, 1, 3)
            return ad.add(ce, ad.scale(ad.sum_all(ad.mul(tail, tail)), 0.05))

        ad.backward(compose())
        for t in (a, b, bias, gamma, beta, table, weights):
            analytic = t.grad.copy()
            fd = central_diff(lambda: float(compose().data), t.data, h=1e-5)
            assert max_rel_err(analytic, fd) < 1e-4


class TestGraph:
    def test_topological_order_inputs_precede(self):
        rng = np.random.default_rng(8)
        x = Tensor(rng.normal(size=(2, 3)))
        w = Tensor(rng.normal(size=(3, 2)))
        loss = ad.sum_all(ad.softmax_rows(ad.matmul(x, w)))
        order = ad.topo_order(loss)
        pos = {id(node): i for i, node in enumerate(order)}
        for node in order:
            for inp in node.inputs:
                assert pos[id(inp)] < pos[id(node)]

    def test_forward_values_stay_finite(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            x = Tensor(rng.uniform(-1e3, 1e3, size=(3, 4)))
            w = Tensor(rng.uniform(-1e3, 1e3, size=(4, 4)))
            out = ad.layer_norm(ad.softmax_rows(ad.matmul(x, w)),
                                Tensor(np.ones(4)), Tensor(np.zeros(4)))
            assert np.all(np.isfinite(ad.gelu(out).data))
