import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stpool import autodiff as ad
from stpool.autodiff import Tensor, max_pool_set, segment_max
from stpool.errors import EmptySetError

from conftest import assert_grads_match


def test_backward_of_sum_is_ones():
    x = Tensor(np.random.default_rng(0).normal(size=(3, 4)), requires_grad=True)
    ad.tsum(x).backward()
    np.testing.assert_array_equal(x.grad, np.ones((3, 4)))


def test_backward_hand_chain_rule():
    # loss = (3w - 6)^2 at w=1  =>  dloss/dw = 2*(3-6)*3 = -18
    w = Tensor([1.0], requires_grad=True)
    loss = ad.power(ad.sub(ad.mul(w, 3.0), 6.0), 2.0)
    loss.backward()
    assert loss.item() == 9.0
    np.testing.assert_allclose(w.grad, [-18.0])


def test_backward_rejects_non_scalar():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ValueError):
        ad.add(x, 1.0).backward()


def test_backward_accumulates_until_cleared():
    w = Tensor([2.0], requires_grad=True)
    ad.tsum(ad.mul(w, w)).backward()
    first = w.grad.copy()
    ad.tsum(ad.mul(w, w)).backward()
    np.testing.assert_allclose(w.grad, 2 * first)
    w.zero_grad()
    assert w.grad is None


def test_matmul_shape_mismatch():
    with pytest.raises(ValueError):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_relu_values_and_gradient():
    x = Tensor([-1.0, 0.0, 2.0], requires_grad=True)
    y = ad.relu(x)
    np.testing.assert_array_equal(y.data, [0.0, 0.0, 2.0])
    ad.tsum(y).backward()
    np.testing.assert_array_equal(x.grad, [0.0, 0.0, 1.0])


def test_relu_gradient_at_negative_point_is_zero():
    x = Tensor([-3.0], requires_grad=True)
    ad.tsum(ad.relu(x)).backward()
    np.testing.assert_array_equal(x.grad, [0.0])


def test_relu_identity_on_positives(rng):
    x = rng.uniform(0.1, 5.0, size=(4, 3))
    np.testing.assert_array_equal(ad.relu(Tensor(x)).data, x)


def test_max_pool_set_basic():
    pooled, argmax = max_pool_set(Tensor([[1.0, 5.0], [3.0, 2.0]]))
    np.testing.assert_array_equal(pooled.data, [3.0, 5.0])
    np.testing.assert_array_equal(argmax, [1, 0])


def test_max_pool_single_row_is_identity():
    pooled, argmax = max_pool_set(Tensor([[4.0, -2.0, 0.5]]))
    np.testing.assert_array_equal(pooled.data, [4.0, -2.0, 0.5])
    np.testing.assert_array_equal(argmax, [0, 0, 0])


def test_max_pool_duplicate_row_changes_nothing(rng):
    x = rng.normal(size=(5, 4))
    base, _ = max_pool_set(Tensor(x))
    dup, _ = max_pool_set(Tensor(np.vstack([x, x[2]])))
    np.testing.assert_array_equal(base.data, dup.data)


def test_max_pool_empty_mask_raises():
    with pytest.raises(EmptySetError):
        max_pool_set(Tensor(np.ones((3, 2))), mask=np.zeros(3, dtype=bool))


def test_max_pool_respects_mask():
    x = Tensor([[10.0, 10.0], [1.0, 2.0], [3.0, 0.0]])
    pooled, argmax = max_pool_set(x, mask=np.array([False, True, True]))
    np.testing.assert_array_equal(pooled.data, [3.0, 2.0])
    np.testing.assert_array_equal(argmax, [2, 1])


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 12), st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_max_pool_permutation_invariant(k, d, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(k, d))
    perm = rng.permutation(k)
    base, _ = max_pool_set(Tensor(x))
    shuffled, _ = max_pool_set(Tensor(x[perm]))
    assert np.array_equal(base.data, shuffled.data)


def test_segment_max_routes_gradient_to_argmax_only():
    x = Tensor(np.array([[1.0, 9.0], [5.0, 2.0], [7.0, 3.0]]), requires_grad=True)
    pooled, argmax = segment_max(x, [(0, 2), (2, 3)])
    np.testing.assert_array_equal(pooled.data, [[5.0, 9.0], [7.0, 3.0]])
    ad.tsum(pooled).backward()
    np.testing.assert_array_equal(x.grad, [[0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])


def test_segment_max_empty_segment_raises():
    with pytest.raises(EmptySetError):
        segment_max(Tensor(np.ones((2, 2))), [(0, 2), (2, 2)])


def test_gather_rows_accumulates_repeated_indices():
    x = Tensor(np.array([[1.0], [2.0]]), requires_grad=True)
    out = ad.gather_rows(x, np.array([0, 0, 1]))
    ad.tsum(out).backward()
    np.testing.assert_array_equal(x.grad, [[2.0], [1.0]])


class TestFiniteDifferences:
    """Every differentiable op against central differences (rel 1e-4)."""

    def test_add_broadcast(self, rng):
        a = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        b = Tensor(rng.normal(size=(3,)), requires_grad=True)

        def f():
            a.zero_grad()
            b.zero_grad()
            loss = ad.tsum(ad.mul(ad.add(a, b), ad.add(a, b)))
            loss.backward()
            return loss.item()

        assert_grads_match(f, [a, b])

    def test_sub_mul(self, rng):
        a = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
        b = Tensor(rng.normal(size=(3, 2)), requires_grad=True)

        def f():
            a.zero_grad()
            b.zero_grad()
            loss = ad.tsum(ad.mul(ad.sub(a, b), b))
            loss.backward()
            return loss.item()

        assert_grads_match(f, [a, b])

    def test_matmul(self, rng):
        a = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        b = Tensor(rng.normal(size=(3, 5)), requires_grad=True)

        def f():
            a.zero_grad()
            b.zero_grad()
            loss = ad.tsum(ad.power(ad.matmul(a, b), 2.0))
            loss.backward()
            return loss.item()

        assert_grads_match(f, [a, b])

    @pytest.mark.parametrize("op", [ad.sigmoid, ad.tanh])
    def test_pointwise(self, rng, op):
        x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)

        def f():
            x.zero_grad()
            loss = ad.tsum(op(x))
            loss.backward()
            return loss.item()

        assert_grads_match(f, [x])

    def test_relu_away_from_kink(self, rng):
        vals = rng.normal(size=(3, 4))
        vals[np.abs(vals) < 0.05] = 0.5
        x = Tensor(vals, requires_grad=True)

        def f():
            x.zero_grad()
            loss = ad.tsum(ad.relu(x))
            loss.backward()
            return loss.item()

        assert_grads_match(f, [x])

    def test_power(self, rng):
        x = Tensor(rng.uniform(0.5, 2.0, size=(2, 3)), requires_grad=True)

        def f():
            x.zero_grad()
            loss = ad.tsum(ad.power(x, -0.5))
            loss.backward()
            return loss.item()

        assert_grads_match(f, [x])

    def test_sum_axis_and_mean(self, rng):
        x = Tensor(rng.normal(size=(4, 3)), requires_grad=True)

        def f():
            x.zero_grad()
            loss = ad.tsum(ad.power(ad.tmean(x, axis=0), 2.0))
            loss.backward()
            return loss.item()

        assert_grads_match(f, [x])

    def test_concat_slice_reshape(self, rng):
        a = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
        b = Tensor(rng.normal(size=(3, 4)), requires_grad=True)

        def f():
            a.zero_grad()
            b.zero_grad()
            joined = ad.concat_cols(a, b)
            piece = ad.slice_cols(joined, 1, 5)
            loss = ad.tsum(ad.power(ad.reshape(piece, (12,)), 2.0))
            loss.backward()
            return loss.item()

        assert_grads_match(f, [a, b])

    def test_gather_rows(self, rng):
        x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        idx = np.array([0, 2, 2, 1, 0])

        def f():
            x.zero_grad()
            loss = ad.tsum(ad.power(ad.gather_rows(x, idx), 2.0))
            loss.backward()
            return loss.item()

        assert_grads_match(f, [x])

    def test_segment_max_with_margin(self, rng):
        # Keep per-column maxima separated so the argmax never flips under h.
        x = rng.normal(size=(6, 3))
        x[1] += 3.0
        x[4] += 3.0
        t = Tensor(x, requires_grad=True)

        def f():
            t.zero_grad()
            pooled, _ = segment_max(t, [(0, 3), (3, 6)])
            loss = ad.tsum(ad.power(pooled, 2.0))
            loss.backward()
            return loss.item()

        assert_grads_match(f, [t])


def test_full_graph_is_deterministic(rng):
    a = rng.normal(size=(5, 4))
    b = rng.normal(size=(4, 3))

    def run():
        ta = Tensor(a.copy(), requires_grad=True)
        tb = Tensor(b.copy(), requires_grad=True)
        pooled, _ = segment_max(ad.tanh(ad.matmul(ta, tb)), [(0, 5)])
        loss = ad.tsum(ad.power(pooled, 2.0))
        loss.backward()
        return loss.item(), ta.grad.copy(), tb.grad.copy()

    l1, ga1, gb1 = run()
    l2, ga2, gb2 = run()
    assert l1 == l2
    assert np.array_equal(ga1, ga2)
    assert np.array_equal(gb1, gb2)
