import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tsd.errors import ContractError, DimensionError, NumericError
from tsd.tensor import Tensor, concat, grad_reverse, no_grad, pad_axis, split, stack

finite = st.floats(-5, 5, allow_nan=False, width=64)


def test_scalar_chain_rule():
    x = Tensor([2.0], requires_grad=True)
    y = (x * x * 3.0 + x.exp()).sum()
    y.backward()
    assert np.allclose(x.grad, 6 * 2.0 + np.exp(2.0))


def test_gradients_accumulate_over_reuse():
    x = Tensor(np.ones(3), requires_grad=True)
    (x + x + x).sum().backward()
    assert np.array_equal(x.grad, np.full(3, 3.0))


def test_shape_mismatch_is_rejected():
    with pytest.raises(DimensionError):
        Tensor(np.ones(3)) + Tensor(np.ones(4))
    with pytest.raises(DimensionError):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))


def test_scalar_broadcast_is_allowed():
    x = Tensor(np.arange(3.0), requires_grad=True)
    s = Tensor(2.0, requires_grad=True)
    (x * s).sum().backward()
    assert s.grad == pytest.approx(3.0)
    assert np.array_equal(x.grad, np.full(3, 2.0))


def test_domain_errors():
    with pytest.raises(NumericError):
        Tensor([-1.0]).log()
    with pytest.raises(NumericError):
        Tensor([-1.0]).sqrt()
    with pytest.raises(NumericError):
        Tensor([1.0]) / Tensor([0.0])


def test_backward_needs_scalar():
    with pytest.raises(ContractError):
        Tensor(np.ones(2), requires_grad=True).backward()


def test_no_grad_builds_no_graph():
    x = Tensor(np.ones(2), requires_grad=True)
    with no_grad():
        y = (x * 2.0).sum()
    assert not y.requires_grad
    y = (x * 2.0).sum()
    assert y.requires_grad


def test_grad_reverse_negates():
    x = Tensor(np.ones(4), requires_grad=True)
    grad_reverse(x * 3.0, 0.5).sum().backward()
    assert np.array_equal(x.grad, np.full(4, -1.5))


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (3, 4), elements=finite), arrays(np.float64, (3, 2), elements=finite))
def test_concat_split_roundtrip(a, b):
    ta, tb = Tensor(a, requires_grad=True), Tensor(b, requires_grad=True)
    joined = concat([ta, tb], axis=1)
    back = split(joined, [4, 2], axis=1)
    assert np.array_equal(back[0].data, a) and np.array_equal(back[1].data, b)
    w = np.arange(18.0).reshape(3, 6)
    (joined * Tensor(w)).sum().backward()
    assert np.array_equal(ta.grad, w[:, :4]) and np.array_equal(tb.grad, w[:, 4:])


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (2, 3, 4), elements=finite))
def test_matmul_matches_numpy(a):
    b = np.linspace(-1, 1, 20).reshape(4, 5)
    out = Tensor(a) @ Tensor(b)
    assert np.allclose(out.data, a @ b)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (2, 5), elements=finite))
def test_reductions_and_reshape(a):
    t = Tensor(a, requires_grad=True)
    m = t.mean(axis=1).sum() + t.reshape(10).sum() + t.transpose(1, 0).sum(axis=0).sum()
    m.backward()
    assert np.allclose(t.grad, np.full(a.shape, 1 / 5 + 2))


def test_stack_and_pad():
    a, b = Tensor(np.ones((2, 3)), requires_grad=True), Tensor(np.zeros((2, 3)))
    s = stack([a, b], axis=1)
    assert s.shape == (2, 2, 3)
    p = pad_axis(a, 1, 1, 2)
    assert p.shape == (2, 6) and p.data[:, 0].sum() == 0
    p.sum().backward()
    assert np.array_equal(a.grad, np.ones((2, 3)))


def test_fancy_index_scatter_adds():
    x = Tensor(np.zeros(3), requires_grad=True)
    x[np.array([0, 0, 2])].sum().backward()
    assert np.array_equal(x.grad, [2.0, 0.0, 1.0])
