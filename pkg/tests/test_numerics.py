import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from mtsfusion.numerics import DTYPE, ParamSet, RngStream, ShapeError, adam_step, grad_check, softmax


def scalar_param(v):
    return ParamSet.from_arrays({"w": np.array([v], dtype=float)})


def test_adam_zero_gradient_keeps_params_and_moments():
    ps = ParamSet.from_arrays({"w": np.array([1.0, -2.0])})
    adam_step(ps, {"w": torch.zeros(2, dtype=DTYPE)}, lr=0.1)
    assert torch.equal(ps["w"], torch.tensor([1.0, -2.0], dtype=DTYPE))
    assert torch.equal(ps.state["w"].m, torch.zeros(2, dtype=DTYPE))
    assert torch.equal(ps.state["w"].v, torch.zeros(2, dtype=DTYPE))


def test_adam_first_step_closed_form():
    ps = scalar_param(0.0)
    adam_step(ps, {"w": torch.tensor([2.0], dtype=DTYPE)}, lr=0.1)
    # m_hat = 2, v_hat = 4, update = 2 / (2 + eps)
    assert ps["w"].item() == pytest.approx(-0.1 * 2.0 / (2.0 + 1e-8), abs=1e-15)


def test_adam_two_steps_match_hand_recursion():
    b1, b2, eps, lr, g = 0.9, 0.999, 1e-8, 0.05, 1.5
    ps = scalar_param(0.3)
    w, m, v = 0.3, 0.0, 0.0
    for t in (1, 2):
        adam_step(ps, {"w": torch.tensor([g], dtype=DTYPE)}, lr=lr)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w -= lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
    assert ps["w"].item() == pytest.approx(w, abs=1e-14)
    assert ps.state["w"].m.item() == pytest.approx(m, abs=1e-15)
    assert ps.step == 2


def test_adam_rejects_bad_inputs():
    ps = scalar_param(0.0)
    with pytest.raises(ShapeError):
        adam_step(ps, {"w": torch.zeros(3, dtype=DTYPE)}, lr=0.1)
    with pytest.raises(ValueError):
        adam_step(ps, {"w": torch.zeros(1, dtype=DTYPE)}, lr=0.1, betas=(1.0, 0.9))
    with pytest.raises(ValueError):
        adam_step(ps, {"w": torch.zeros(1, dtype=DTYPE)}, lr=0.1, eps=0.0)


def test_adam_lr_zero_is_a_no_op_on_params():
    ps = scalar_param(1.0)
    adam_step(ps, {"w": torch.tensor([3.0], dtype=DTYPE)}, lr=0.0)
    assert ps["w"].item() == 1.0


def test_grad_check_polynomial_and_sigmoid():
    ps = scalar_param(3.0)
    assert grad_check(lambda p: (p["w"] ** 2).sum(), ps) < 1e-8
    ps0 = scalar_param(0.0)
    torch.sigmoid(ps0["w"]).sum().backward()
    assert ps0["w"].grad.item() == pytest.approx(0.25)
    assert grad_check(lambda p: torch.sigmoid(p["w"]).sum(), ps0) < 1e-9


def test_grad_check_detects_wrong_gradient():
    class Wrong(torch.autograd.Function):
        @staticmethod
        def forward(ctx, x):
            return x**2

        @staticmethod
        def backward(ctx, g):
            return g  # should be 2x

    ps = scalar_param(3.0)
    assert grad_check(lambda p: Wrong.apply(p["w"]).sum(), ps) > 0.5


def test_grad_check_nonfinite_base_raises():
    ps = scalar_param(-1.0)
    with pytest.raises(FloatingPointError):
        grad_check(lambda p: torch.log(p["w"]).sum(), ps)


def test_grad_check_gru_with_output_layer():
    from mtsfusion.models.layers import Dense, GRUSeq

    gen = torch.Generator().manual_seed(0)
    rnn, out = GRUSeq(3, 4), Dense(4, 1)
    for p in list(rnn.parameters()) + list(out.parameters()):
        with torch.no_grad():
            p.copy_(torch.randn(p.shape, generator=gen, dtype=DTYPE) * 0.5)
    X = torch.randn(1, 5, 3, generator=gen, dtype=DTYPE)
    mask = torch.ones(1, 5, dtype=DTYPE)
    mod = torch.nn.ModuleDict({"rnn": rnn, "out": out})
    ps = ParamSet.from_module(mod)
    assert grad_check(lambda p: torch.sigmoid(out(rnn(X, mask))).sum(), ps) < 1e-4


def test_softmax_shift_invariance():
    x = torch.tensor([[1.0, 2.0, 3.0]], dtype=DTYPE)
    assert torch.allclose(softmax(x, -1), softmax(x + 1000.0, -1))
    assert softmax(x, -1).sum().item() == pytest.approx(1.0)


def test_rng_same_key_same_draws():
    a, b = RngStream(7, 3), RngStream(7, 3)
    assert np.array_equal(a.uniform(100), b.uniform(100))


@settings(max_examples=1000, deadline=None)
@given(st.integers(0, 2**64 - 1))
def test_rng_sibling_tasks_differ(root):
    assert RngStream(root, 0).bits64() != RngStream(root, 1).bits64()


def test_rng_children_independent_of_consumption_order():
    parent = RngStream(11, 0)
    first = parent.child(2).normal(5)
    parent.uniform(1000)
    assert np.array_equal(first, RngStream(11, 0).child(2).normal(5))
    assert RngStream(11, (0, 2)).key == parent.child(2).key


def test_rng_uniform_mean():
    u = RngStream(123, 0).uniform(100_000)
    assert u.min() >= 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 0.01
