"""Numeric core: op semantics, tape replay, gradients vs finite differences."""

import numpy as np
import pytest

from cadence import ops
from cadence.rng import SplitMix64
from cadence.tensor import Tape, Tensor, backward, set_finite_checks


def fd_directional(f, arrays, direction, h=1e-5):
    """Central finite difference of f(arrays) along a flat unit direction."""
    flat = np.concatenate([a.ravel() for a in arrays])

    def unflatten(v):
        out, off = [], 0
        for a in arrays:
            out.append(v[off : off + a.size].reshape(a.shape))
            off += a.size
        return out

    lp = f(unflatten(flat + h * direction))
    lm = f(unflatten(flat - h * direction))
    return (lp - lm) / (2 * h)


# ---------------------------------------------------------------------------
# forward semantics

def test_matmul_identity():
    a = SplitMix64(0).normal((3, 3))
    out = ops.matmul(Tensor(np.eye(3)), Tensor(a))
    assert np.allclose(out.data, a)


def test_matmul_hand_case():
    out = ops.matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[0.0], [1.0]]))
    assert np.array_equal(out.data, [[2.0], [4.0]])


def test_matmul_matches_triple_loop_oracle():
    rng = SplitMix64(1)
    a, b = rng.normal((5, 7)), rng.normal((7, 3))
    expected = np.zeros((5, 3))
    for i in range(5):
        for j in range(3):
            for k in range(7):
                expected[i, j] += a[i, k] * b[k, j]
    assert np.abs(ops.matmul(Tensor(a), Tensor(b)).data - expected).max() < 1e-12


def test_matmul_shape_error():
    with pytest.raises(ValueError):
        ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_softmax_symmetry_and_stability():
    out = ops.softmax(Tensor([0.0, 0.0, 0.0])).data
    assert np.allclose(out, 1.0 / 3.0)
    big = ops.softmax(Tensor([1000.0, 0.0])).data
    assert np.all(np.isfinite(big))
    assert big[0] > 1.0 - 1e-12 and big[1] < 1e-12


def test_softmax_matches_high_precision_oracle():
    from mpmath import mp, mpf, exp as mpexp

    mp.dps = 50
    x = SplitMix64(2).normal(9)
    exps = [mpexp(mpf(v)) for v in x]
    total = sum(exps)
    expected = np.array([float(e / total) for e in exps])
    got = ops.softmax(Tensor(x)).data
    assert np.abs(got - expected).max() < 1e-12


def test_softmax_rows_sum_to_one():
    x = SplitMix64(3).normal((4, 6))
    out = ops.softmax(Tensor(x), axis=-1).data
    assert np.all(out >= 0.0)
    assert np.abs(out.sum(axis=-1) - 1.0).max() < 1e-12


def test_layernorm_constant_vector_returns_bias():
    gain = Tensor(np.full(8, 2.0))
    bias = Tensor(np.arange(8.0))
    out = ops.layernorm(Tensor(np.full((3, 8), 5.0)), gain, bias)
    assert np.allclose(out.data, np.arange(8.0))


def test_gelu_zero_and_limits():
    assert ops.gelu(Tensor(0.0)).data == 0.0
    x = np.array([-20.0, 20.0])
    out = ops.gelu(Tensor(x)).data
    assert abs(out[0]) < 1e-12
    assert abs(out[1] - 20.0) < 1e-12


def test_mean_hand_value():
    assert ops.mean(Tensor([[1.0, 2.0], [3.0, 6.0]])).data == 3.0


def test_concat_slice_roundtrip():
    rng = SplitMix64(4)
    a, b = rng.normal((2, 3)), rng.normal((2, 5))
    cat = ops.concat([Tensor(a), Tensor(b)], axis=1)
    assert np.array_equal(ops.slice_axis(cat, 1, 3, 8).data, b)


def test_finite_check_toggle():
    prior = set_finite_checks(True)
    try:
        with pytest.raises(FloatingPointError):
            Tensor([np.nan])
    finally:
        set_finite_checks(prior)
    Tensor([np.inf])  # allowed while checks are off


# ---------------------------------------------------------------------------
# backward

def test_backward_sum_of_squares_analytic():
    p = Tensor(np.array([1.0, -2.0, 3.0]), leaf=True)
    with Tape() as tape:
        loss = ops.sum_sq(p)
    g = backward(tape, loss).get(p)
    assert np.allclose(g, 2.0 * p.data)


def test_backward_constant_loss_zero_gradient():
    p = Tensor(np.ones(4), leaf=True)
    with Tape() as tape:
        loss = ops.sum(Tensor(np.zeros(())) * ops.sum(p)) * 0.0
    g = backward(tape, loss).get(p)
    assert np.array_equal(g, np.zeros(4))


def test_backward_requires_scalar_loss():
    p = Tensor(np.ones(3), leaf=True)
    with Tape() as tape:
        out = p * 2.0
    with pytest.raises(ValueError):
        backward(tape, out)


def test_backward_visits_each_entry_once_in_reverse():
    visits = []
    p = Tensor(np.ones(2), leaf=True)
    with Tape() as tape:
        a = p * 3.0
        b = a + 1.0
        loss = ops.sum(b)
    original = list(tape._entries)
    wrapped = []
    for order, (inputs, output, fn) in enumerate(original):
        def make(fn, order):
            def traced(g):
                visits.append(order)
                return fn(g)

            return traced

        wrapped.append((inputs, output, make(fn, order)))
    tape._entries = wrapped
    backward(tape, loss)
    assert visits == sorted(range(len(original)), reverse=True)


def test_matmul_chain_matches_finite_differences():
    rng = SplitMix64(5)
    shapes = [(4, 5), (5, 3), (3, 2)]
    arrays = [rng.normal(s) for s in shapes]

    def run(arrs):
        leaves = [Tensor(a, leaf=True) for a in arrs]
        with Tape() as tape:
            out = ops.matmul(ops.matmul(leaves[0], leaves[1]), leaves[2])
            loss = ops.sum_sq(out)
        return tape, loss, leaves

    tape, loss, leaves = run(arrays)
    grads = backward(tape, loss)
    flat_grad = np.concatenate([grads.get(p).ravel() for p in leaves])
    dir_rng = SplitMix64(6)
    for _ in range(10):
        d = dir_rng.normal(flat_grad.size)
        d /= np.linalg.norm(d)
        fd = fd_directional(lambda arrs: run(arrs)[1].item(), arrays, d)
        ana = float(flat_grad @ d)
        assert abs(fd - ana) / max(abs(fd), abs(ana), 1e-12) < 1e-6


@pytest.mark.parametrize(
    "name,build",
    [
        ("softmax", lambda x: ops.sum_sq(ops.softmax(x, axis=-1) * Tensor(np.arange(6.0).reshape(2, 3)))),
        ("gelu", lambda x: ops.sum_sq(ops.gelu(x))),
        ("layernorm", lambda x: ops.sum_sq(
            ops.layernorm(x, Tensor(np.linspace(0.5, 1.5, 3)), Tensor(np.zeros(3))))),
        ("sqrt_exp_log", lambda x: ops.sum(ops.log(ops.exp(ops.sqrt(x * x + 1.0))))),
        ("div", lambda x: ops.sum_sq(x / (x * x + 2.0))),
        ("tanh", lambda x: ops.sum_sq(ops.tanh(x))),
        ("slice_concat", lambda x: ops.sum_sq(
            ops.concat([ops.slice_axis(x, 1, 1, 3), ops.slice_axis(x, 1, 0, 1)], axis=1))),
        ("reduce", lambda x: ops.sum_sq(ops.mean(x, axis=0)) + ops.sum_sq(ops.sum(x, axis=1))),
    ],
)
def test_elementwise_ops_match_finite_differences(name, build):
    x0 = SplitMix64(hash(name) & 0xFFFF).normal((2, 3))

    def run(arrs):
        leaf = Tensor(arrs[0], leaf=True)
        with Tape() as tape:
            loss = build(leaf)
        return tape, loss, leaf

    tape, loss, leaf = run([x0])
    g = backward(tape, loss).get(leaf).ravel()
    dir_rng = SplitMix64(99)
    for _ in range(5):
        d = dir_rng.normal(g.size)
        d /= np.linalg.norm(d)
        fd = fd_directional(lambda arrs: run(arrs)[1].item(), [x0], d)
        ana = float(g @ d)
        assert abs(fd - ana) / max(abs(fd), abs(ana), 1e-12) < 1e-6


def test_broadcast_add_mul_gradients():
    rng = SplitMix64(8)
    a0, b0 = rng.normal((4, 3)), rng.normal((3,))

    def run(arrs):
        a, b = (Tensor(v, leaf=True) for v in arrs)
        with Tape() as tape:
            loss = ops.sum_sq(a * b + b)
        return tape, loss, (a, b)

    tape, loss, (a, b) = run([a0, b0])
    grads = backward(tape, loss)
    flat = np.concatenate([grads.get(a).ravel(), grads.get(b).ravel()])
    d = SplitMix64(9).normal(flat.size)
    d /= np.linalg.norm(d)
    fd = fd_directional(lambda arrs: run(arrs)[1].item(), [a0, b0], d)
    assert abs(fd - float(flat @ d)) / max(abs(fd), 1e-12) < 1e-6


def test_ops_are_deterministic():
    rng = SplitMix64(10)
    x = rng.normal((5, 5))
    r1 = ops.softmax(ops.gelu(Tensor(x))).data
    r2 = ops.softmax(ops.gelu(Tensor(x.copy()))).data
    assert np.array_equal(r1, r2)
