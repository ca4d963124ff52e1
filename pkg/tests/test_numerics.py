import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from freqmix import numerics as nx
from freqmix.numerics import GradientTape, Parameter, ShapeError, TapeError


def triple_loop_matmul(a, b):
    n, m = a.shape
    _, p = b.shape
    out = np.zeros((n, p))
    for i in range(n):
        for j in range(p):
            for k in range(m):
                out[i, j] += a[i, k] * b[k, j]
    return out


def numeric_grad(f, x, eps=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + eps
        hi = f(x)
        x[idx] = old - eps
        lo = f(x)
        x[idx] = old
        g[idx] = (hi - lo) / (2 * eps)
    return g


def test_matmul_matches_triple_loop():
    rng = nx.make_rng(3)
    a, b = rng.normal(size=(4, 5)), rng.normal(size=(5, 3))
    np.testing.assert_allclose(nx.matmul(a, b), triple_loop_matmul(a, b), atol=1e-12)


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeError):
        nx.matmul(np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(ShapeError):
        nx.matmul(np.ones(3), np.ones((3, 1)))


def test_softmax_two_logits():
    p = nx.softmax(np.array([1.0, 0.0]))
    np.testing.assert_allclose(p, [0.73106, 0.26894], atol=1e-5)


def test_softmax_is_shift_invariant_and_stable():
    x = np.array([1000.0, 999.0, 998.0])
    p = nx.softmax(x)
    np.testing.assert_allclose(p, nx.softmax(x - 1000.0), atol=1e-15)
    assert np.isfinite(p).all()


def test_softmax_rejects_nan():
    with pytest.raises(nx.NonFiniteError):
        nx.softmax(np.array([0.0, np.nan]))


def test_scaled_softmax_needs_positive_width():
    with pytest.raises(ValueError):
        nx.scaled_softmax_rows(np.eye(2), 0)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 6)),
              elements=st.floats(-50, 50)))
def test_softmax_rows_are_distributions(x):
    p = nx.softmax(x, axis=-1)
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-12)


def test_chain_rule_on_powers():
    tape = GradientTape()
    p = Parameter("x", np.array(3.0))
    x = tape.watch(p)
    y = x * x
    z = y * y
    tape.backward(z * z)
    assert p.gradient == 8 * 3.0 ** 7


def test_shared_node_accumulates():
    tape = GradientTape()
    p = Parameter("x", np.array([2.0, -1.0]))
    x = tape.watch(p)
    tape.backward(nx.sum_(nx.add(nx.mul(x, x), x)))
    np.testing.assert_allclose(p.gradient, 2 * p.value + 1)


def test_backward_twice_raises():
    tape = GradientTape()
    x = tape.watch(Parameter("x", np.array(1.0)))
    loss = nx.mul(x, x)
    tape.backward(loss)
    with pytest.raises(TapeError):
        tape.backward(loss)


def test_empty_tape_and_nonscalar_loss():
    with pytest.raises(TapeError):
        GradientTape().backward(None)
    tape = GradientTape()
    x = tape.watch(Parameter("x", np.ones(3)))
    with pytest.raises(ShapeError):
        tape.backward(nx.mul(x, 2.0))


def test_unreached_parameter_gets_zero_gradient():
    tape = GradientTape()
    a, b = Parameter("a", np.ones(2)), Parameter("b", np.full(2, 7.0))
    b.gradient[...] = 5.0
    xa = tape.watch(a)
    tape.watch(b)
    tape.backward(nx.sum_(xa))
    np.testing.assert_array_equal(b.gradient, 0.0)


def test_plain_arrays_bypass_the_tape():
    out = nx.relu(np.array([-1.0, 2.0]))
    assert isinstance(out, np.ndarray)


PRIMITIVES = {
    "bmm": lambda x, c: nx.bmm(x, c["m"]),
    "sigmoid": lambda x, c: nx.sigmoid(x),
    "softmax": lambda x, c: nx.softmax(x, axis=-1, scale=0.7),
    "mean": lambda x, c: nx.mean(x, axis=(0, 2)),
    "amax": lambda x, c: nx.amax(x, axis=(0, 2)),
    "transpose": lambda x, c: nx.transpose(x, (2, 0, 1)),
    "shift": lambda x, c: nx.shift(x, 2, axis=-1),
    "getitem": lambda x, c: nx.getitem(x, (Ellipsis, [0, 2, 2])),
    "concat": lambda x, c: nx.concat([x, nx.mul(x, 2.0)], axis=1),
    "stack": lambda x, c: nx.stack([x, x], axis=0),
    "apply_along": lambda x, c: nx.apply_along(x, c["m4"], axis=2),
    "einsum": lambda x, c: nx.einsum("abc,cd->abd", x, c["m"]),
    "reshape": lambda x, c: nx.reshape(x, (6, 4)),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_gradients_match_finite_differences(name):
    rng = nx.make_rng(11)
    consts = {"m": rng.normal(size=(4, 3)), "m4": rng.normal(size=(4, 4))}
    x0 = rng.normal(size=(2, 3, 4))
    w = rng.normal(size=np.shape(PRIMITIVES[name](x0, consts)))
    fn = PRIMITIVES[name]

    def f(x):
        return float((fn(x, consts) * w).sum())

    tape = GradientTape()
    p = Parameter("x", x0.copy())
    out = fn(tape.watch(p), consts)
    tape.backward(nx.sum_(nx.mul(out, w)))
    np.testing.assert_allclose(p.gradient, numeric_grad(f, x0.copy()), rtol=1e-6, atol=1e-8)


def test_cross_entropy_gradient():
    rng = nx.make_rng(5)
    logits = rng.normal(size=(4, 3))
    labels = np.array([0, 2, 1, 2])
    tape = GradientTape()
    p = Parameter("z", logits.copy())
    tape.backward(nx.cross_entropy(tape.watch(p), labels))
    g = numeric_grad(lambda z: float(nx.cross_entropy(z, labels)), logits.copy())
    np.testing.assert_allclose(p.gradient, g, atol=1e-8)


def test_cross_entropy_value():
    # uniform logits over k classes -> log k
    assert float(nx.cross_entropy(np.zeros((2, 4)), [1, 3])) == pytest.approx(np.log(4))


def test_pooled_projection_avg_and_max():
    x = np.arange(12.0).reshape(2, 3, 2)
    w = np.eye(3)
    b = np.array([0.0, -100.0, 0.0])
    avg = nx.pooled_projection(x, w, b, "avg", pool_axis=-1)
    np.testing.assert_allclose(avg, [[0.5, 0, 4.5], [6.5, 0, 10.5]])
    mx = nx.pooled_projection(x, w, np.zeros(3), "max", pool_axis=-1)
    np.testing.assert_allclose(mx, [[1, 3, 5], [7, 9, 11]])
    with pytest.raises(ShapeError):
        nx.pooled_projection(x, np.eye(2), np.zeros(2))


def test_glorot_bounds():
    w = nx.glorot_uniform(nx.make_rng(0), 10, 20, (10, 20))
    assert np.abs(w).max() <= np.sqrt(6 / 30)


def test_sgd_step_rule():
    p = Parameter("w", np.array([1.0, -2.0]))
    p.gradient[...] = [0.5, 0.5]
    vel = nx.sgd_step([p], lr=0.1, momentum=0.9, weight_decay=0.01)
    np.testing.assert_allclose(vel["w"], [0.5 + 0.01, 0.5 - 0.02])
    np.testing.assert_allclose(p.value, [1.0 - 0.051, -2.0 - 0.048])
    np.testing.assert_array_equal(p.gradient, 0.0)
    p.gradient[...] = [1.0, 0.0]
    nx.sgd_step([p], lr=0.1, momentum=0.9, weight_decay=0.0, velocity=vel)
    np.testing.assert_allclose(vel["w"], [0.9 * 0.51 + 1.0, 0.9 * 0.48])


def test_sgd_zero_lr_keeps_values():
    p = Parameter("w", np.array([1.0, 2.0]))
    p.gradient[...] = 3.0
    nx.sgd_step([p], lr=0.0)
    np.testing.assert_array_equal(p.value, [1.0, 2.0])
    with pytest.raises(ValueError):
        nx.sgd_step([p], lr=-0.1)


def test_clip_gradients():
    a, b = Parameter("a", np.zeros(1)), Parameter("b", np.zeros(1))
    a.gradient[...] = 3.0
    b.gradient[...] = 4.0
    assert nx.clip_gradients([a, b], 1.0) == pytest.approx(5.0)
    np.testing.assert_allclose([a.gradient[0], b.gradient[0]], [0.6, 0.8])
    assert nx.clip_gradients([a, b], 10.0) == pytest.approx(1.0)
    np.testing.assert_allclose([a.gradient[0], b.gradient[0]], [0.6, 0.8])


def test_checkpoint_round_trip(tmp_path):
    rng = nx.make_rng(0)
    params = [Parameter("a.w", rng.normal(size=(3, 2))), Parameter("b", rng.normal(size=(4,))),
              Parameter("s", np.array(1.5))]
    path = tmp_path / "m.ckpt"
    nx.save_parameters(path, params)
    back = nx.load_parameters(path)
    assert list(back) == ["a.w", "b", "s"]
    for p in params:
        assert back[p.name].tobytes() == p.value.tobytes()
    raw = path.read_bytes()
    assert raw[:4] == b"FMXC" and struct.unpack_from("<BI", raw, 4) == (1, 3)


def test_checkpoint_rejects_corruption(tmp_path):
    path = tmp_path / "m.ckpt"
    nx.save_parameters(path, [Parameter("w", np.ones((2, 2)))])
    raw = path.read_bytes()
    for bad in (b"XXXX" + raw[4:], raw[:-3], raw + b"\0"):
        path.write_bytes(bad)
        with pytest.raises(nx.FormatError):
            nx.load_parameters(path)


def test_philox_streams_are_reproducible():
    a = nx.make_rng(42).normal(size=5)
    b = nx.make_rng(42).normal(size=5)
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, nx.make_rng(43).normal(size=5))
