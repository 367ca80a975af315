import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from david.errors import DataError, NumericError
from david.nn import (
    AdamState,
    DenseLayer,
    Mlp,
    adam_step,
    backward,
    finite_difference_check,
    forward,
    init_mlp,
    load_tensors,
    save_tensors,
)


def test_shapes_and_tanh_bounds(rng):
    mlp = init_mlp([7, 13, 5, 4], rng)
    out = mlp(rng.normal(size=(10, 7)) * 100)
    assert out.shape == (10, 4)
    assert np.all(np.abs(out) <= 1)
    assert mlp.dims == [7, 13, 5, 4]
    assert [p.shape for p in mlp.parameters()] == [(13, 7), (13,), (5, 13), (5,), (4, 5), (4,)]


def test_xavier_bounds_and_determinism():
    a = init_mlp([4, 6, 2], np.random.default_rng(3))
    b = init_mlp([4, 6, 2], np.random.default_rng(3))
    for pa, pb in zip(a.parameters(), b.parameters()):
        np.testing.assert_array_equal(pa, pb)
    assert np.all(np.abs(a.layers[0].weight) <= np.sqrt(6 / 10))
    np.testing.assert_array_equal(a.layers[0].bias, 0)


def test_zero_init_gives_zero_output(rng):
    mlp = init_mlp([3, 4, 2], rng, zero=True)
    np.testing.assert_array_equal(mlp(rng.normal(size=(5, 3))), 0)
    np.testing.assert_array_equal(np.tanh(0.0), 0.0)


def test_linear_last_layer(rng):
    mlp = Mlp([DenseLayer(np.array([[10.0]]), np.array([0.0]))], activate_last=False)
    np.testing.assert_array_equal(mlp(np.array([[2.0]])), [[20.0]])


def test_input_shape_checked(rng):
    with pytest.raises(DataError):
        forward(init_mlp([3, 2], rng), np.zeros((4, 5)))
    with pytest.raises(DataError):
        Mlp([DenseLayer(np.zeros((2, 3)), np.zeros(2)), DenseLayer(np.zeros((1, 4)), np.zeros(1))])


def test_backward_hand_derivative():
    # y = w*x + b with linear output: dL/dw = x for L = y
    mlp = Mlp([DenseLayer(np.array([[0.5]]), np.array([0.2]))], activate_last=False)
    out, cache = forward(mlp, np.array([[3.0]]))
    grads, gx = backward(mlp, cache, np.ones_like(out))
    gw, gb = grads
    assert gw[0, 0] == 3.0 and gb[0] == 1.0 and gx[0, 0] == 0.5


def test_backward_tanh_derivative():
    mlp = Mlp([DenseLayer(np.array([[1.0]]), np.array([0.0]))], activate_last=True)
    out, cache = forward(mlp, np.array([[0.7]]))
    grads, _ = backward(mlp, cache, np.ones_like(out))
    assert grads.tensors[0][0, 0] == pytest.approx(0.7 * (1 - np.tanh(0.7) ** 2), rel=1e-14)


def _least_squares(mlp, x, t):
    out, cache = forward(mlp, x)
    resid = out - t
    grads, _ = backward(mlp, cache, resid)
    return lambda: 0.5 * float(np.sum((mlp(x) - t) ** 2)), grads


def test_finite_difference_least_squares(rng):
    mlp = init_mlp([4, 9, 6, 3], rng, activate_last=False)
    x, t = rng.normal(size=(16, 4)), rng.normal(size=(16, 3))
    loss, grads = _least_squares(mlp, x, t)
    err = finite_difference_check(loss, mlp.parameters(), list(grads), probe_count=60, rng=rng)
    assert err < 1e-7


def test_fd_checker_detects_wrong_gradient(rng):
    mlp = init_mlp([2, 3, 1], rng, activate_last=False)
    x, t = rng.normal(size=(5, 2)), rng.normal(size=(5, 1))
    loss, grads = _least_squares(mlp, x, t)
    wrong = [2 * g + 0.1 for g in grads]
    assert finite_difference_check(loss, mlp.parameters(), wrong, rng=rng) > 0.1


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_gradients_are_additive_over_the_batch(seed):
    r = np.random.default_rng(seed)
    mlp = init_mlp([3, 5, 2], r)
    x = r.normal(size=(8, 3))
    g = r.normal(size=(8, 2))
    out, cache = forward(mlp, x)
    full, _ = backward(mlp, cache, g)
    _, c1 = forward(mlp, x[:4])
    _, c2 = forward(mlp, x[4:])
    a, _ = backward(mlp, c1, g[:4])
    b, _ = backward(mlp, c2, g[4:])
    for f, u, v in zip(full, a, b):
        assert np.max(np.abs(f - (u + v))) < 1e-10


def test_adam_zero_gradient_leaves_params():
    p = [np.array([1.0, -2.0])]
    state = AdamState.for_params(p)
    adam_step(p, [np.zeros(2)], state)
    np.testing.assert_array_equal(p[0], [1.0, -2.0])
    assert state.step == 1


def test_adam_first_step_is_lr_times_sign():
    p = [np.array([0.0, 0.0, 0.0])]
    state = AdamState.for_params(p, lr=0.01)
    g = np.array([3.0, -0.5, 1e-3])
    adam_step(p, [g], state)
    # bias-corrected first step: -lr * g / (|g| + eps), close to -lr * sign(g)
    np.testing.assert_allclose(p[0], -0.01 * g / (np.abs(g) + 1e-8), rtol=1e-12)
    np.testing.assert_allclose(p[0], [-0.01, 0.01, -0.01], rtol=1e-4)


def test_adam_minimises_quadratic_bowl():
    p = [np.array([3.0, -4.0])]
    state = AdamState.for_params(p, lr=0.05)
    for _ in range(2000):
        adam_step(p, [2 * p[0]], state)
    assert np.max(np.abs(p[0])) < 1e-3


def test_adam_descends_monotonically_on_unit_bowl():
    w = [np.array([1.0])]
    state = AdamState.for_params(w, lr=0.01)
    path = [1.0]
    for _ in range(100):
        adam_step(w, [2 * w[0]], state)
        path.append(abs(float(w[0][0])))
    assert all(b < a for a, b in zip(path, path[1:]))


def test_adam_rejects_non_finite_and_mismatch():
    p = [np.zeros(2)]
    state = AdamState.for_params(p)
    with pytest.raises(NumericError):
        adam_step(p, [np.array([np.nan, 0.0])], state)
    with pytest.raises(DataError):
        adam_step(p, [np.zeros(3)], state)


def test_adam_clip_norm():
    p = [np.zeros(2)]
    state = AdamState.for_params(p, lr=1.0)
    adam_step(p, [np.array([300.0, 400.0])], state, clip_norm=5.0)
    # clipping rescales without changing direction; Adam then normalises per coordinate
    np.testing.assert_allclose(p[0], [-1.0, -1.0], rtol=1e-6)


def test_tensor_file_round_trip(tmp_path, rng):
    tensors = {"enc.W0": rng.normal(size=(13, 7)), "enc.b0": rng.normal(size=13), "s": np.array(2.5)}
    save_tensors(tmp_path / "m.bin", tensors)
    raw = (tmp_path / "m.bin").read_bytes()
    assert raw[:8] == b"DAVIDTNS"
    back = load_tensors(tmp_path / "m.bin")
    assert list(back) == list(tensors)
    for k in tensors:
        np.testing.assert_array_equal(back[k], tensors[k])


def test_tensor_file_bad_magic(tmp_path):
    (tmp_path / "x.bin").write_bytes(b"NOTATENSORFILE")
    with pytest.raises(DataError, match="magic"):
        load_tensors(tmp_path / "x.bin")
