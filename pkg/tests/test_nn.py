import numpy as np
import pytest

from src.nn.gradcheck import GradCheckResult, check_gradient
from src.nn.layers import (
    ShapeMismatchError,
    conv3x3,
    conv3x3_grad,
    cos_pi,
    cos_pi_grad,
    linear,
    linear_grad,
    relu,
    relu_grad,
    sin_pi,
    sin_pi_grad,
)
from src.nn.optim import AdamState, NonFiniteGradientError, adam_update
from src.nn.weights import (
    MAGIC,
    BadMagicError,
    DuplicateTensorError,
    TruncatedWeightsError,
    decode_weights,
    encode_weights,
    load_weights,
    save_weights,
)


def naive_conv(x, w, b):
    n, _, h, width = x.shape
    padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    out = np.zeros((n, w.shape[0], h, width))
    for i in range(h):
        for j in range(width):
            patch = padded[:, :, i : i + 3, j : j + 3]
            out[:, :, i, j] = np.einsum("ncij,ocij->no", patch, w) + b
    return out


def test_conv3x3_matches_direct_loop(rng):
    x = rng.normal(size=(2, 3, 5, 4))
    w = rng.normal(size=(6, 3, 3, 3))
    b = rng.normal(size=6)
    assert np.allclose(conv3x3(x, w, b), naive_conv(x, w, b))


def test_conv3x3_center_tap_is_identity(rng):
    x = rng.normal(size=(1, 2, 4, 4))
    w = np.zeros((2, 2, 3, 3))
    w[0, 0, 1, 1] = w[1, 1, 1, 1] = 1.0
    assert np.allclose(conv3x3(x, w, np.zeros(2)), x)


def test_conv3x3_on_single_pixel(rng):
    x = rng.normal(size=(1, 3, 1, 1))
    w = rng.normal(size=(4, 3, 3, 3))
    b = rng.normal(size=4)
    assert np.allclose(conv3x3(x, w, b)[0, :, 0, 0], w[:, :, 1, 1] @ x[0, :, 0, 0] + b)


def test_conv3x3_rejects_channel_mismatch():
    with pytest.raises(ShapeMismatchError):
        conv3x3(np.zeros((1, 2, 3, 3)), np.zeros((4, 3, 3, 3)), np.zeros(4))


def test_conv3x3_gradients(rng):
    x = rng.normal(size=(2, 2, 4, 3))
    w = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=3)
    r = rng.normal(size=(2, 3, 4, 3))
    dx, dw, db = conv3x3_grad(x, w, b, r)

    def objective():
        return float(np.sum(conv3x3(x, w, b) * r))

    for name, tensor, grad in (("x", x, dx), ("w", w, dw), ("b", b, db)):
        assert check_gradient(name, objective, tensor, grad).passed(1e-6)


def test_linear_gradients(rng):
    x = rng.normal(size=(5, 4))
    w = rng.normal(size=(3, 4))
    b = rng.normal(size=3)
    r = rng.normal(size=(5, 3))
    dx, dw, db = linear_grad(x, w, b, r)

    def objective():
        return float(np.sum(linear(x, w, b) * r))

    for name, tensor, grad in (("x", x, dx), ("w", w, dw), ("b", b, db)):
        assert check_gradient(name, objective, tensor, grad).passed(1e-6)


def test_linear_rejects_feature_mismatch():
    with pytest.raises(ShapeMismatchError):
        linear(np.zeros((2, 3)), np.zeros((4, 5)), np.zeros(4))


def test_relu_gradient_is_zero_at_zero():
    x = np.array([-1.0, 0.0, 2.0])
    assert np.array_equal(relu(x), [0.0, 0.0, 2.0])
    assert np.array_equal(relu_grad(x, np.ones(3)), [0.0, 0.0, 1.0])


def test_sinusoid_gradients(rng):
    x = rng.uniform(-2.0, 2.0, 10)
    up = np.ones(10)
    sin = check_gradient("sin", lambda: float(np.sum(sin_pi(x))), x, sin_pi_grad(x, up))
    cos = check_gradient("cos", lambda: float(np.sum(cos_pi(x))), x, cos_pi_grad(x, up))
    assert sin.passed(1e-7)
    assert cos.passed(1e-7)


def test_gradient_checker_flags_wrong_gradients(rng):
    x = rng.normal(size=6)
    result = check_gradient("cube", lambda: float(np.sum(x**3)), x, 3 * x**2)
    assert result.passed(1e-6) and result.checked == 6
    wrong = check_gradient("cube", lambda: float(np.sum(x**3)), x, 2 * x**2)
    assert not wrong.passed(1e-3)


def test_gradient_checker_skips_kinks():
    x = np.array([7e-6, 1.0, -1.0])
    grad = relu_grad(x, np.ones(3))
    result = check_gradient("relu", lambda: float(np.sum(relu(x))), x, grad)
    assert result.skipped == 1
    assert result.checked == 2
    assert result.passed(1e-8)


def test_combined_result_keeps_the_worst_error():
    combined = GradCheckResult.combine(
        "conv3x3",
        [
            GradCheckResult("a", 1e-9, 4, 0, 1e-6),
            GradCheckResult("b", 3e-7, 5, 1, 1e-6),
        ],
    )
    assert combined.max_rel_error == 3e-7
    assert (combined.checked, combined.skipped) == (9, 1)
    assert combined.passed()
    assert not combined.passed(1e-7)


def test_richardson_step_removes_truncation_error():
    x = np.array([0.3, -1.1])
    grad = sin_pi_grad(x, np.ones(2))
    result = check_gradient("sin", lambda: float(np.sum(sin_pi(x))), x, grad, h=1e-3)
    assert result.passed(1e-9)


def test_gradient_checker_needs_double_precision():
    with pytest.raises(TypeError):
        x = np.zeros(2, dtype=np.float32)
        check_gradient("x", lambda: 0.0, x, np.zeros(2))


def test_adam_first_step_moves_by_lr():
    params = {"p": np.array([1.0])}
    state = AdamState(lr=0.1)
    params = adam_update(params, {"p": np.array([0.5])}, state)
    assert state.step == 1
    assert params["p"][0] == pytest.approx(0.9, abs=1e-6)


def test_adam_ignores_zero_gradients():
    params = {"w": np.array([[0.5, -2.0], [3.0, 0.0]])}
    state = AdamState(lr=0.1)
    for _ in range(3):
        updated = adam_update(params, {"w": np.zeros((2, 2))}, state)
        assert np.array_equal(updated["w"], params["w"])
        params = updated


def test_adam_shrinks_p_squared():
    params = {"p": np.array([1.0])}
    state = AdamState(lr=0.1)
    for _ in range(100):
        params = adam_update(params, {"p": 2.0 * params["p"]}, state)
    assert abs(params["p"][0]) < 0.5


def test_adam_minimises_a_quadratic():
    params = {"p": np.zeros(3)}
    target = np.array([3.0, -1.0, 0.5])
    state = AdamState(lr=0.01)
    for _ in range(3000):
        params = adam_update(params, {"p": 2.0 * (params["p"] - target)}, state)
    assert np.allclose(params["p"], target, atol=0.05)


def test_adam_refuses_non_finite_gradients():
    params = {"p": np.ones(2)}
    state = AdamState()
    with pytest.raises(NonFiniteGradientError) as info:
        adam_update(params, {"p": np.array([1.0, np.nan])}, state)
    assert info.value.name == "p"
    assert state.step == 0


def test_weight_file_roundtrip(tmp_path, rng):
    weights = {
        "b.w": rng.normal(size=(2, 3)).astype(np.float32),
        "a": np.arange(4, dtype=np.float32),
    }
    path = str(tmp_path / "model.ltew")
    save_weights(weights, path)
    loaded = load_weights(path)
    assert list(loaded) == ["b.w", "a"]
    for name in weights:
        assert np.array_equal(loaded[name], weights[name])
    with open(path, "rb") as file:
        assert file.read(8) == MAGIC


def test_weight_file_errors():
    data = encode_weights({"w": np.ones((2, 2), dtype=np.float32)})
    assert decode_weights(MAGIC) == {}
    with pytest.raises(BadMagicError):
        decode_weights(b"NOTLTEW0" + data[8:])
    with pytest.raises(TruncatedWeightsError):
        decode_weights(data[:-3])
    with pytest.raises(DuplicateTensorError):
        decode_weights(data + data[8:])
