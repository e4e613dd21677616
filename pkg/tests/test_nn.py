"""Layer primitives, optimizer math, checkpoints, seeded rng."""

import numpy as np
import pytest
from scipy.signal import correlate2d

from brushwork.errors import (
    CorruptionError,
    FormatError,
    PreconditionError,
    ShapeError,
    StateError,
    VersionError,
)
from brushwork.nn import (
    Conv2d,
    Dense,
    GlobalAvgPool,
    MaxPool2d,
    Parameter,
    ReLU,
    Sequential,
    content_hash,
    layer_from_spec,
    load_checkpoint,
    make_rng,
    save_checkpoint,
    sgd_step,
    softmax,
    softmax_cross_entropy,
    softmax_cross_entropy_grad,
    spawn_rng,
)
from brushwork.nn.functional import (
    conv2d,
    conv_geometry,
    global_avg_pool,
    maxpool2d_with_argmax,
)


# -- convolution ---------------------------------------------------------------


def test_conv_geometry_same_and_valid():
    # same: output = ceil(n / stride)
    assert conv_geometry(7, 7, 3, 2, "same")[:2] == (4, 4)
    assert conv_geometry(8, 6, 3, 1, "same")[:2] == (8, 6)
    # valid: output = floor((n - k) / stride) + 1
    assert conv_geometry(7, 7, 3, 2, "valid")[:2] == (3, 3)
    with pytest.raises(ShapeError):
        conv_geometry(2, 2, 3, 1, "valid")
    with pytest.raises(PreconditionError):
        conv_geometry(4, 4, 2, 1, "reflect")


def test_conv2d_matches_scipy_correlate():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 9, 8, 3))
    w = rng.standard_normal((3, 3, 3, 4))
    b = rng.standard_normal(4)
    out = conv2d(x, w, b, stride=1, padding="valid")
    assert out.shape == (2, 7, 6, 4)
    # cross-correlation, summed over input channels
    for n in range(2):
        for k in range(4):
            want = sum(correlate2d(x[n, :, :, c], w[:, :, c, k], mode="valid")
                       for c in range(3)) + b[k]
            np.testing.assert_allclose(out[n, :, :, k], want, atol=1e-10)


def test_conv2d_same_stride1_matches_padded_valid():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((1, 6, 6, 2))
    w = rng.standard_normal((3, 3, 2, 2))
    b = np.zeros(2)
    out = conv2d(x, w, b, stride=1, padding="same")
    padded = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    want = conv2d(padded, w, b, stride=1, padding="valid")
    np.testing.assert_allclose(out, want, atol=1e-12)


def test_conv2d_preserves_dtype():
    x32 = np.zeros((1, 5, 5, 1), dtype=np.float32)
    x64 = np.zeros((1, 5, 5, 1), dtype=np.float64)
    w64 = np.zeros((3, 3, 1, 2))
    b64 = np.zeros(2)
    assert conv2d(x32, w64.astype(np.float32), b64.astype(np.float32), 1, "same").dtype == np.float32
    assert conv2d(x64, w64, b64, 1, "same").dtype == np.float64


# -- pooling ----------------------------------------------------------------


def test_maxpool_ceil_mode_with_partial_window():
    x = np.arange(25, dtype=np.float64).reshape(1, 5, 5, 1)
    out, argmax = maxpool2d_with_argmax(x, size=2, stride=2)
    assert out.shape == (1, 3, 3, 1)
    np.testing.assert_array_equal(
        out[0, :, :, 0], [[6, 8, 9], [16, 18, 19], [21, 23, 24]])


def test_maxpool_routes_gradient_to_argmax():
    x = np.array([[1.0, 5.0], [3.0, 2.0]]).reshape(1, 2, 2, 1)
    layer = MaxPool2d(2, 2)
    out = layer.forward(x, train=True)
    assert out[0, 0, 0, 0] == 5.0
    dx = layer.backward(np.ones((1, 1, 1, 1)))
    np.testing.assert_array_equal(dx[0, :, :, 0], [[0, 1], [0, 0]])


def test_global_avg_pool():
    x = np.arange(8, dtype=np.float64).reshape(1, 2, 2, 2)
    out = global_avg_pool(x)
    np.testing.assert_allclose(out, [[(0 + 2 + 4 + 6) / 4, (1 + 3 + 5 + 7) / 4]])


# -- dense / activations -------------------------------------------------------


def test_dense_forward_oracle():
    layer = Dense(3, 2)
    layer.weights.value = np.array([[1, 0], [0, 1], [1, 1]], dtype=np.float32)
    layer.bias.value = np.array([0.5, -0.5], dtype=np.float32)
    out = layer.forward(np.array([[1.0, 2.0, 3.0]], dtype=np.float32))
    np.testing.assert_allclose(out, [[4.5, 4.5]])


def test_relu_zeroes_negatives():
    layer = ReLU()
    x = np.array([[-1.0, 0.0, 2.0]])
    np.testing.assert_array_equal(layer.forward(x), [[0.0, 0.0, 2.0]])


def test_backward_without_train_forward_raises():
    layer = ReLU()
    layer.forward(np.ones((1, 3)))  # inference call caches nothing
    with pytest.raises(StateError):
        layer.backward(np.ones((1, 3)))


def test_frozen_forward_is_reentrant():
    # train=False must not mutate layer state, so concurrent scoring is safe
    layer = Dense(4, 2, rng=make_rng(0))
    x = np.ones((2, 4), dtype=np.float32)
    a = layer.forward(x)
    b = layer.forward(x)
    np.testing.assert_array_equal(a, b)
    assert layer._cache is None


# -- softmax cross-entropy -------------------------------------------------------


def test_softmax_stable_for_large_logits():
    logits = np.array([[1000.0, 1000.0], [-1000.0, 1000.0]])
    p = softmax(logits)
    assert np.isfinite(p).all()
    np.testing.assert_allclose(p[0], [0.5, 0.5])
    np.testing.assert_allclose(p[1], [0.0, 1.0], atol=1e-12)


def test_cross_entropy_matches_manual():
    logits = np.array([[2.0, 1.0], [0.5, 3.0]])
    labels = np.array([0, 1])
    p = softmax(logits)
    want = -np.mean([np.log(p[0, 0]), np.log(p[1, 1])])
    assert softmax_cross_entropy(logits, labels) == pytest.approx(want, rel=1e-12)
    loss, dlogits = softmax_cross_entropy_grad(logits, labels)
    assert loss == pytest.approx(want, rel=1e-12)
    onehot = np.eye(2)[labels]
    np.testing.assert_allclose(dlogits, (p - onehot) / 2, atol=1e-12)


# -- optimizer -------------------------------------------------------------


def test_sgd_momentum_two_step_oracle():
    p = Parameter(np.array([1.0], dtype=np.float32))
    p.grad = np.array([0.5], dtype=np.float32)
    sgd_step([p], lr=0.1, momentum=0.9)
    # buffer = 0.5; value = 1 - 0.05; grad zeroed
    assert p.value[0] == pytest.approx(0.95)
    assert p.grad[0] == 0.0
    p.grad = np.array([1.0], dtype=np.float32)
    sgd_step([p], lr=0.1, momentum=0.9)
    # buffer = 0.9*0.5 + 1.0 = 1.45; value = 0.95 - 0.145
    assert p.value[0] == pytest.approx(0.95 - 0.145)


def test_sgd_validates_hyperparameters():
    p = Parameter(np.zeros(1, dtype=np.float32))
    with pytest.raises(PreconditionError):
        sgd_step([p], lr=-1.0)
    with pytest.raises(PreconditionError):
        sgd_step([p], lr=0.1, momentum=1.0)


# -- rng -------------------------------------------------------------------


def test_rng_is_philox_and_deterministic():
    rng = make_rng(7)
    assert type(rng.bit_generator).__name__ == "Philox"
    a = make_rng(7).standard_normal(5)
    b = make_rng(7).standard_normal(5)
    np.testing.assert_array_equal(a, b)


def test_spawned_streams_are_independent():
    a = spawn_rng(7, 0).standard_normal(100)
    b = spawn_rng(7, 1).standard_normal(100)
    assert not np.array_equal(a, b)
    np.testing.assert_array_equal(a, spawn_rng(7, 0).standard_normal(100))


# -- persistence -----------------------------------------------------------


def _toy_payload():
    rng = np.random.default_rng(3)
    meta = {"kind": "test", "layers": [{"kind": "dense", "n_in": 3, "n_out": 2}]}
    params = [rng.standard_normal((3, 2)).astype(np.float32),
              rng.standard_normal(2).astype(np.float32)]
    return meta, params


def test_checkpoint_round_trip_bit_exact(tmp_path):
    meta, params = _toy_payload()
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, meta, params)
    meta2, params2 = load_checkpoint(path)
    assert meta2 == meta
    for a, b in zip(params, params2):
        assert a.dtype == b.dtype == np.float32
        np.testing.assert_array_equal(a, b)
    # identical payload -> identical file bytes and hash
    path2 = tmp_path / "model2.ckpt"
    save_checkpoint(path2, meta, params)
    assert path.read_bytes() == path2.read_bytes()
    assert content_hash(meta, params) == content_hash(meta2, params2)


def test_checkpoint_rejects_bad_magic(tmp_path):
    meta, params = _toy_payload()
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, meta, params)
    raw = bytearray(path.read_bytes())
    raw[0:4] = b"XXXX"
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        load_checkpoint(path)


def test_checkpoint_rejects_bad_version(tmp_path):
    meta, params = _toy_payload()
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, meta, params)
    raw = bytearray(path.read_bytes())
    raw[4] = 99
    path.write_bytes(bytes(raw))
    with pytest.raises(VersionError):
        load_checkpoint(path)


def test_checkpoint_rejects_truncation(tmp_path):
    meta, params = _toy_payload()
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, meta, params)
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) - 3])
    with pytest.raises(CorruptionError):
        load_checkpoint(path)


def test_checkpoint_rejects_trailing_bytes(tmp_path):
    meta, params = _toy_payload()
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, meta, params)
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(CorruptionError):
        load_checkpoint(path)


# -- spec-table round trip ----------------------------------------------------


def test_layer_from_spec_round_trip():
    rng = make_rng(0)
    stack = Sequential([Conv2d(2, 3, kernel=3, stride=2, padding="same", rng=rng),
                        ReLU(), MaxPool2d(2, 2), GlobalAvgPool(), Dense(3, 4, rng=rng)])
    rebuilt = Sequential.from_spec_table(stack.spec_table())
    assert rebuilt.spec_table() == stack.spec_table()
    assert [p.shape for p in rebuilt.params] == [p.shape for p in stack.params]
    with pytest.raises(ShapeError):
        layer_from_spec({"kind": "dropout"})
