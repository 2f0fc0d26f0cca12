import numpy as np
import pytest

from eeprnet import ndgrad as nd
from eeprnet.gradsuite import CASES, run_suite
from eeprnet.ndgrad import Parameter, RngState, Tensor


def test_backward_accumulates_over_shared_subgraph():
    x = Tensor(np.array([1.5, -2.0]), requires_grad=True)
    y = nd.add(nd.mul(x, x), x)  # x^2 + x
    nd.total(y).backward()
    np.testing.assert_allclose(x.grad, 2 * x.data + 1)


def test_no_graph_without_requires_grad():
    a = Tensor(np.ones((2, 2)))
    out = nd.relu(a)
    assert out._backward is None and not out.requires_grad


def test_precision_context_restores_default():
    assert nd.default_dtype() == np.float32
    with nd.precision("float64"):
        assert nd.as_tensor([1, 2]).dtype == np.float64
    assert nd.as_tensor([1, 2]).dtype == np.float32
    with pytest.raises(ValueError):
        with nd.precision("float16"):
            pass


def test_conv_matches_direct_loop(rng):
    x = rng.normal(size=(2, 3, 6, 5))
    w = rng.normal(size=(4, 3, 3, 3))
    b = rng.normal(size=4)
    out = nd.conv2d(Tensor(x), Tensor(w), Tensor(b), stride=2, pad=1).data
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    ref = np.zeros_like(out)
    for n in range(2):
        for o in range(4):
            for i in range(out.shape[2]):
                for j in range(out.shape[3]):
                    ref[n, o, i, j] = (xp[n, :, 2 * i : 2 * i + 3, 2 * j : 2 * j + 3] * w[o]).sum() + b[o]
    np.testing.assert_allclose(out, ref, atol=1e-10)


def test_conv_shape_errors():
    x = Tensor(np.zeros((1, 3, 4, 4)))
    with pytest.raises(nd.DimensionError, match="axis 1"):
        nd.conv2d(x, Tensor(np.zeros((2, 2, 3, 3))), Tensor(np.zeros(2)))
    with pytest.raises(nd.DimensionError):
        nd.conv2d(Tensor(np.zeros((3, 4, 4))), Tensor(np.zeros((2, 3, 3, 3))), Tensor(np.zeros(2)))


def test_maxpool_tie_routes_to_first():
    x = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
    nd.total(nd.maxpool2(x)).backward()
    np.testing.assert_array_equal(x.grad[0, 0], [[1, 0], [0, 0]])
    with pytest.raises(nd.DimensionError):
        nd.maxpool2(Tensor(np.ones((1, 1, 3, 2))))


def test_channel_l2_normalize_unit_norm(rng):
    y = nd.channel_l2_normalize(Tensor(rng.normal(size=(2, 5, 3, 3)))).data
    np.testing.assert_allclose((y**2).sum(axis=1), 1.0, atol=1e-6)


def test_softmax_cross_entropy_matches_manual(rng):
    logits = rng.normal(size=(4, 3))
    labels = np.array([0, 2, 1, 1])
    p = np.exp(logits) / np.exp(logits).sum(1, keepdims=True)
    ref = -np.log(p[np.arange(4), labels]).mean()
    assert float(nd.softmax_cross_entropy(Tensor(logits), labels).data) == pytest.approx(ref, rel=1e-12)
    with pytest.raises(nd.ParameterError):
        nd.softmax_cross_entropy(Tensor(logits), np.array([0, 3, 1, 1]))


def test_dropout_semantics():
    x = Tensor(np.ones((50, 40)))
    assert nd.dropout(x, 0.5, train=False) is x
    assert nd.dropout(x, 0.0, train=True, rng=RngState(0)) is x
    y = nd.dropout(x, 0.5, train=True, rng=RngState(0)).data
    assert set(np.unique(y)) <= {0.0, 2.0}
    np.testing.assert_array_equal(y, nd.dropout(x, 0.5, train=True, rng=RngState(0)).data)
    for bad in (-0.1, 1.0):
        with pytest.raises(nd.ParameterError):
            nd.dropout(x, bad, train=True, rng=RngState(0))
    with pytest.raises(nd.ParameterError):
        nd.dropout(x, 0.5, train=True)


def test_rng_streams_do_not_overlap():
    r = RngState(5)
    a = r.generator().random(8)
    b = r.generator().random(8)
    assert not np.allclose(a, b)
    np.testing.assert_array_equal(a, RngState(5).generator().random(8))
    assert nd.derive_seed(1, "x", 2) == nd.derive_seed(1, "x", 2) != nd.derive_seed(1, "x", 3)


def test_adam_first_step_is_lr_times_sign():
    p = Parameter("w", Tensor(np.array([1.0, -1.0, 0.5]), requires_grad=True), "C")
    p.tensor.grad = np.array([0.3, -2.0, 0.0])
    nd.adam_step([p], nd.AdamState(), lr=0.1)
    np.testing.assert_allclose(p.data, [0.9, -0.9, 0.5], atol=1e-6)


def test_adam_skips_frozen_and_uses_block_rates():
    a = Parameter("a", Tensor(np.zeros(2), requires_grad=True), "A")
    c = Parameter("c", Tensor(np.zeros(2), requires_grad=True), "C")
    f = Parameter("f", Tensor(np.zeros(2), requires_grad=True), "B", trainable=False)
    for p in (a, c, f):
        p.tensor.grad = np.ones(2)
    state = nd.AdamState()
    nd.adam_step([a, c, f], state, lr={"A": 0.01, "C": 0.1})
    np.testing.assert_allclose(a.data, -0.01, atol=1e-7)
    np.testing.assert_allclose(c.data, -0.1, atol=1e-7)
    np.testing.assert_array_equal(f.data, 0.0)
    assert "f" not in state.m


def test_weights_round_trip(tmp_path, rng):
    tensors = {"a": rng.normal(size=(2, 3)).astype(np.float32), "b": np.arange(4, dtype=np.float32)}
    nd.save_weights(tmp_path / "w.palmw", tensors, {"kind": "x", "n": 3})
    back, arch = nd.load_weights(tmp_path / "w.palmw")
    assert arch == {"kind": "x", "n": 3}
    for k in tensors:
        np.testing.assert_array_equal(back[k], tensors[k])
    raw = (tmp_path / "w.palmw").read_bytes()
    assert raw.startswith(b"PALMW1\n")


def test_weights_rejects_bad_files(tmp_path):
    (tmp_path / "bad").write_bytes(b"NOPE")
    with pytest.raises(nd.WeightsFormatError):
        nd.load_weights(tmp_path / "bad")
    nd.save_weights(tmp_path / "ok", {"a": np.ones(10, np.float32)})
    raw = (tmp_path / "ok").read_bytes()
    (tmp_path / "cut").write_bytes(raw[:-8])
    with pytest.raises(nd.WeightsFormatError):
        nd.load_weights(tmp_path / "cut")


def test_gradsuite_quick_pass():
    results = run_suite(instances=2, seed=7)
    assert {r.name for r in results} == set(CASES)
    assert all(r.passed for r in results), [(r.name, r.worst) for r in results if not r.passed]


def test_gradsuite_catches_sign_flip_in_conv_backward(monkeypatch):
    real = nd.ops.conv2d

    def flipped(x, w, b, stride=1, pad=0):
        out = real(x, w, b, stride, pad)
        bw = out._backward
        out._backward = lambda g: tuple(None if t is None else -t for t in bw(g))
        return out

    monkeypatch.setattr(nd.ops, "conv2d", flipped)
    (result,) = run_suite(instances=1, names={"conv2d"})
    assert not result.passed
