import numpy as np
import pytest

from eeprnet import ndgrad as nd
from eeprnet.landmarks import TEMPLATE
from eeprnet.nets import (
    BackboneConfig,
    EePrNet,
    FerNet,
    RoiLaNet,
    UnknownBlockError,
    batch56,
    load_network,
    resize,
    save_network,
)
from eeprnet.ndgrad import RngState, Tensor

SMALL = BackboneConfig((4, 6, 8))


def test_localizer_output_range_and_shape(rng):
    net = RoiLaNet(SMALL)
    out = net.localize(Tensor(rng.normal(size=(3, 3, 56, 56)).astype(np.float32)))
    assert out.shape == (3, 18)
    assert np.abs(out.data).max() < 1.0
    with pytest.raises(nd.DimensionError):
        net.localize(Tensor(np.zeros((1, 3, 64, 64), np.float32)))


def test_fernet_shapes():
    net = FerNet(5, SMALL, h_roi=32)
    desc, logits = net.forward(Tensor(np.zeros((2, 3, 32, 32), np.float32)))
    assert desc.shape == (2, 512) and logits.shape == (2, 5)
    with pytest.raises(ValueError):
        FerNet(5, SMALL, h_roi=30)


def test_blocks_partition_parameters():
    net = EePrNet(4, SMALL, h_roi=16)
    blocks = {p.block for p in net.params}
    assert blocks == {"A", "B", "C"}
    assert all(p.block == "A" for p in net.params if ".fc" in p.name and p.name.startswith("lanet"))
    assert all(p.block == "C" for p in net.params if p.name.startswith("fernet"))
    net.set_block_trainable("D", False)  # D is the fine-tuning alias of A
    assert not any(p.trainable for p in net.params if p.block == "A")
    with pytest.raises(UnknownBlockError):
        net.set_block_trainable("E", True)


def test_fc_init_variance():
    net = RoiLaNet(BackboneConfig((16, 32, 64)), seed=0)
    w = net.param("lanet.fc1.weight").data
    assert w.var() == pytest.approx(0.001, rel=0.02)


def test_frozen_blocks_receive_no_gradient(rng):
    net = EePrNet(3, SMALL, h_roi=16)
    net.set_block_trainable("B", False)
    net.set_block_trainable("A", False)
    imgs = [rng.uniform(0, 1, (40, 40, 3)).astype(np.float32) for _ in range(2)]
    _, _, _, logits = net.forward_end_to_end(imgs)
    nd.softmax_cross_entropy(logits, [0, 2]).backward()
    assert all(p.tensor.grad is None for p in net.params if p.block in "AB")
    assert all(p.tensor.grad is not None for p in net.params if p.block == "C")


def test_end_to_end_gradient_reaches_localizer_head(rng):
    net = EePrNet(3, SMALL, h_roi=16)
    imgs = [rng.uniform(0, 1, (40, 40, 3)).astype(np.float32) for _ in range(2)]
    _, roi, _, logits = net.forward_end_to_end(imgs)
    assert roi.shape == (2, 3, 16, 16)
    nd.softmax_cross_entropy(logits, [0, 1]).backward()
    g = net.param("lanet.fc3.weight").tensor.grad
    assert g is not None and np.abs(g).sum() > 0


def test_dropout_makes_rois_stochastic(rng):
    net = EePrNet(3, SMALL, h_roi=16)
    imgs = [rng.uniform(0, 1, (40, 40, 3)).astype(np.float32)]
    x56 = batch56(imgs, net.mean_rgb)
    net.set_training(dropout_lanet=True, training_fernet=False)
    a = net.lanet.localize(x56, RngState(0)).data
    b = net.lanet.localize(x56, RngState(1)).data
    assert not np.array_equal(a, b)
    net.set_training(False, False)
    np.testing.assert_array_equal(net.lanet.localize(x56).data, net.lanet.localize(x56).data)


def test_save_load_round_trip(tmp_path):
    net = EePrNet(3, SMALL, h_roi=16, seed=4, mean_rgb=(0.1, 0.2, 0.3))
    net.classes = np.array([5, 7, 9])
    net.input_mode = "hand"
    save_network(tmp_path / "m.palmw", net, net.arch())
    back, arch = load_network(tmp_path / "m.palmw")
    assert arch["kind"] == "eeprnet" and back.input_mode == "hand"
    np.testing.assert_array_equal(back.classes, [5, 7, 9])
    for k, v in net.state_dict().items():
        np.testing.assert_array_equal(back.state_dict()[k], v)
    np.testing.assert_allclose(back.mean_rgb, [0.1, 0.2, 0.3], atol=1e-7)


def test_load_state_dict_shape_mismatch():
    a = RoiLaNet(SMALL)
    b = RoiLaNet(BackboneConfig((4, 6, 10)))
    with pytest.raises(nd.DimensionError):
        a.load_state_dict(b.state_dict())


def test_resize_keeps_range():
    img = np.random.default_rng(0).uniform(0, 1, (100, 100, 3)).astype(np.float32)
    out = resize(img, 56)
    assert out.shape == (56, 56, 3) and out.min() >= 0 and out.max() <= 1
    assert TEMPLATE.shape == (9, 2)
