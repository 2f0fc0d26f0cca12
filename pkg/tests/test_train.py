import numpy as np
import pytest

from eeprnet.train import (
    PreconditionError,
    StrategyConfig,
    TrainRunLog,
    describe,
    stage1_train_localizer,
    train_strategy,
)

SMALL = (4, 6, 8)


def test_s1_schedule():
    cfg = StrategyConfig("S1", epochs=40)
    assert not any(cfg.tunes_d(e) or cfg.dropout_on(e) for e in range(1, 41))
    assert all(cfg.augmentations(e) == ("ct",) for e in range(1, 41))


def test_s5_schedule():
    cfg = StrategyConfig("S5", epochs=40)
    assert [e for e in range(1, 41) if cfg.tunes_d(e)] == list(range(21, 41))
    assert [e for e in range(1, 41) if cfg.dropout_on(e)] == list(range(1, 36))


@pytest.mark.parametrize("s,d,drop", [("S2", False, True), ("S3", True, False), ("S4", True, True)])
def test_middle_strategies(s, d, drop):
    cfg = StrategyConfig(s, epochs=40)
    assert cfg.tunes_d(30) is d and not cfg.tunes_d(20)
    assert cfg.dropout_on(39) is drop


def test_final_recipe_schedule():
    cfg = StrategyConfig.final()
    assert cfg.epochs == 60
    assert cfg.augmentations(40) == ("ct",)
    assert cfg.augmentations(41) == ("at", "ct")
    gray = StrategyConfig.final(grayscale=True)
    assert gray.augmentations(1) == ("at",)


def test_config_validation():
    with pytest.raises(PreconditionError):
        StrategyConfig("S5", epochs=30)
    with pytest.raises(PreconditionError):
        StrategyConfig("S9")
    assert StrategyConfig("S0nct").augmentations(1) == ()


def test_config_hash_changes_with_fields():
    assert StrategyConfig("S1").config_hash() != StrategyConfig("S1", seed=1).config_hash()
    assert StrategyConfig("S1").config_hash() == StrategyConfig("S1").config_hash()


def test_run_log_contiguity(tmp_path):
    log = TrainRunLog(0, "h")
    log.add(1, 0.5, 0.1, 1.0)
    with pytest.raises(ValueError):
        log.add(3, 0.5, 0.1, 1.0)
    log.to_csv(tmp_path / "log.csv")
    assert (tmp_path / "log.csv").read_text().splitlines()[0] == "epoch,loss,metric,seconds"


def test_stage1_head_only_phase_freezes_backbone(tiny_dataset):
    from eeprnet.nets import BackboneConfig, RoiLaNet

    net0 = RoiLaNet(BackboneConfig(SMALL), 0)
    net, log, _ = stage1_train_localizer(tiny_dataset, epochs_a=2, epochs_ab=0, widths=SMALL, batch_size=16)
    assert len(log.rows) == 2
    for p0, p in zip(net0.params, net.params):
        if p.block == "B":
            np.testing.assert_array_equal(p0.data, p.data)
        else:
            assert not np.array_equal(p0.data, p.data)


def test_stage1_joint_only_updates_backbone(tiny_dataset):
    from eeprnet.nets import BackboneConfig, RoiLaNet

    net0 = RoiLaNet(BackboneConfig(SMALL), 0)
    net, log, final = stage1_train_localizer(tiny_dataset, epochs_a=0, epochs_ab=1, widths=SMALL, batch_size=16)
    changed = {p.block for p0, p in zip(net0.params, net.params) if not np.array_equal(p0.data, p.data)}
    assert changed == {"A", "B"}
    assert np.isfinite(final) and log.initial_metric is not None


def test_stage1_requires_landmarks(tiny_dataset):
    ds = tiny_dataset.subset(np.arange(3))
    ds.landmarks = ds.landmarks * np.nan
    with pytest.raises(PreconditionError):
        stage1_train_localizer(ds, epochs_a=1, epochs_ab=0, widths=SMALL)


@pytest.fixture(scope="module")
def tiny_localizer(tiny_dataset):
    net, _, _ = stage1_train_localizer(tiny_dataset, epochs_a=1, epochs_ab=0, widths=SMALL, batch_size=16)
    return net


def test_end_to_end_needs_localizer(tiny_dataset):
    with pytest.raises(PreconditionError):
        train_strategy(StrategyConfig("S1", epochs=1, widths=SMALL, h_roi=16), tiny_dataset)


def _weights(net):
    return {k: v.copy() for k, v in net.state_dict().items()}


def test_block_freezing_by_strategy(tiny_dataset, tiny_localizer):
    base = _weights(tiny_localizer)
    for strategy, d_moves in (("S1", False), ("S3", True)):
        cfg = StrategyConfig(strategy, epochs=2, d_start=1, widths=SMALL, h_roi=16, batch_size=8)
        net, log = train_strategy(cfg, tiny_dataset, tiny_localizer)
        after = net.lanet.state_dict()
        head_moved = any(not np.array_equal(after[k], base[k]) for k in base if ".fc" in k)
        backbone_moved = any(not np.array_equal(after[k], base[k]) for k in base if ".fc" not in k)
        assert head_moved is d_moves
        assert not backbone_moved
        assert len(log.rows) == 2


def test_training_is_deterministic(tiny_dataset, tiny_localizer):
    cfg = StrategyConfig("S5", epochs=2, dropout_switch=1, widths=SMALL, h_roi=16, batch_size=8)
    a, la = train_strategy(cfg, tiny_dataset, tiny_localizer)
    b, lb = train_strategy(cfg, tiny_dataset, tiny_localizer)
    for k, v in a.state_dict().items():
        np.testing.assert_array_equal(v, b.state_dict()[k])
    assert [r["loss"] for r in la.rows] == [r["loss"] for r in lb.rows]


def test_s0h_uses_whole_hand(tiny_dataset):
    cfg = StrategyConfig("S0h", epochs=1, widths=SMALL, h_roi=16, batch_size=8)
    net, _ = train_strategy(cfg, tiny_dataset)
    assert net.input_mode == "hand"
    desc, logits = describe(net, tiny_dataset.images[:4])
    assert desc.shape == (4, 512) and logits.shape == (4, len(np.unique(tiny_dataset.palm_ids)))
    assert np.isfinite(desc).all()
