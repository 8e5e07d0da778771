import numpy as np
import pytest

import ishm


def test_generate_shapes_and_determinism():
    cfg = ishm.GenConfig(3)
    a = ishm.generate(cfg, 50, seed=7)
    b = ishm.generate(cfg, 50, seed=7, threads=1)
    assert len(a) == 50
    assert a.signals.shape == (50, cfg.n_channels, 200)
    assert a.labels.dtype == np.bool_
    assert a.hash() == b.hash()
    np.testing.assert_array_equal(a.signals, b.signals)


def test_anomaly_metadata_matches_labels():
    ds = ishm.generate(ishm.GenConfig(1), 200, seed=1)
    for i, label in enumerate(ds.labels):
        meta = ds.anomaly(i)
        assert (meta is not None) == bool(label)
        if meta is not None:
            assert meta["kind"] in ("spike", "local_deviation")


def test_dataset_round_trip(tmp_path):
    ds = ishm.generate(ishm.GenConfig(2), 20, seed=3)
    ishm.save_dataset(ds, tmp_path / "d")
    back = ishm.load_dataset(tmp_path / "d")
    assert back.hash() == ds.hash()
    with pytest.raises(ishm.IoError):
        ishm.load_dataset(tmp_path / "missing")


def test_invalid_config_raises():
    cfg = ishm.GenConfig(6)
    cfg.spike_channel_probs = [0.5, 0.5]
    with pytest.raises(ishm.InvalidConfig):
        ishm.generate(cfg, 10, seed=0)
    with pytest.raises(ishm.IshmError):
        ishm.GenConfig(9)


def test_auc_and_drop_table():
    assert ishm.auc([0.9, 0.8, 0.2, 0.1], [True, True, False, False]) == 1.0
    with pytest.raises(ishm.UndefinedMetric):
        ishm.auc([0.1, 0.2], [True, True])
    rows = ishm.drop_table({1: 0.992, 2: 0.988, 3: 0.989})
    assert [r["text"] for r in rows] == ["", "(-0.004)", "(--)"]


def test_train_score_save_load(tmp_path):
    ds = ishm.generate(ishm.GenConfig(1), 300, seed=4)
    cfg = ishm.AttnConfig()
    cfg.d_model, cfg.n_heads, cfg.n_layers, cfg.epochs = 8, 2, 1, 2
    model, loss = ishm.train_attn(ds, cfg)
    assert len(loss) == 2
    scores = model.score(ds, "combined")
    assert scores.shape == (300,) and np.all(np.isfinite(scores))
    model.save(tmp_path / "m")
    again = ishm.load_model(tmp_path / "m")
    np.testing.assert_array_equal(again.score(ds, "combined"), scores)
    with pytest.raises(ishm.InvalidConfig):
        model.score(ds, "bogus")

    ccfg = ishm.CnnConfig()
    ccfg.channels1, ccfg.channels2, ccfg.epochs = 4, 4, 1
    cnn, _ = ishm.train_cnn(ds, ccfg)
    assert model.kind == "attn" and cnn.kind == "cnnae"
    assert np.all(np.isfinite(cnn.score(ds, "recon")))
