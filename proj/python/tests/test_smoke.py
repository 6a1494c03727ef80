# Copyright (c) 2026 The MMViT Kit Authors. All Rights Reserved.
# Licensed under the Apache License, Version 2.0.

import numpy as np
import pytest

import mmvit


def small_config():
    return mmvit.Config.from_overrides("tiny", ["model.num_classes=3"])


def test_audio_schedule():
    layers = mmvit.schedule(mmvit.Config.preset("audio"))
    assert len(layers) == 16
    kinds = {l["index"]: l["kind"] for l in layers}
    assert [i for i, k in kinds.items() if k == "cross"] == [1, 3, 14]
    assert [i for i, k in kinds.items() if k == "scaled"] == [2, 4, 15]
    assert layers[0]["grids"][0] == (512, 64)
    assert sum(l["params"] for l in layers) < mmvit.count_params(mmvit.Config.preset("audio"))


def test_forward_and_checkpoint(tmp_path):
    cfg = small_config()
    model = mmvit.Model(cfg, seed=3)
    x = np.random.default_rng(0).standard_normal((1, 64, 32)).astype(np.float32)
    a = model.forward(x)
    assert a.shape == (3,)
    np.testing.assert_array_equal(a, model.forward(x))
    path = tmp_path / "m.ckpt"
    model.save(path)
    params, fp = mmvit.load_checkpoint(path)
    assert fp == cfg.fingerprint()
    np.testing.assert_array_equal(mmvit.Model(cfg, params).forward(x), a)


def test_errors_map_to_python():
    with pytest.raises(mmvit.ConfigError):
        mmvit.Config.from_overrides("tiny", ["model.nope=1"])
    with pytest.raises(mmvit.Error):
        mmvit.load_checkpoint("/nonexistent/file.ckpt")
    with pytest.raises(mmvit.Error):
        mmvit.Model(small_config()).forward(np.zeros((1, 10, 10), np.float32))


def test_augment_and_metrics():
    frames = np.arange(10, dtype=np.float32).reshape(1, 10, 1)
    rolled = mmvit.augment.roll(frames, 3)
    assert rolled[0, :, 0].tolist() == [7, 8, 9, 0, 1, 2, 3, 4, 5, 6]
    a, b = np.zeros((1, 10, 2), np.float32), np.ones((1, 10, 2), np.float32)
    mixed, label = mmvit.augment.cutmix(a, [1, 0], b, [0, 1], 0.6, 3)
    assert mixed[0, :, 0].tolist() == [0, 0, 0, 1, 1, 1, 1, 0, 0, 0]
    assert label == pytest.approx([0.6, 0.4])
    assert mmvit.metrics.average_precision([0.9, 0.8, 0.7], [1, 0, 1]) == pytest.approx(5 / 6)
    assert mmvit.metrics.top1_accuracy(np.eye(3), [0, 1, 2]) == 1.0


def test_fbank_shape():
    t = np.arange(16000) / 16000.0
    spec = mmvit.logmel_fbank(np.sin(2 * np.pi * 1000 * t).astype(np.float32))
    assert spec.shape == (1, 98, 128)
    assert np.isfinite(spec).all()
