"""Smoke tests for the python bindings: shapes, ranges and a few exact values.
The exhaustive checks live in the C++ suites; these confirm the surface is
wired up and numpy round trips work.
"""

import math

import numpy as np
import pytest

import rosettegan as rg


def small_config(resolution=16):
    cfg = rg.TrainConfig()
    cfg.resolution = resolution
    cfg.z_dim = 8
    cfg.fc1_width = 16
    cfg.base_width = 4
    cfg.class_count = 3
    cfg.min_count = 3
    cfg.batch_size = 4
    return cfg


def test_make_condition_one_hot():
    hot = rg.make_condition(5, 3, 4)
    assert hot.tolist() == [0.0, 0.0, 1.0, 0.0]
    with pytest.raises(ValueError):
        rg.make_condition(7, 3, 4)  # exclusive upper bound


def test_spatial_replicate_planes():
    planes = rg.spatial_replicate(4, 3, 3, 2, 2)
    assert planes.shape == (3, 2, 2)
    assert planes[1].min() == planes[1].max() == 1.0
    assert planes[0].max() == 0.0


def test_gan_losses_fixed_point():
    half = np.full((4, 1), 0.5, dtype=np.float32)
    d_loss, g_loss = rg.gan_losses(half, half)
    assert abs(d_loss - 2 * math.log(2)) < 1e-6
    assert abs(g_loss - math.log(2)) < 1e-6


def test_generator_and_discriminator_shapes():
    cfg = small_config()
    gan = rg.Gan(cfg)
    z, counts = rg.sample_noise_and_condition(4, cfg, seed=7)
    assert z.shape == (4, 8)
    assert z.min() >= -1.0 and z.max() < 1.0
    images = gan.generate(z, counts)
    assert images.shape == (4, 3, 16, 16)
    assert images.min() >= -1.0 and images.max() <= 1.0
    probs = gan.discriminate(images, counts)
    assert probs.shape == (4, 1)
    assert 0.0 < probs.min() and probs.max() < 1.0


def test_train_step_and_checkpoint_roundtrip(tmp_path):
    cfg = small_config()
    gan = rg.Gan(cfg)
    images = np.stack([rg.synth_rosette(3 + i % 3, 16, seed=i) for i in range(4)])
    counts = [3 + i % 3 for i in range(4)]
    d_loss, g_loss = gan.train_step(images, counts)
    assert math.isfinite(d_loss) and math.isfinite(g_loss)

    path = tmp_path / "ckpt.bin"
    gan.save(str(path))
    back = rg.Gan.load(str(path))
    name = gan.parameter_names()[0]
    np.testing.assert_array_equal(gan.parameter(name), back.parameter(name))


def test_synth_rosette_deterministic():
    a = rg.synth_rosette(5, 32, seed=9)
    b = rg.synth_rosette(5, 32, seed=9)
    assert a.shape == (3, 32, 32)
    np.testing.assert_array_equal(a, b)
    assert a.min() >= -1.0 and a.max() <= 1.0


def test_preprocess_endpoints():
    white = np.full((20, 30, 3), 255, dtype=np.uint8)
    out = rg.preprocess(white, 16)
    assert out.shape == (3, 16, 16)
    np.testing.assert_allclose(out, 1.0, atol=1e-6)


def test_augment_cardinality_and_identity():
    images = np.stack([rg.synth_rosette(4, 16, seed=3)])
    expanded, counts = rg.augment(images, [4])
    assert expanded.shape == (30, 3, 16, 16)
    assert counts == [4] * 30
    np.testing.assert_array_equal(expanded[0], images[0])


def test_export_and_load_dataset(tmp_path):
    images = np.stack([rg.synth_rosette(3 + i, 24, seed=i) for i in range(3)])
    names = rg.export_ax(images, [3, 4, 5], str(tmp_path))
    assert names[0] == "plant001_rgb.png"
    loaded, counts, sources = rg.load_dataset(str(tmp_path), str(tmp_path / "counts.csv"), target=24)
    assert loaded.shape == (3, 3, 24, 24)
    assert counts == [3, 4, 5]
    assert np.abs(loaded - images).max() <= 1 / 255 + 1e-6


def test_count_metrics_dict():
    m = rg.count_metrics([5.0, 7.0], [4, 7])
    assert m["dic_mean"] == pytest.approx(0.5)
    assert m["mse"] == pytest.approx(0.5)
    constant = rg.count_metrics([4.0, 4.2], [4, 4])
    assert constant["r2"] is None


def test_kfold_split_sizes():
    folds = rg.kfold_split(624, 4, seed=1)
    assert len(folds) == 4
    for train, test in folds:
        assert len(train) == 468
        assert len(test) == 156


def test_training_loop_writes_history(tmp_path):
    cfg = small_config()
    cfg.epochs = 1
    cfg.checkpoint_interval = 1
    cfg.sample_grid = 2
    images = np.stack([rg.synth_rosette(3 + i % 3, 16, seed=100 + i) for i in range(8)])
    counts = [3 + i % 3 for i in range(8)]
    history = rg.train(images, counts, cfg, str(tmp_path))
    assert len(history) == 1
    assert history[0]["epoch"] == 1
    assert (tmp_path / "history.csv").exists()
    assert (tmp_path / "checkpoint_0001.bin").exists()


def test_cli_binding(tmp_path):
    assert rg.cli(["synth", "--n", "2", "--size", "16", "--out-dir", str(tmp_path / "ds")]) == 0
    assert rg.cli(["no-such-command"]) == 1
