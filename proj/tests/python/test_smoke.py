"""Smoke tests for the python bindings: one pass over each main operation."""

import math

import numpy as np
import pytest

import gradleak as gl

MLP = {"architecture": "mlp", "widths": [16, 12, 4], "num_classes": 4, "activation": "sigmoid"}
XAVIER = {"scheme": "xavier_normal", "gain": 1.0, "seed": 11}


def test_init_forward_loss():
    weights = gl.init_weights(MLP, XAVIER)
    names = [n for n, _ in weights]
    assert names == ["fc1.weight", "fc1.bias", "fc2.weight", "fc2.bias"]
    x = np.zeros((2, 16))
    logits = gl.forward(MLP, weights, x)
    assert logits.shape == (2, 4)
    uniform = np.zeros((1, 4))
    assert gl.loss(uniform, uniform) == pytest.approx(math.log(4.0), rel=1e-12)


def test_capture_and_attack_roundtrip(tmp_path):
    weights = gl.init_weights(MLP, XAVIER)
    images, labels = gl.builtin_patterns("mixed", 4, 1, seed=5)
    x, y = images[:1], labels[:1]
    snap = gl.capture(MLP, weights, x, y)
    assert snap.layer_names == ["fc1.weight", "fc1.bias", "fc2.weight", "fc2.bias"]
    assert snap.batch_size == 1

    snap.save(str(tmp_path / "snap.bin"))
    loaded = gl.load_snapshot(str(tmp_path / "snap.bin"))
    assert loaded.weight_checksum == snap.weight_checksum
    np.testing.assert_array_equal(loaded.layer_grad("fc1.weight"), snap.layer_grad("fc1.weight"))

    cfg = {"optimizer": "lbfgs_lite", "max_iters": 60, "seed": 3, "distance": "sapag"}
    result = gl.run_attack(MLP, weights, snap, cfg)
    assert not result["aborted"]
    assert result["x_recon"].shape == x.shape
    assert gl.mse(result["x_recon"], x) < 1e-2
    assert 0.0 <= result["x_recon"].min() and result["x_recon"].max() <= 1.0


def test_sigma_and_q():
    weights = gl.init_weights(MLP, XAVIER)
    images, labels = gl.builtin_patterns("mixed", 4, 1, seed=5)
    snap = gl.capture(MLP, weights, images[:1], labels[:1])
    s2 = gl.estimate_sigma2(snap, "per_layer")
    assert len(s2) == 4 and all(v > 0 for v in s2)
    scaled = gl.estimate_sigma2(snap, "per_layer_scaled")
    assert scaled[0] == pytest.approx(s2[0] * 16 * 12, rel=1e-9)
    assert gl.make_q_weights(3, "harmonic") == pytest.approx([1.0, 0.5, 1.0 / 3.0])


def test_metrics():
    a = np.zeros((4, 4))
    b = np.ones((4, 4))
    assert gl.mse(a, b) == 1.0
    assert gl.psnr(a, b) == pytest.approx(0.0)
    assert math.isinf(gl.psnr(a, a))
    assert gl.ssim(b, b) == 1.0
    batch = np.random.default_rng(0).random((3, 1, 4, 4))
    report = gl.match_batch(batch[::-1].copy(), batch)
    assert report["assignment"] == [2, 1, 0]
    assert report["mse"] == 0.0


def test_text_recovery():
    vocab = gl.synthetic_vocabulary(50, 12, seed=7)
    e = vocab.embed_sequence([3, 7, 7])
    rec = gl.recover_tokens(e, vocab)
    assert rec["indices"] == [3, 7, 7]
    w = np.asarray(vocab.embed)
    pinv = gl.pseudoinverse(w)
    assert np.max(np.abs(w @ pinv @ w - w)) < 1e-6


def test_image_roundtrip(tmp_path):
    img = np.random.default_rng(1).random((1, 6, 6))
    path = str(tmp_path / "x.pgm")
    gl.save_image(path, img)
    back = gl.load_image(path)
    assert back.shape == img.shape
    assert np.max(np.abs(back - img)) <= 1.0 / 510.0 + 1e-12


def test_experiment_tiny(tmp_path):
    config = {
        "model": MLP,
        "data": {"source": "builtin", "kind": "mixed", "size": 4, "per_class": 2},
        "grid": {"distance": ["sapag"], "init": ["xavier_normal"], "epochs": [0]},
        "attack": {"optimizer": "lbfgs_lite", "max_iters": 30},
        "repeat": 1,
        "master_seed": 9,
        "out_dir": str(tmp_path / "out"),
    }
    result = gl.run_experiment(config)
    assert result["exit_code"] == 0
    assert len(result["runs"]) == 1
    assert (tmp_path / "out" / "summary.csv").exists()


def test_errors_surface():
    with pytest.raises(gl.GradleakError):
        gl.mse(np.zeros((2, 2)), np.zeros((3, 3)))
