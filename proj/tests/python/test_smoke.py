import math

import numpy as np
import pytest

import cevae


def test_presets():
    assert set(cevae.presets()) == {"reference", "tiny", "small"}


def test_model_enhance_shapes():
    model = cevae.Model(preset="tiny", seed=3)
    img = np.clip(np.random.default_rng(0).normal(0, 0.3, (3, 32, 32)), -1, 1)
    out = model.enhance(img)
    assert out.shape == (3, 32, 32)
    assert np.all(out >= -1.0) and np.all(out <= 1.0)
    latent = model.encode(img)
    assert latent.ndim == 3
    assert np.allclose(model.decode(latent), out)


def test_model_deterministic():
    img = np.clip(np.random.default_rng(1).normal(0, 0.3, (3, 32, 32)), -1, 1)
    a = cevae.Model(preset="tiny", seed=7).enhance(img)
    b = cevae.Model(preset="tiny", seed=7).enhance(img)
    assert np.array_equal(a, b)


def test_checkpoint_round_trip(tmp_path):
    model = cevae.Model(preset="tiny", seed=11)
    path = str(tmp_path / "m.ckpt")
    model.save(path)
    img = np.clip(np.random.default_rng(2).normal(0, 0.3, (3, 32, 32)), -1, 1)
    restored = cevae.Model.from_checkpoint(path)
    assert np.array_equal(restored.enhance(img), model.enhance(img))


def test_psnr_analytic():
    gt = np.zeros((3, 16, 16))
    pred = np.full((3, 16, 16), 0.1)
    assert math.isclose(cevae.psnr(gt, pred), 20.0, abs_tol=1e-9)


def test_ssim_identity():
    img = np.random.default_rng(3).random((3, 12, 12))
    assert math.isclose(cevae.ssim(img, img), 1.0, abs_tol=1e-12)


def test_latent_codec_round_trip():
    latent = np.random.default_rng(4).normal(0, 2, (5, 4, 3))
    blob = cevae.serialize_latent(latent, dtype="f64")
    assert np.array_equal(cevae.deserialize_latent(blob), latent)
    with pytest.raises(cevae.CevaeError):
        cevae.deserialize_latent(b"XXXX" + blob[4:])


def test_compression_report():
    r = cevae.compression_report((3, 256, 256), (256, 16, 16))
    assert r["ratio_vs_raw"] == 3.0
    assert r["raw"]["megabytes"] == 1.57
    assert r["latent"]["megabytes"] == 0.52
    assert math.isclose(r["latent"]["transmission_seconds"], 0.00416, abs_tol=1e-12)
