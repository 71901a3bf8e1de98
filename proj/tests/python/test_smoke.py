# Copyright 2026 the maura authors
# SPDX-License-Identifier: Apache-2.0

import math

import numpy as np
import pytest

import maura


def test_cosine_ratio_endpoints():
    assert maura.cosine_ratio(0, 100, 0.2, 0.6) == pytest.approx(0.2)
    assert maura.cosine_ratio(100, 100, 0.1, 0.5) == pytest.approx(0.5)
    assert maura.cosine_ratio(50, 100, 0.2, 0.6) == pytest.approx(0.4)
    with pytest.raises(ValueError):
        maura.cosine_ratio(101, 100, 0.2, 0.6)


def test_generate_clip_and_masking():
    s = maura.generate_clip(
        shape="square",
        color=(0.85, 0.15, 0.15),
        velocity=(0.0, 0.0),
        start=(16, 16),
        background=(0.05, 0.05, 0.1),
        frames=8,
        size=32,
        seed=7,
    )
    pixels = s["pixels"]
    assert pixels.shape == (8, 3, 32, 32)
    assert s["caption"] == "a red square sits still"
    # zero velocity: all frames identical
    assert np.array_equal(pixels[0], pixels[5])

    masked, patches = maura.patch_mask(pixels, 16, 0.5, seed=3)
    assert len(patches) == math.ceil(0.5 * 8 * 4)
    full, idx = maura.full_frame_mask(pixels, seed=3)
    assert 0 <= idx < 8
    assert np.all(full[idx] == 0)


def test_fft_matches_numpy():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(6, 10))
    got = maura.fft2d_real(x)
    want = np.real(np.fft.fft2(x))
    np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-10)

    y = rng.normal(size=(6, 10))
    got_inv = maura.ifft2d_real(y)
    want_inv = np.real(np.fft.ifft2(y))
    np.testing.assert_allclose(got_inv, want_inv, rtol=1e-10, atol=1e-12)

    # projection: P(P(x)) == P(x)
    p1 = maura.ifft2d_real(maura.fft2d_real(x))
    p2 = maura.ifft2d_real(maura.fft2d_real(p1))
    np.testing.assert_allclose(p2, p1, atol=1e-9)


def test_vq_matches_scipy_style_argmin():
    rng = np.random.default_rng(6)
    z = rng.normal(size=(20, 4)).astype(np.float32)
    cb = rng.normal(size=(17, 4)).astype(np.float32)
    idx, zq = maura.vq_quantize(z, cb)
    dists = ((z[:, None, :] - cb[None, :, :]) ** 2).sum(-1)
    np.testing.assert_array_equal(idx, dists.argmin(1).astype(np.int32))
    np.testing.assert_array_equal(zq, cb[idx])


def test_lfq_sign_rule():
    z = np.array([[0.3, -0.7], [0.0, 0.0]], dtype=np.float32)
    idx, zq = maura.lfq_quantize(z)
    assert list(idx) == [1, 3]
    np.testing.assert_array_equal(zq[0], [1.0, -1.0])


def test_schedule_and_corruption():
    mbar, gamma = maura.build_schedule(30, "linear")
    assert mbar[0] == 0.0 and mbar[-1] == 1.0
    tokens = np.zeros((10, 10, 10), dtype=np.int32)
    out = maura.forward_corrupt(tokens, k=8, t=30, timesteps=30, seed=1)
    assert np.all(out == 8)
    half = maura.forward_corrupt(tokens, k=8, t=15, timesteps=30, seed=1)
    frac = (half == 8).mean()
    assert abs(frac - 0.5) < 0.05


def test_rope_preserves_norm():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(3, 8))
    y = maura.rope_apply(x, [0, 5, 11])
    np.testing.assert_allclose(
        np.linalg.norm(y, axis=1), np.linalg.norm(x, axis=1), rtol=1e-12
    )
    np.testing.assert_allclose(y[0], x[0], rtol=1e-12)  # position 0 is identity


def test_psnr_ssim():
    a = np.full((2, 3, 16, 16), 0.5, dtype=np.float32)
    b = np.full((2, 3, 16, 16), 0.6, dtype=np.float32)
    assert maura.psnr(a, a) == 99.0
    assert maura.psnr(a, b) == pytest.approx(20.0, abs=1e-3)
    assert maura.ssim(a, a) == pytest.approx(1.0)


def test_array_roundtrip(tmp_path):
    rng = np.random.default_rng(9)
    arr = rng.normal(size=(3, 4, 5)).astype(np.float32)
    path = tmp_path / "x.m1"
    maura.save_array(path, arr)
    back = maura.load_array(path)
    np.testing.assert_array_equal(back, arr)
    raw = path.read_bytes()
    assert raw[:6] == b"MAURA1"


def test_caption_tokens():
    ids = maura.tokenize_caption("a red square moves right")
    assert len(ids) == 5
    vocab = maura.vocabulary()
    assert "<unk>" in vocab and "<null>" in vocab
    unk = maura.tokenize_caption("a purple zeppelin")
    assert unk[1] == vocab.index("<unk>")


def test_cfg_combine_endpoints():
    rng = np.random.default_rng(10)
    c = rng.normal(size=(4, 6)).astype(np.float32)
    u = rng.normal(size=(4, 6)).astype(np.float32)
    np.testing.assert_array_equal(maura.cfg_combine(c, u, 1.0), c)
    np.testing.assert_array_equal(maura.cfg_combine(c, u, 0.0), u)
