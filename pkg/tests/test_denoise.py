import numpy as np
import pytest

from oracles import naive_dct2
from coordsr.denoise import DenoiserSpec, cached_target, denoise, dct2, idct2
from coordsr.errors import ConfigurationError, DomainError
from coordsr.ft1 import write_ft1

class TestDct:
    def test_constant_block_is_pure_dc(self):
        c = dct2(np.full((8, 8), 0.3))
        assert c[0, 0] == pytest.approx(0.3 * 8, abs=1e-9)
        c[0, 0] = 0
        np.testing.assert_allclose(c, 0.0, atol=1e-9)

    def test_roundtrip(self):
        rng = np.random.default_rng(0)
        b = rng.uniform(0, 1, (8, 8))
        np.testing.assert_allclose(idct2(dct2(b)), b, atol=1e-5)

    def test_matches_naive_definition(self):
        rng = np.random.default_rng(1)
        b = rng.uniform(-1, 1, (8, 8))
        np.testing.assert_allclose(dct2(b), naive_dct2(b), atol=1e-5)


class TestDenoise:
    def test_sigma_zero_is_exact_passthrough(self):
        rng = np.random.default_rng(2)
        img = rng.uniform(0, 1, (32, 32)).astype(np.float32)
        for kind in ("block-dct", "gaussian", "identity"):
            out = denoise(img, DenoiserSpec(kind, 0.0))
            np.testing.assert_array_equal(out, img)

    def test_constant_image_unchanged(self):
        img = np.full((40, 40), 0.6, dtype=np.float32)
        for kind in ("block-dct", "gaussian"):
            out = denoise(img, DenoiserSpec(kind, 0.05))
            np.testing.assert_allclose(out, 0.6, atol=1e-6)

    def test_block_dct_reduces_noise_3x(self):
        rng = np.random.default_rng(3)
        img = 0.5 + rng.normal(0, 0.03, (64, 64)).astype(np.float32)
        out = denoise(img, DenoiserSpec("block-dct", 0.03))
        in_std = float((img - img.mean()).std())
        out_std = float((out - out.mean()).std())
        assert in_std / out_std >= 3.0

    @pytest.mark.parametrize("kind", ["block-dct", "gaussian"])
    def test_energy_non_expansion(self, kind):
        rng = np.random.default_rng(4)
        img = np.clip(0.5 + rng.normal(0, 0.1, (48, 48)), 0, 1).astype(np.float32)
        out = denoise(img, DenoiserSpec(kind, 0.04))
        e_in = float(np.linalg.norm(img - img.mean()))
        e_out = float(np.linalg.norm(out - img.mean()))
        assert e_out <= e_in + 1e-6

    @pytest.mark.parametrize("kind", ["block-dct", "gaussian"])
    def test_dc_shift_equivariance(self, kind):
        rng = np.random.default_rng(5)
        img = (0.4 + 0.2 * rng.uniform(size=(32, 32))).astype(np.float32)
        spec = DenoiserSpec(kind, 0.03)
        base = denoise(img, spec)
        shifted = denoise(img + np.float32(0.11), spec)
        np.testing.assert_allclose(shifted, base + 0.11, atol=1e-6)

    def test_deterministic(self):
        rng = np.random.default_rng(6)
        img = rng.uniform(0, 1, (32, 32)).astype(np.float32)
        spec = DenoiserSpec("block-dct", 0.03)
        assert np.array_equal(denoise(img, spec), denoise(img, spec))

    def test_non_multiple_dims_covered(self):
        # 37 is not 8-aligned; final block anchors at the border
        rng = np.random.default_rng(7)
        img = rng.uniform(0, 1, (37, 41)).astype(np.float32)
        out = denoise(img, DenoiserSpec("block-dct", 0.03))
        assert out.shape == img.shape
        assert np.all(np.isfinite(out))

    def test_negative_sigma_rejected(self):
        with pytest.raises(DomainError):
            DenoiserSpec("block-dct", -0.01)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigurationError):
            DenoiserSpec("bm3d", 0.03)


class TestCache:
    def test_cached_target_roundtrip(self, tmp_path):
        rng = np.random.default_rng(8)
        img = rng.uniform(0, 1, (32, 32)).astype(np.float32)
        item = tmp_path / "item_000.ft1"
        write_ft1(item, img)
        spec = DenoiserSpec("block-dct", 0.03)
        first = cached_target(tmp_path, item, spec)
        cache_file = tmp_path / "denoised" / "0.03" / "item_000.ft1"
        assert cache_file.exists()
        np.testing.assert_array_equal(first, denoise(img, spec))
        # second call must reuse the cached bytes
        stamp = cache_file.stat().st_mtime_ns
        second = cached_target(tmp_path, item, spec)
        assert cache_file.stat().st_mtime_ns == stamp
        np.testing.assert_array_equal(first, second)
