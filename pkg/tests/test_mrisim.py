import numpy as np
import pytest

from oracles import naive_dft2
from coordsr.errors import ConfigurationError, DomainError
from coordsr.mrisim import (
    DatasetManifest,
    build_manifest,
    fft2,
    highfreq_energy_fraction,
    ifft2,
    make_coil_maps,
    make_phantom,
    simulate_measurement,
)

class TestFFT:
    def test_delta_has_flat_spectrum(self):
        img = np.zeros((8, 8), dtype=np.float32)
        img[3, 5] = 1.0
        mag = np.abs(fft2(img))
        np.testing.assert_allclose(mag, 1.0 / 8.0, atol=1e-6)

    def test_constant_is_pure_dc(self):
        k = fft2(np.full((16, 16), 0.5, dtype=np.float32))
        assert abs(k[0, 0]) == pytest.approx(0.5 * 16, rel=1e-5)
        k[0, 0] = 0
        np.testing.assert_allclose(np.abs(k), 0.0, atol=1e-5)

    def test_matches_naive_dft(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(-1, 1, (16, 16)).astype(np.float32)
        np.testing.assert_allclose(fft2(x), naive_dft2(x), atol=1e-4)

    def test_roundtrip(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(0, 1, (24, 18)).astype(np.float32)  # mixed radix
        back = ifft2(fft2(x))
        assert np.sqrt(np.mean((back.real - x) ** 2)) < 1e-4

    def test_parseval(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(-1, 1, (32, 32)).astype(np.float32)
        e_img = float((x.astype(np.float64) ** 2).sum())
        e_k = float((np.abs(fft2(x).astype(np.complex128)) ** 2).sum())
        assert abs(e_img - e_k) / e_img < 1e-3

    def test_small_dims_rejected(self):
        with pytest.raises(ConfigurationError):
            fft2(np.zeros((1, 8)))


class TestCoilMaps:
    def test_rss_is_one(self):
        maps = make_coil_maps(32, 4, seed=3)
        rss = np.sqrt((np.abs(maps) ** 2).sum(axis=0))
        np.testing.assert_allclose(rss, 1.0, atol=1e-3)

    def test_deterministic(self):
        a = make_coil_maps(16, 3, seed=4)
        b = make_coil_maps(16, 3, seed=4)
        np.testing.assert_array_equal(a, b)


class TestSimulateMeasurement:
    def test_noiseless_single_coil_identity(self):
        img = make_phantom("shepp-logan-like", 32, 0)
        out = simulate_measurement(img, None, 0.0)
        np.testing.assert_allclose(out, img, atol=1e-4)

    def test_noiseless_multicoil_identity(self):
        img = make_phantom("edges", 32, 1)
        maps = make_coil_maps(32, 4, seed=5)
        out = simulate_measurement(img, maps, 0.0)
        np.testing.assert_allclose(out, img, atol=1e-3)

    def test_noise_std_matches_monte_carlo(self):
        # oracle: direct image-domain noise model |c + sigma * (z1 + i z2)|,
        # clamped, independent of the k-space implementation path
        n = 16
        sigma = 0.03 * np.sqrt(n)
        c = 0.5
        img = np.full((n, n), c, dtype=np.float32)
        out = simulate_measurement(img, None, sigma, seed=6)
        impl_std = float(out.std())

        rng = np.random.default_rng(7)
        z = c + sigma * (rng.standard_normal(10_000) + 1j * rng.standard_normal(10_000))
        ref = np.clip(np.abs(z), 0.0, 1.0)
        ref_std = float(ref.std())
        assert abs(impl_std - ref_std) <= 0.2 * ref_std

    def test_deterministic_given_seed(self):
        img = make_phantom("texture", 32, 2)
        a = simulate_measurement(img, None, 0.05, seed=8)
        b = simulate_measurement(img, None, 0.05, seed=8)
        assert np.array_equal(a, b)
        c = simulate_measurement(img, None, 0.05, seed=9)
        assert not np.array_equal(a, c)

    def test_negative_sigma_rejected(self):
        with pytest.raises(DomainError):
            simulate_measurement(np.zeros((8, 8)), None, -0.1)


class TestPhantoms:
    @pytest.mark.parametrize("kind", ["shepp-logan-like", "texture", "edges"])
    def test_deterministic_and_in_range(self, kind):
        a = make_phantom(kind, 64, seed=11)
        b = make_phantom(kind, 64, seed=11)
        assert np.array_equal(a, b)
        assert a.dtype == np.float32
        assert a.min() >= 0.0 and a.max() <= 1.0
        assert not np.array_equal(a, make_phantom(kind, 64, seed=12))

    def test_texture_has_high_frequency_energy(self):
        for seed in range(3):
            frac = highfreq_energy_fraction(make_phantom("texture", 128, seed))
            assert frac >= 0.10

    def test_too_small_rejected(self):
        with pytest.raises(DomainError):
            make_phantom("texture", 16)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigurationError):
            make_phantom("wavelets", 64)


class TestManifest:
    def test_ten_items_split_8_1_1(self):
        entries = [(f"img_{i}.ft1", f"g{i}") for i in range(10)]
        m = build_manifest(entries, seed=0)
        counts = {s: len(m.split_items(s)) for s in ("train", "val", "test")}
        assert counts == {"train": 8, "val": 1, "test": 1}

    def test_twenty_items_split_16_2_2(self):
        entries = [(f"img_{i}.ft1", f"g{i}") for i in range(20)]
        m = build_manifest(entries, seed=1)
        counts = {s: len(m.split_items(s)) for s in ("train", "val", "test")}
        assert counts == {"train": 16, "val": 2, "test": 2}

    def test_same_seed_identical(self):
        entries = [(f"img_{i}.ft1", f"g{i}") for i in range(12)]
        assert build_manifest(entries, seed=5).to_json() == build_manifest(entries, seed=5).to_json()
        assert build_manifest(entries, seed=5).to_json() != build_manifest(entries, seed=6).to_json()

    def test_groups_never_span_splits(self):
        entries = [(f"vol{v}_slice{s}.ft1", f"vol{v}") for v in range(8) for s in range(3)]
        m = build_manifest(entries, seed=2)
        split_by_group = {}
        for item in m.items:
            split_by_group.setdefault(item.group, set()).add(item.split)
        assert all(len(s) == 1 for s in split_by_group.values())
        assert {i.split for i in m.items} == {"train", "val", "test"}

    def test_too_few_items_rejected(self):
        with pytest.raises(ConfigurationError):
            build_manifest([("a.ft1", "a")] * 9, seed=0)

    def test_roundtrip_json(self, tmp_path):
        entries = [(f"img_{i}.ft1", f"g{i}") for i in range(10)]
        m = build_manifest(entries, seed=3, sigma_k=0.03, source="phantom")
        path = tmp_path / "manifest.json"
        m.save(path)
        back = DatasetManifest.load(path)
        assert back.to_json() == m.to_json()
        assert back.sigma_k == 0.03
