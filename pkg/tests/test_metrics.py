import math

import numpy as np
import pytest
from scipy import ndimage

from oracles import scalar_reference_vif
from coordsr.errors import DomainError, UsageError
from coordsr.metrics import bicubic_infer, evaluate_images, psnr, vif
from coordsr.mrisim import make_phantom

PINNED_VIF = 0.3923519098  # scalar reference on the seeded phantom pair below

def seeded_pair():
    rng = np.random.default_rng(42)
    ref = make_phantom("texture", 32, 5).astype(np.float64)
    dist = np.clip(
        ndimage.gaussian_filter(ref, 0.8, mode="nearest") + rng.normal(0, 0.01, ref.shape),
        0, 1,
    )
    return dist, ref


class TestPsnr:
    def test_identical_is_infinite(self):
        x = make_phantom("edges", 32, 0)
        assert psnr(x, x) == math.inf

    def test_uniform_error_is_20db(self):
        x = np.zeros((16, 16), dtype=np.float64)
        assert psnr(x + 0.1, x) == pytest.approx(20.0, abs=1e-6)

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(1)
        a = rng.uniform(0, 1, (20, 20))
        b = rng.uniform(0, 1, (20, 20))
        expected = 10 * math.log10(1.0 / np.mean((a - b) ** 2))
        assert psnr(a, b) == pytest.approx(expected, abs=1e-6)

    def test_monotone_in_mse(self):
        x = np.zeros((8, 8))
        values = [psnr(x + e, x) for e in (0.05, 0.1, 0.2, 0.4)]
        assert values == sorted(values, reverse=True)

    def test_dim_mismatch(self):
        with pytest.raises(UsageError):
            psnr(np.zeros((4, 4)), np.zeros((4, 5)))


class TestVif:
    def test_self_is_one(self):
        x = make_phantom("texture", 64, 1)
        assert vif(x, x) == pytest.approx(1.0, abs=1e-6)

    def test_blur_loses_information(self):
        x = make_phantom("texture", 64, 2)
        blurred = ndimage.gaussian_filter(x, 1.0, mode="nearest")
        assert vif(blurred, x) < 1.0

    def test_monotone_under_increasing_blur(self):
        x = make_phantom("texture", 64, 3).astype(np.float64)
        scores = [vif(ndimage.gaussian_filter(x, s, mode="nearest"), x)
                  for s in (0.5, 1.0, 1.5, 2.0)]
        assert scores == sorted(scores, reverse=True)

    def test_pinned_regression_matches_scalar_reference(self):
        dist, ref = seeded_pair()
        got = vif(dist, ref)
        assert got == pytest.approx(PINNED_VIF, abs=1e-4)
        assert got == pytest.approx(scalar_reference_vif(dist.tolist(), ref.tolist()),
                                    abs=1e-4)

    def test_small_images_rejected(self):
        with pytest.raises(DomainError):
            vif(np.zeros((16, 16)), np.zeros((16, 16)))

    def test_dim_mismatch(self):
        with pytest.raises(UsageError):
            vif(np.zeros((32, 32)), np.zeros((32, 33)))


class TestEvaluate:
    def test_bicubic_identity_scale(self):
        images = {"a": make_phantom("texture", 32, 6)}
        report = evaluate_images(bicubic_infer, images, 1.0)
        assert report.rows[0].psnr_db == math.inf
        assert report.rows[0].vif == pytest.approx(1.0, abs=1e-6)

    def test_row_per_item_plus_mean(self):
        images = {f"i{k}": make_phantom("texture", 32, k) for k in range(3)}
        report = evaluate_images(bicubic_infer, images, 2.0)
        assert [r.item for r in report.rows] == ["i0", "i1", "i2"]
        csv_text = report.to_csv()
        lines = csv_text.strip().split("\n")
        assert lines[0] == "item,psnr_db,vif"
        assert len(lines) == 5 and lines[-1].startswith("mean,")

    def test_order_independent(self):
        imgs = {f"i{k}": make_phantom("edges", 32, k) for k in range(4)}
        rev = dict(reversed(list(imgs.items())))
        a = evaluate_images(bicubic_infer, imgs, 2.0).to_csv()
        b = evaluate_images(bicubic_infer, rev, 2.0).to_csv()
        assert a == b
