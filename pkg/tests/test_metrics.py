"""PSNR/SSIM correctness against closed forms and a direct-formula oracle."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from renoise.exceptions import ShapeMismatchError, SpecError
from renoise.image import ROLE_CLEAN, ImageBuffer
from renoise.metrics import EvalReport, EvalRow, psnr, ssim

from _reference import ref_ssim_gray


class TestPsnr:
    def test_identical_images_hit_the_cap(self):
        a = np.random.default_rng(0).uniform(0, 255, (32, 32))
        assert psnr(a, a.copy()) == 99.0

    def test_constant_offset_closed_form(self):
        """Offset 15 at peak 255: 20 log10(255/15) = 24.6090 dB."""
        a = np.full((64, 64), 100.0)
        val = psnr(a, a + 15.0)
        assert abs(val - 20.0 * math.log10(255.0 / 15.0)) < 1e-3
        assert abs(val - 24.6090) < 1e-3

    def test_awgn_sigma5_anchor_on_mid_gray(self):
        rng = np.random.default_rng(1)
        a = np.full((512, 512), 128.0)
        b = a + 5.0 * rng.standard_normal(a.shape)
        assert abs(psnr(a, b) - 34.15) < 0.15

    def test_symmetry_exact(self):
        rng = np.random.default_rng(2)
        a = rng.uniform(0, 255, (24, 24))
        b = rng.uniform(0, 255, (24, 24))
        assert psnr(a, b) == psnr(b, a)

    @settings(max_examples=20, deadline=None)
    @given(st.floats(min_value=1.01, max_value=20.0))
    def test_monotone_in_difference_scale(self, c):
        rng = np.random.default_rng(3)
        a = np.full((16, 16), 128.0)
        d = rng.uniform(-4, 4, (16, 16))
        assert psnr(a, a + c * d) < psnr(a, a + d)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ShapeMismatchError):
            psnr(np.zeros((8, 8)), np.zeros((8, 9)))

    def test_accepts_image_buffers(self):
        img = ImageBuffer(np.full((16, 16), 50.0), ROLE_CLEAN)
        assert psnr(img, img) == 99.0


class TestSsim:
    def test_self_similarity_is_exactly_one(self):
        rng = np.random.default_rng(4)
        a = rng.uniform(0, 255, (32, 32))
        assert ssim(a, a.copy()) == 1.0

    def test_matches_direct_formula_oracle(self):
        """20 random pairs against the per-window definition, within 1e-6."""
        rng = np.random.default_rng(5)
        for _ in range(20):
            a = rng.uniform(0, 255, (20, 20))
            b = np.clip(a + rng.uniform(-60, 60, (20, 20)), 0, 255)
            assert abs(ssim(a, b) - ref_ssim_gray(a, b)) < 1e-6

    def test_inverted_bimodal_image_scores_low(self):
        a = np.zeros((32, 32))
        a[:, 16:] = 255.0
        assert ssim(a, 255.0 - a) < 0.5

    def test_dihedral_invariance(self):
        from renoise.pipeline import dihedral_transform
        rng = np.random.default_rng(6)
        a = rng.uniform(0, 255, (24, 24))
        b = np.clip(a + rng.uniform(-30, 30, (24, 24)), 0, 255)
        base = ssim(a, b)
        for t in range(8):
            assert abs(ssim(dihedral_transform(a, t), dihedral_transform(b, t)) - base) < 1e-9

    def test_multichannel_averages_channels(self):
        rng = np.random.default_rng(7)
        a = rng.uniform(0, 255, (16, 16, 3))
        vals = [ssim(a[:, :, c], a[:, :, c].copy()) for c in range(3)]
        assert ssim(a, a.copy()) == pytest.approx(np.mean(vals))

    def test_too_small_image_rejected(self):
        with pytest.raises(SpecError):
            ssim(np.zeros((10, 10)), np.zeros((10, 10)))

    def test_value_range(self):
        rng = np.random.default_rng(8)
        for _ in range(5):
            a = rng.uniform(0, 255, (16, 16))
            b = rng.uniform(0, 255, (16, 16))
            assert -1.0 <= ssim(a, b) <= 1.0


class TestEvalReport:
    def _report(self):
        rep = EvalReport(seed=3, config_digest="abc123")
        rep.rows.append(EvalRow("img0", 10.0, None, 30.0, 0.9))
        rep.rows.append(EvalRow("img1", 10.0, None, 32.0, 0.8))
        return rep

    def test_aggregate_is_arithmetic_mean(self):
        rep = self._report()
        assert abs(rep.mean_psnr - 31.0) < 1e-9
        assert abs(rep.mean_ssim - 0.85) < 1e-9

    def test_json_schema_keys(self):
        import json
        doc = json.loads(self._report().to_json())
        assert set(doc) == {"rows", "mean_psnr", "mean_ssim", "seed", "config_digest", "errors"}
        assert set(doc["rows"][0]) == {"id", "sigma", "lambda", "psnr", "ssim"}

    def test_wall_clock_never_serialized(self):
        rep = self._report()
        rep.wall_clock_sec = 123.4
        assert "123.4" not in rep.to_json()
