"""Quality metrics: analytic anchors, invariances, and the independent
SSIM reference implementation."""

import numpy as np
import pytest

from manhsi.errors import DimensionError, GeometryError
from manhsi.hsidata import HsiCube, synth_dataset
from manhsi.metrics import MetricReport, evaluate, mpsnr, mssim, sam, sam_with_skipped, ssim_band
from manhsi.noise import add_gaussian

from oracles import ssim_band_windows


@pytest.fixture(scope="module")
def cube():
    return synth_dataset(1, 8, 48, 48, seed=13)[0]


class TestMpsnr:
    def test_identical_inputs_give_inf_sentinel(self, cube):
        assert np.isinf(mpsnr(cube, cube))

    def test_constant_offset_is_twenty_db(self, cube):
        pred = HsiCube(cube.data + np.float32(0.1))
        # analytic: 10*log10(1/0.01) = 20, exact up to float rounding of 0.1
        assert mpsnr(pred, cube) == pytest.approx(20.0, abs=1e-5)

    def test_exact_on_double_inputs(self):
        gt = np.zeros((2, 4, 4))
        pred = np.full((2, 4, 4), 0.1)
        assert mpsnr(pred, gt) == pytest.approx(20.0, abs=1e-12)

    def test_sigma50_anchor(self, cube):
        noisy = add_gaussian(cube, 50.0, seed=2)
        assert mpsnr(noisy, cube) == pytest.approx(14.15, abs=0.1)

    def test_translation_invariance(self, cube):
        rng = np.random.default_rng(0)
        pred = cube.data + rng.standard_normal(cube.shape).astype(np.float32) * 0.05
        base = mpsnr(pred, cube.data)
        shifted = mpsnr(pred.astype(np.float64) + 0.25, cube.data.astype(np.float64) + 0.25)
        assert shifted == pytest.approx(base, abs=1e-9)

    def test_shape_mismatch(self, cube):
        with pytest.raises(DimensionError):
            mpsnr(cube.data[:, :10], cube.data)


class TestMssim:
    def test_identical_is_exactly_one(self, cube):
        assert mssim(cube, cube) == 1.0

    def test_inverted_band_below_one(self, cube):
        pred = HsiCube(1.0 - cube.data)
        assert mssim(pred, cube) < 1.0

    def test_matches_independent_window_oracle(self):
        rng = np.random.default_rng(8)
        a = rng.random((16, 16))
        b = np.clip(a + rng.standard_normal((16, 16)) * 0.15, -1, 2)
        got = ssim_band(a, b)
        ref = ssim_band_windows(a, b)
        assert got == pytest.approx(ref, abs=1e-6)

    def test_noisy_cube_against_oracle(self, cube):
        noisy = add_gaussian(cube, 50.0, seed=3)
        got = mssim(noisy, cube)
        ref = np.mean([ssim_band_windows(noisy.data[b].astype(np.float64),
                                         cube.data[b].astype(np.float64))
                       for b in range(cube.bands)])
        assert got == pytest.approx(ref, abs=1e-6)

    def test_symmetric(self, cube):
        noisy = add_gaussian(cube, 40.0, seed=4)
        assert mssim(noisy, cube) == pytest.approx(mssim(cube, noisy), abs=1e-12)

    def test_band_smaller_than_window_rejected(self):
        small = np.zeros((2, 8, 8))
        with pytest.raises(GeometryError):
            mssim(small, small + 0.1)


class TestSam:
    def test_identical_is_zero(self, cube):
        assert sam(cube, cube) == 0.0

    def test_scale_invariance(self, cube):
        rng = np.random.default_rng(1)
        pred = cube.data.astype(np.float64) + 0.05 + rng.random(cube.shape) * 0.1
        gt = cube.data.astype(np.float64) + 0.05
        base = sam(pred, gt)
        for alpha in (2.0, 2.5, 17.0):
            assert abs(sam(alpha * pred, gt) - base) < 1e-12

    def test_orthogonal_spectra_right_angle(self):
        pred = np.zeros((2, 1, 1))
        gt = np.zeros((2, 1, 1))
        pred[0] = 1.0
        gt[1] = 1.0
        assert sam(pred, gt) == pytest.approx(np.pi / 2, abs=1e-12)

    def test_zero_norm_pixels_skipped_and_counted(self):
        pred = np.ones((3, 2, 2))
        gt = np.ones((3, 2, 2))
        pred[:, 0, 0] = 0.0
        angle, skipped = sam_with_skipped(pred, gt)
        assert skipped == 1
        assert angle == pytest.approx(0.0, abs=1e-12)


class TestReport:
    def test_text_formats(self, cube):
        rep = evaluate(cube, cube)
        text = rep.to_text()
        assert "mpsnr=inf" in text
        assert "mssim=1.0000" in text
        assert "sam=0.0000" in text

    def test_csv_round_trippable(self, cube):
        noisy = add_gaussian(cube, 50.0, seed=1)
        rep = evaluate(noisy, cube)
        lines = rep.to_csv().strip().splitlines()
        assert lines[0] == "mpsnr,mssim,sam,sam_skipped"
        vals = lines[1].split(",")
        assert float(vals[0]) == pytest.approx(rep.mpsnr)
        assert float(vals[1]) == pytest.approx(rep.mssim)

    def test_four_significant_digits(self):
        rep = MetricReport(mpsnr=14.1497, mssim=0.34567, sam=0.43210)
        text = rep.to_text()
        assert "mpsnr=14.15" in text
        assert "mssim=0.3457" in text
        assert "sam=0.4321" in text
