import numpy as np
import pytest

from helpers import rng
from tomodict import metrics_eval as me


class TestRelativeError:
    def test_identical(self):
        x = rng(0).uniform(size=100)
        assert me.relative_error(x, x) == 0.0

    def test_zero_estimate(self):
        x = rng(1).uniform(1, 2, 50)
        assert me.relative_error(np.zeros(50), x) == pytest.approx(1.0)

    def test_one_percent_scaling(self):
        x = rng(2).uniform(1, 2, 64)
        assert me.relative_error(1.01 * x, x) == pytest.approx(0.01, abs=1e-12)

    def test_zero_reference_rejected(self):
        with pytest.raises(ValueError):
            me.relative_error(np.ones(4), np.zeros(4))

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            me.relative_error(np.ones(4), np.ones(5))


class TestSsim:
    def test_self_similarity_is_one(self):
        x = rng(3).uniform(size=(16, 16))
        assert me.ssim(x, x) == pytest.approx(1.0)

    def test_constant_images_formula(self):
        # mu_x=0, mu_y=1, all variances zero:
        # ssim = C1*C2 / ((1 + C1) * C2) = C1 / (1 + C1)
        x = np.zeros((12, 12))
        y = np.ones((12, 12))
        expected = me.SSIM_C1 / (1.0 + me.SSIM_C1)
        assert me.ssim(x, y) == pytest.approx(expected, rel=1e-12)

    def test_symmetric(self):
        g = rng(4)
        x = g.uniform(size=(20, 14))
        y = g.uniform(size=(20, 14))
        assert me.ssim(x, y) == pytest.approx(me.ssim(y, x), rel=1e-12)

    def test_identical_after_affine_remap(self):
        x = rng(5).uniform(0.2, 0.6, (16, 16))
        z = 0.5 * x + 0.1
        assert me.ssim(z, z) == pytest.approx(1.0)

    def test_bounded(self):
        g = rng(6)
        for _ in range(5):
            x = g.uniform(size=(12, 12))
            y = g.uniform(size=(12, 12))
            assert -1.0 <= me.ssim(x, y) <= 1.0

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            me.ssim(np.zeros((10, 10)), np.zeros((10, 12)))

    def test_matches_direct_window_computation(self):
        # independent sliding-window evaluation
        g = rng(7)
        x = g.uniform(size=(11, 13))
        y = g.uniform(size=(11, 13))
        vals = []
        for i in range(11 - 7):
            for j in range(13 - 7):
                xw = x[i : i + 8, j : j + 8].ravel()
                yw = y[i : i + 8, j : j + 8].ravel()
                mx, my_ = xw.mean(), yw.mean()
                sxx = (xw * xw).mean() - mx * mx
                syy = (yw * yw).mean() - my_ * my_
                sxy = (xw * yw).mean() - mx * my_
                vals.append(
                    ((2 * mx * my_ + me.SSIM_C1) * (2 * sxy + me.SSIM_C2))
                    / ((mx * mx + my_ * my_ + me.SSIM_C1) * (sxx + syy + me.SSIM_C2))
                )
        assert me.ssim(x, y) == pytest.approx(np.mean(vals), rel=1e-10)


class TestSparsityMetrics:
    def test_zero_tensor(self):
        z = np.zeros((3, 4, 5))
        assert me.density(z) == 0.0
        assert me.compressibility(z) == 0.0

    def test_all_ones(self):
        o = np.ones((2, 3, 4))
        assert me.density(o) == 100.0
        assert me.compressibility(o) == 100.0

    def test_tiny_values_counted_by_density_only(self):
        C = np.concatenate([np.full(50, 1e-6), np.ones(50)])
        assert me.density(C) == 100.0
        assert me.compressibility(C) == 50.0

    def test_compressibility_never_exceeds_density(self):
        g = rng(8)
        for _ in range(10):
            C = g.standard_normal((4, 5, 2)) * (g.uniform(size=(4, 5, 2)) < 0.5)
            C[np.abs(C) < 2e-5] *= 1e-3  # sprinkle sub-threshold values
            assert me.compressibility(C) <= me.density(C)

    def test_threshold_parameter(self):
        C = np.array([0.5, 0.05, 0.005])
        assert me.compressibility(C, threshold=0.01) == pytest.approx(100 * 2 / 3)


class TestReportCsv:
    def test_append_and_header(self, tmp_path):
        path = tmp_path / "metrics.csv"
        rep = me.MetricsReport(
            re=0.2155, ssim=0.5061, density_percent=10.27,
            compressibility_percent=3.26, iterations=8002,
            wall_time_seconds=12.0, label="run-a",
        )
        me.append_metrics_csv(path, rep)
        me.append_metrics_csv(path, rep)
        lines = path.read_text().strip().splitlines()
        assert lines[0].split(",")[0] == "label"
        assert len(lines) == 3
        assert lines[1] == lines[2]
        # wall time never persisted
        assert "12.0" not in path.read_text()
