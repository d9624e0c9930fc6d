"""Tests for the stereo disparity pipeline on synthetic pairs."""
import json

import numpy as np
import pytest

from factorbp.dists import Grid
from factorbp.stereo import (ImagePair, StereoConfig, build_stereo_graph,
                             cost_volume, gaussian_smoothing_kernel,
                             load_image, load_pair, prior_variance_map,
                             priors_from_costs, read_pfm, report_to_csv,
                             report_to_json, run_stereo, save_disparity_pgm,
                             synthetic_shift_pair, _mse)

SMALL_CFG = StereoConfig(patch_size=3, lam=0.05, edge_threshold=3.0,
                         edge_scale=4.0, disparity_grid=Grid(16, 0.0, 15.0),
                         smoothing_sigma=1.0, iterations=6)


def _small_pair(noise=0.0, seed=42):
    return synthetic_shift_pair(height=12, width=18, shift=4, seed=seed,
                                noise_sigma=noise)


class TestSyntheticPair:
    def test_shapes_and_dtype(self):
        p = _small_pair()
        assert p.left.shape == (12, 18)
        assert p.right.shape == (12, 18)
        assert p.left.dtype == np.uint8

    def test_ground_truth_masks_left_margin(self):
        p = _small_pair()
        assert np.all(np.isnan(p.gt[:, :4]))
        assert np.all(p.gt[:, 4:] == 4.0)

    def test_seed_changes_noise_only(self):
        a = synthetic_shift_pair(12, 18, 4, seed=1, noise_sigma=2.0)
        b = synthetic_shift_pair(12, 18, 4, seed=2, noise_sigma=2.0)
        assert np.any(a.left != b.left)
        c = synthetic_shift_pair(12, 18, 4, seed=1, noise_sigma=2.0)
        np.testing.assert_array_equal(a.left, c.left)


class TestCostVolume:
    def test_true_disparity_has_zero_cost_without_noise(self):
        p = _small_pair(noise=0.0)
        vol = cost_volume(p, SMALL_CFG)
        # Away from the occluder margin, matching at the true shift is exact.
        assert np.all(vol[:, 5:, 4] == 0.0)

    def test_invalid_disparities_are_infinite(self):
        p = _small_pair()
        vol = cost_volume(p, SMALL_CFG)
        for d in range(1, 8):
            assert np.all(np.isinf(vol[:, :d, d]))

    def test_wrong_disparity_costs_more(self):
        p = _small_pair(noise=0.0)
        vol = cost_volume(p, SMALL_CFG)
        assert np.all(vol[:, 8:, 8] > vol[:, 8:, 4])

    def test_priors_normalized(self):
        p = _small_pair()
        pri = priors_from_costs(cost_volume(p, SMALL_CFG), SMALL_CFG)
        np.testing.assert_allclose(pri.sum(axis=2), 1.0, atol=1e-9)

    def test_prior_variance_map_shape(self):
        p = _small_pair()
        v = prior_variance_map(p, SMALL_CFG)
        assert v.shape == (12, 18)
        assert np.all(v >= 0)


class TestStereoGraph:
    def test_variable_per_pixel(self):
        p = _small_pair()
        g = build_stereo_graph(p, SMALL_CFG)
        assert g.n_vars == 12 * 18
        assert len(g.unary_factors()) == 12 * 18

    def test_edge_mask_drops_smoothing_factors(self):
        p = _small_pair()
        open_cfg = StereoConfig(patch_size=3, lam=0.05, edge_threshold=1e9,
                                disparity_grid=Grid(16, 0.0, 15.0),
                                iterations=6)
        masked = build_stereo_graph(p, SMALL_CFG)
        unmasked = build_stereo_graph(p, open_cfg)
        assert len(masked.binary_factors()) < len(unmasked.binary_factors())


@pytest.fixture(scope="module")
def reports():
    p = _small_pair(noise=1.0)
    return {e: run_stereo(p, SMALL_CFG, engine=e) for e in ("bp", "gbp")}


class TestRunStereo:
    def test_disparity_in_grid_range(self, reports):
        for rep in reports.values():
            assert rep.disparity.shape == (12, 18)
            assert np.all(rep.disparity >= 0.0)
            assert np.all(rep.disparity <= 15.0)

    def test_mse_reasonable(self, reports):
        for rep in reports.values():
            assert np.isfinite(rep.mse)
            assert rep.mse < 4.0

    def test_trace_starts_at_prior_estimate(self, reports):
        for rep in reports.values():
            assert len(rep.mse_trace) == SMALL_CFG.iterations + 1
            assert rep.mse_trace[-1] <= rep.mse_trace[0]

    def test_bp_carries_shape_maps(self, reports):
        assert reports["bp"].kl.shape == (12, 18)
        assert reports["gbp"].kl is None

    def test_unknown_engine(self):
        with pytest.raises(ValueError):
            run_stereo(_small_pair(), SMALL_CFG, engine="mrf")

    def test_mse_ignores_unknown_pixels(self):
        disp = np.full((2, 3), 5.0)
        gt = np.array([[np.nan, 5.0, 5.0], [np.nan, 5.0, 7.0]])
        assert _mse(disp, gt) == pytest.approx(4.0 / 4.0)


class TestReportIO:
    def test_csv_and_json_round_trip(self, tmp_path):
        p = _small_pair(noise=1.0)
        rep = run_stereo(p, SMALL_CFG, engine="bp")
        csv_path = tmp_path / "pixels.csv"
        report_to_csv(rep, csv_path)
        lines = csv_path.read_text().splitlines()
        assert len(lines) == 1 + 12 * 18
        json_path = tmp_path / "summary.json"
        report_to_json(rep, SMALL_CFG, json_path)
        doc = json.loads(json_path.read_text())
        assert doc["engine"] == "bp"
        assert doc["mse"] == pytest.approx(rep.mse)

    def test_disparity_pgm_round_trip(self, tmp_path):
        p = _small_pair(noise=1.0)
        rep = run_stereo(p, SMALL_CFG, engine="gbp")
        path = tmp_path / "disp.pgm"
        save_disparity_pgm(rep, path)
        img = load_image(path)
        assert img.shape == (12, 18)


class TestImageIO:
    def test_png_round_trip(self, tmp_path):
        from PIL import Image
        arr = (np.arange(48).reshape(6, 8) * 5).astype(np.uint8)
        path = tmp_path / "img.png"
        Image.fromarray(arr).save(path)
        np.testing.assert_array_equal(load_image(path), arr)

    def test_load_pair_with_pfm_gt(self, tmp_path):
        from PIL import Image
        arr = np.full((4, 5), 7, dtype=np.uint8)
        Image.fromarray(arr).save(tmp_path / "l.png")
        Image.fromarray(arr).save(tmp_path / "r.png")
        gt = np.arange(20, dtype=np.float32).reshape(4, 5)
        _write_pfm(tmp_path / "gt.pfm", gt)
        pair = load_pair(tmp_path / "l.png", tmp_path / "r.png",
                         tmp_path / "gt.pfm")
        np.testing.assert_allclose(pair.gt, gt)

    def test_read_pfm_negative_scale_is_little_endian(self, tmp_path):
        gt = np.array([[1.5, -2.0], [0.0, 4.0]], dtype=np.float32)
        _write_pfm(tmp_path / "x.pfm", gt)
        np.testing.assert_allclose(read_pfm(tmp_path / "x.pfm"), gt)


def _write_pfm(path, data):
    """Minimal grayscale PFM writer (little-endian, rows bottom-up)."""
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{data.shape[1]} {data.shape[0]}\n".encode())
        fh.write(b"-1.0\n")
        fh.write(np.flipud(data).astype("<f4").tobytes())
