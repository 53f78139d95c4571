import math

import numpy as np
import pytest

from bruteforce import brute_force_metrics
from depthprobe.errors import ConfigurationError, DomainError, EvaluationError
from depthprobe.geometry import kitti_camera
from depthprobe.metrics import (
    METRIC_COLUMNS,
    EvalConfig,
    MetricSet,
    compare_metric_rows,
    compute_metrics,
    metrics_to_csv,
)
from depthprobe.robustfit import DisparityMap

CAM = kitti_camera()

# Rows of the published comparison table this tooling is meant to reproduce
# (unmodified / grayscale / false colors / semantic rgb / class-average).
TABLE_ROWS = {
    "Unmodified": MetricSet(0.124, 1.388, 6.125, 0.217, 30.272, 0.841, 0.936, 0.975),
    "Grayscale": MetricSet(0.130, 1.457, 6.350, 0.227, 31.975, 0.831, 0.930, 0.972),
    "FalseColors": MetricSet(0.128, 1.257, 6.355, 0.237, 34.865, 0.816, 0.920, 0.966),
    "SemanticRgb": MetricSet(0.192, 2.784, 8.531, 0.349, 46.317, 0.714, 0.850, 0.918),
    "ClassAverageColors": MetricSet(0.244, 4.159, 9.392, 0.367, 50.003, 0.691, 0.835, 0.910),
}


def random_pair(seed, size=(16, 16), with_masks=False):
    rng = np.random.default_rng(seed)
    pred = rng.uniform(0.001, 0.6, size=size)
    gt = rng.uniform(0.001, 0.6, size=size)
    pm = gm = None
    if with_masks:
        pm = rng.random(size) > 0.1
        gm = rng.random(size) > 0.1
    return DisparityMap(pred, pm), DisparityMap(gt, gm)


def run_both(pred, gt, cfg):
    ours = compute_metrics(pred, gt, CAM, cfg)
    brute = brute_force_metrics(
        pred.values.tolist(),
        pred.valid_mask().tolist(),
        gt.values.tolist(),
        gt.valid_mask().tolist(),
        gt_is_depth=False,
        f_px=CAM.f_px,
        baseline_m=CAM.baseline_m,
        image_w_px=CAM.image_w_px,
        min_depth_m=cfg.min_depth_m,
        depth_cap_m=cfg.depth_cap_m,
        crop_fracs=cfg.eval_crop,
    )
    return ours, brute


class TestComputeMetrics:
    def test_identity_is_exact(self):
        pred, _ = random_pair(0)
        cfg = EvalConfig(gt_kind="normalized_disparity")
        m = compute_metrics(pred, pred, CAM, cfg)
        assert (m.abs_rel, m.sq_rel, m.rmse_m, m.rmse_log, m.d1_all_pct) == (0, 0, 0, 0, 0)
        assert (m.delta1, m.delta2, m.delta3) == (1.0, 1.0, 1.0)

    def test_single_pixel_hand_case(self):
        # z = 2 m predicted against z* = 1 m: abs_rel 1, sq_rel 1, rmse 1,
        # rmse_log ln 2, all deltas 0 because 2 > 1.25^3 = 1.953125.
        pred = DisparityMap(np.full((1, 1), CAM.f_px * CAM.baseline_m / (2.0 * CAM.image_w_px)))
        gt = np.full((1, 1), 1.0)
        m = compute_metrics(pred, gt, CAM, EvalConfig(gt_kind="depth_m"))
        assert m.abs_rel == pytest.approx(1.0, rel=1e-12)
        assert m.sq_rel == pytest.approx(1.0, rel=1e-12)
        assert m.rmse_m == pytest.approx(1.0, rel=1e-12)
        assert m.rmse_log == pytest.approx(math.log(2.0), rel=1e-12)
        assert (m.delta1, m.delta2, m.delta3) == (0.0, 0.0, 0.0)
        # disparity error is f*B/2 px, far beyond both D1 thresholds
        assert m.d1_all_pct == 100.0

    def test_matches_brute_force_disparity_gt(self):
        cfg = EvalConfig(gt_kind="normalized_disparity")
        for seed in range(25):
            pred, gt = random_pair(seed, with_masks=seed % 2 == 0)
            ours, brute = run_both(pred, gt, cfg)
            for name in METRIC_COLUMNS:
                assert getattr(ours, name) == pytest.approx(brute[name], abs=1e-12), name

    def test_matches_brute_force_depth_gt(self):
        cfg = EvalConfig(gt_kind="depth_m")
        rng = np.random.default_rng(99)
        for seed in range(10):
            pred, _ = random_pair(seed)
            gt = rng.uniform(0.5, 120.0, size=(16, 16))
            gt[rng.random((16, 16)) < 0.1] = 0.0  # inert pixels
            ours = compute_metrics(pred, gt, CAM, cfg)
            brute = brute_force_metrics(
                pred.values.tolist(), pred.valid_mask().tolist(),
                gt.tolist(), np.ones_like(gt, bool).tolist(),
                gt_is_depth=True, f_px=CAM.f_px, baseline_m=CAM.baseline_m,
                image_w_px=CAM.image_w_px, min_depth_m=cfg.min_depth_m,
                depth_cap_m=cfg.depth_cap_m,
            )
            for name in METRIC_COLUMNS:
                assert getattr(ours, name) == pytest.approx(brute[name], abs=1e-12), name

    def test_matches_brute_force_with_crop(self):
        cfg = EvalConfig(gt_kind="normalized_disparity", eval_crop=(0.1, 0.25, 0.9, 1.0))
        pred, gt = random_pair(7)
        ours, brute = run_both(pred, gt, cfg)
        for name in METRIC_COLUMNS:
            assert getattr(ours, name) == pytest.approx(brute[name], abs=1e-12), name

    def test_delta_nesting_always_holds(self):
        cfg = EvalConfig(gt_kind="normalized_disparity")
        for seed in range(40):
            pred, gt = random_pair(seed + 1000)
            m = compute_metrics(pred, gt, CAM, cfg)
            assert m.delta1 <= m.delta2 <= m.delta3

    def test_invariant_to_content_outside_crop(self):
        cfg = EvalConfig(gt_kind="normalized_disparity", eval_crop=(0.2, 0.2, 0.8, 0.8))
        pred, gt = random_pair(3)
        inside = compute_metrics(pred, gt, CAM, cfg)
        vals = pred.values.copy()
        vals[0, :] = 0.9  # outside the crop
        outside = compute_metrics(DisparityMap(vals), gt, CAM, cfg)
        assert inside == outside

    def test_permutation_invariance(self):
        cfg = EvalConfig(gt_kind="normalized_disparity")
        pred, gt = random_pair(5)
        rng = np.random.default_rng(0)
        perm = rng.permutation(pred.values.size)
        pred_p = DisparityMap(pred.values.ravel()[perm].reshape(pred.values.shape))
        gt_p = DisparityMap(gt.values.ravel()[perm].reshape(gt.values.shape))
        a = compute_metrics(pred, gt, CAM, cfg)
        b = compute_metrics(pred_p, gt_p, CAM, cfg)
        for name in METRIC_COLUMNS:
            assert getattr(a, name) == pytest.approx(getattr(b, name), abs=1e-12)

    def test_common_depth_scaling(self):
        # Scaling both depths by c: abs_rel, rmse_log, deltas unchanged;
        # rmse and sq_rel scale by c. Scale in disparity space (divide by c)
        # with caps wide enough not to bite.
        cfg = EvalConfig(gt_kind="normalized_disparity", min_depth_m=1e-9, depth_cap_m=1e9)
        pred, gt = random_pair(11)
        c = 2.0
        pred_s = DisparityMap(pred.values / c)
        gt_s = DisparityMap(gt.values / c)
        a = compute_metrics(pred, gt, CAM, cfg)
        b = compute_metrics(pred_s, gt_s, CAM, cfg)
        assert b.abs_rel == pytest.approx(a.abs_rel, rel=1e-12)
        assert b.rmse_log == pytest.approx(a.rmse_log, rel=1e-12)
        assert (b.delta1, b.delta2, b.delta3) == (a.delta1, a.delta2, a.delta3)
        assert b.rmse_m == pytest.approx(c * a.rmse_m, rel=1e-12)
        assert b.sq_rel == pytest.approx(c * a.sq_rel, rel=1e-12)

    def test_dimension_mismatch(self):
        pred, _ = random_pair(0)
        with pytest.raises(DomainError):
            compute_metrics(pred, np.ones((8, 8)), CAM, EvalConfig())

    def test_no_valid_pixels(self):
        pred, _ = random_pair(0)
        with pytest.raises(EvaluationError):
            compute_metrics(pred, np.zeros((16, 16)), CAM, EvalConfig())


class TestMetricSet:
    def test_rejects_broken_nesting(self):
        with pytest.raises(DomainError):
            MetricSet(0.1, 0.1, 1.0, 0.1, 10.0, 0.9, 0.8, 0.95)

    def test_mean_of(self):
        m = MetricSet.mean_of([TABLE_ROWS["Unmodified"], TABLE_ROWS["Grayscale"]])
        assert m.abs_rel == pytest.approx(0.127)


class TestCompareRows:
    def test_identical_rows_zero_deltas(self):
        rows = {"Unmodified": TABLE_ROWS["Unmodified"], "Other": TABLE_ROWS["Unmodified"]}
        rep = compare_metric_rows(rows)
        assert all(v == 0 for v in rep.deltas["Other"].values())

    def test_published_rows_reproduce_pattern(self):
        rep = compare_metric_rows(TABLE_ROWS)
        assert rep.deltas["Grayscale"]["abs_rel"] <= 0.006 + 1e-12
        assert rep.deltas["FalseColors"]["abs_rel"] <= 0.006 + 1e-12
        assert rep.deltas["SemanticRgb"]["abs_rel"] >= 0.068 - 1e-12
        assert rep.deltas["ClassAverageColors"]["abs_rel"] >= 0.068 - 1e-12
        assert rep.value_preserving_near_baseline
        assert rep.flat_color_degraded
        assert rep.rankings["abs_rel"][0] == "Unmodified"
        assert rep.rankings["delta1"][0] == "Unmodified"

    def test_single_extra_row_deltas_are_differences(self):
        rows = {"Unmodified": TABLE_ROWS["Unmodified"], "Grayscale": TABLE_ROWS["Grayscale"]}
        rep = compare_metric_rows(rows)
        assert rep.deltas["Grayscale"]["rmse_m"] == pytest.approx(6.350 - 6.125)

    def test_missing_baseline(self):
        with pytest.raises(ConfigurationError):
            compare_metric_rows({"A": TABLE_ROWS["Grayscale"], "B": TABLE_ROWS["FalseColors"]})


class TestCsv:
    def test_fixed_column_order(self):
        text = metrics_to_csv({"Unmodified": TABLE_ROWS["Unmodified"]})
        header = text.splitlines()[0]
        assert header == "condition,abs_rel,sq_rel,rmse,rmse_log,d1_all,delta1,delta2,delta3"
        assert text.splitlines()[1].startswith("Unmodified,0.124,")
