import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evlign.errors import MetricError, ParameterError, ParseError
from evlign.metrics import (
    LandmarkSet,
    auc,
    ced_curve,
    evaluate,
    failure_rate,
    load_landmarks,
    nme,
)


def five_point(points):
    return LandmarkSet(points=np.asarray(points, float), scheme="five_point")


def random_five_point(rng, spread=100.0):
    return five_point(rng.uniform(0, spread, (5, 2)))


def step_integral_oracle(values, threshold):
    """Independent AUC oracle: integrate the CED step function segment by
    segment over the sorted breakpoints."""
    v = sorted(values)
    n = len(v)
    area = 0.0
    prev = 0.0
    below = 0
    for val in v:
        if val > threshold:
            break
        area += (val - prev) * below / n
        prev = val
        below += 1
    area += (threshold - prev) * below / n
    return area / threshold


class TestNme:
    def test_exact_prediction_is_zero(self, rng):
        gt = random_five_point(rng)
        assert nme(gt, gt, "inter_pupil") == 0.0

    def test_uniform_displacement_five_percent(self, rng):
        gt = random_five_point(rng)
        d = float(np.linalg.norm(gt.points[3] - gt.points[4]))
        direction = np.array([0.6, 0.8])  # unit vector
        pred = five_point(gt.points + 0.05 * d * direction)
        assert nme(pred, gt, "inter_pupil") == pytest.approx(5.0, abs=1e-9)

    def test_matches_per_point_loop_oracle(self, rng):
        for _ in range(25):
            gt = random_five_point(rng)
            pred = five_point(gt.points + rng.normal(0, 3.0, (5, 2)))
            d = math.dist(gt.points[3], gt.points[4])
            oracle = 100.0 * np.mean([
                math.dist(pred.points[k], gt.points[k]) for k in range(5)
            ]) / d
            assert nme(pred, gt, "inter_pupil") == pytest.approx(oracle, abs=1e-10)

    def test_wflw_uses_outer_eye_corners(self, rng):
        pts = rng.uniform(0, 200, (98, 2))
        gt = LandmarkSet(points=pts, scheme="wflw98")
        pred = LandmarkSet(points=pts + np.array([1.0, 0.0]), scheme="wflw98")
        d = math.dist(pts[60], pts[72])
        assert nme(pred, gt, "inter_ocular") == pytest.approx(100.0 / d, abs=1e-9)

    def test_degenerate_normalization_rejected(self):
        pts = np.zeros((5, 2))
        gt = five_point(pts)
        with pytest.raises(MetricError, match="degenerate"):
            nme(gt, gt, "inter_pupil")

    def test_scheme_mismatch_rejected(self, rng):
        gt = random_five_point(rng)
        pred = LandmarkSet(points=rng.uniform(0, 10, (98, 2)), scheme="wflw98")
        with pytest.raises(MetricError, match="mismatch"):
            nme(pred, gt, "inter_ocular")

    def test_norm_requires_matching_scheme(self, rng):
        gt = random_five_point(rng)
        with pytest.raises(MetricError, match="wflw98"):
            nme(gt, gt, "inter_ocular")

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 10**6),
           tx=st.floats(-500, 500), ty=st.floats(-500, 500),
           scale=st.floats(0.01, 100))
    def test_rigid_translation_and_scale_invariance(self, seed, tx, ty, scale):
        rng = np.random.default_rng(seed)
        gt = random_five_point(rng)
        pred = five_point(gt.points + rng.normal(0, 2.0, (5, 2)))
        base = nme(pred, gt, "inter_pupil")
        shift = np.array([tx, ty])
        moved = nme(five_point(pred.points * scale + shift),
                    five_point(gt.points * scale + shift), "inter_pupil")
        assert moved == pytest.approx(base, rel=1e-9, abs=1e-9)


class TestFailureRate:
    def test_all_zero(self):
        assert failure_rate([0.0, 0.0]) == 0.0

    def test_all_above(self):
        assert failure_rate([0.2, 0.2, 0.2]) == 100.0

    def test_boundary_is_not_failure(self):
        # strictly-greater convention
        assert failure_rate([0.05, 0.1, 0.15]) == pytest.approx(100.0 / 3.0)

    def test_empty_rejected(self):
        with pytest.raises(ParameterError):
            failure_rate([])


class TestAuc:
    def test_all_zero_is_full_area(self):
        assert auc([0.0, 0.0, 0.0]) == 1.0

    def test_all_above_threshold_is_zero(self):
        assert auc([0.5, 0.9]) == 0.0

    def test_single_half_threshold_value(self):
        assert auc([0.05]) == 0.5

    def test_matches_step_integral_oracle(self, rng):
        for _ in range(100):
            values = rng.uniform(0, 0.3, int(rng.integers(1, 40)))
            assert auc(values) == pytest.approx(step_integral_oracle(values, 0.1), abs=1e-12)

    def test_matches_refined_trapezoid(self, rng):
        values = rng.uniform(0, 0.2, 25)
        grid = np.arange(0.0, 0.1 + 1e-12, 1e-4)
        ced = (values[None, :] <= grid[:, None]).mean(axis=1)
        trapezoid = np.trapezoid(ced, grid) / 0.1
        assert abs(auc(values) - trapezoid) < 1e-3

    def test_permutation_invariance(self, rng):
        values = rng.uniform(0, 0.3, 30)
        shuffled = rng.permutation(values)
        assert auc(values) == pytest.approx(auc(shuffled), abs=1e-15)
        assert failure_rate(values) == failure_rate(shuffled)

    def test_monotonicity(self, rng):
        values = rng.uniform(0, 0.2, 30)
        worse = values + rng.uniform(0, 0.05, 30)
        assert auc(worse) <= auc(values)
        assert failure_rate(worse) >= failure_rate(values)

    def test_ced_curve_endpoints(self, rng):
        values = np.array([0.02, 0.05, 0.5])
        curve = ced_curve(values, 0.1, samples=11)
        assert curve.shape == (11, 2)
        assert curve[0, 0] == 0.0 and curve[-1, 0] == pytest.approx(0.1)
        assert curve[-1, 1] == pytest.approx(2 / 3)


def write_landmarks(path, records):
    with open(path, "w") as fh:
        json.dump(records, fh)


def record(image_id, points):
    return {"image_id": image_id, "points": np.asarray(points, float).tolist()}


class TestEvaluate:
    def test_identical_files(self, tmp_path, rng):
        recs = [record(f"img{i}", rng.uniform(0, 100, (5, 2))) for i in range(4)]
        write_landmarks(tmp_path / "a.json", recs)
        write_landmarks(tmp_path / "b.json", recs)
        report = evaluate(tmp_path / "a.json", tmp_path / "b.json", "inter_pupil")
        assert report.nme_percent_mean == 0.0
        assert report.fr10_percent == 0.0
        assert report.auc10 == 1.0

    def test_one_of_two_failing(self, tmp_path, rng):
        gt_pts = rng.uniform(50, 100, (5, 2))
        d = float(np.linalg.norm(gt_pts[3] - gt_pts[4]))
        good = gt_pts + 0.01 * d
        bad = gt_pts + 0.50 * d
        write_landmarks(tmp_path / "gt.json", [record("a", gt_pts), record("b", gt_pts)])
        write_landmarks(tmp_path / "pr.json", [record("a", good), record("b", bad)])
        report = evaluate(tmp_path / "pr.json", tmp_path / "gt.json", "inter_pupil")
        assert report.fr10_percent == 50.0

    def test_aggregates_match_recomputation(self, tmp_path, rng):
        gt_recs, pred_recs = [], []
        for i in range(30):
            pts = rng.uniform(0, 300, (5, 2))
            gt_recs.append(record(f"i{i}", pts))
            pred_recs.append(record(f"i{i}", pts + rng.normal(0, 4.0, (5, 2))))
        write_landmarks(tmp_path / "gt.json", gt_recs)
        write_landmarks(tmp_path / "pr.json", pred_recs)
        report = evaluate(tmp_path / "pr.json", tmp_path / "gt.json", "inter_pupil")
        fractions = report.nme_percent / 100.0
        assert report.nme_percent_mean == pytest.approx(report.nme_percent.mean(), abs=1e-12)
        assert report.fr10_percent == failure_rate(fractions)
        assert report.auc10 == auc(fractions)

    def test_id_mismatch_lists_missing(self, tmp_path, rng):
        pts = rng.uniform(0, 100, (5, 2))
        write_landmarks(tmp_path / "gt.json", [record("a", pts), record("b", pts)])
        write_landmarks(tmp_path / "pr.json", [record("a", pts), record("c", pts)])
        with pytest.raises(MetricError, match=r"\['b'\].*\['c'\]"):
            evaluate(tmp_path / "pr.json", tmp_path / "gt.json", "inter_pupil")

    def test_malformed_json_named(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ParseError):
            load_landmarks(path)

    def test_wrong_point_count_rejected(self, tmp_path):
        write_landmarks(tmp_path / "bad.json", [record("a", np.zeros((7, 2)))])
        with pytest.raises(ParseError, match="record 0"):
            load_landmarks(tmp_path / "bad.json")

    def test_bbox_field_is_optional_and_ignored(self, tmp_path, rng):
        pts = rng.uniform(0, 100, (5, 2))
        rec = record("a", pts)
        rec["bbox"] = [0, 0, 100, 100]
        write_landmarks(tmp_path / "gt.json", [rec])
        assert "a" in load_landmarks(tmp_path / "gt.json")


class TestLandmarkSet:
    def test_scheme_point_count_enforced(self):
        with pytest.raises(ParameterError):
            LandmarkSet(points=np.zeros((6, 2)), scheme="five_point")
        with pytest.raises(ParameterError):
            LandmarkSet(points=np.zeros((98, 2)), scheme="five_point")

    def test_unknown_scheme(self):
        with pytest.raises(ParameterError):
            LandmarkSet(points=np.zeros((5, 2)), scheme="mystery")

    def test_nonfinite_rejected(self):
        pts = np.zeros((5, 2))
        pts[0, 0] = np.nan
        with pytest.raises(MetricError):
            LandmarkSet(points=pts, scheme="five_point")
