"""Landmark evaluation: normalized mean error, failure rate, AUC.

NME divides the mean per-point L2 error by a face-scale distance: the
inter-pupil distance (eye points 3 and 4 of the five-point scheme) or the
inter-ocular distance (outer eye corners 60 and 72 of the 98-point
scheme). Failure rate counts images with NME strictly above the threshold;
AUC integrates the empirical cumulative error distribution exactly over
[0, threshold] and divides by the threshold.

Landmark files are JSON arrays of
``{"image_id": str, "points": [[x, y], ...], "bbox": [x0,y0,x1,y1]?}``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import MetricError, ParameterError, ParseError

SCHEMES = {"five_point": 5, "wflw98": 98}
FIVE_POINT_EYES = (3, 4)        # nose, mouth corners, then left/right eye
WFLW_OUTER_EYE_CORNERS = (60, 72)
DEFAULT_THRESHOLD = 0.1


@dataclass(frozen=True)
class LandmarkSet:
    points: np.ndarray  # (K, 2) pixel coordinates
    scheme: str

    def __post_init__(self):
        pts = np.asarray(self.points, np.float64)
        if self.scheme not in SCHEMES:
            raise ParameterError(f"unknown scheme {self.scheme!r}; expected {sorted(SCHEMES)}")
        want = SCHEMES[self.scheme]
        if pts.shape != (want, 2):
            raise ParameterError(
                f"{self.scheme} needs {want} points of (x, y), got shape {pts.shape}"
            )
        if not np.isfinite(pts).all():
            raise MetricError("landmark coordinates must be finite")
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class MetricReport:
    nme_percent: np.ndarray       # per-image NME in percent
    nme_percent_mean: float
    fr10_percent: float
    auc10: float
    image_ids: tuple[str, ...]
    norm: str


def _norm_distance(gt: LandmarkSet, norm: str) -> float:
    if norm == "inter_pupil":
        if gt.scheme != "five_point":
            raise MetricError("inter_pupil normalization needs the five_point scheme")
        a, b = FIVE_POINT_EYES
    elif norm == "inter_ocular":
        if gt.scheme != "wflw98":
            raise MetricError("inter_ocular normalization needs the wflw98 scheme")
        a, b = WFLW_OUTER_EYE_CORNERS
    else:
        raise ParameterError(f"norm must be inter_ocular or inter_pupil, got {norm!r}")
    d = float(np.linalg.norm(gt.points[a] - gt.points[b]))
    if d == 0.0:
        raise MetricError("degenerate normalization distance (eye points coincide)")
    return d


def nme(pred: LandmarkSet, gt: LandmarkSet, norm: str) -> float:
    """Normalized mean error in percent: 100 * mean_k |pred_k - gt_k| / d_norm."""
    if pred.scheme != gt.scheme:
        raise MetricError(f"scheme mismatch: {pred.scheme} vs {gt.scheme}")
    d = _norm_distance(gt, norm)
    errors = np.linalg.norm(pred.points - gt.points, axis=1)
    return float(100.0 * errors.mean() / d)


def failure_rate(nmes, threshold: float = DEFAULT_THRESHOLD) -> float:
    """Percent of images with NME fraction strictly above the threshold."""
    arr = np.asarray(nmes, np.float64)
    if arr.size == 0:
        raise ParameterError("failure rate needs at least one NME value")
    return float(100.0 * np.count_nonzero(arr > threshold) / arr.size)


def auc(nmes, threshold: float = DEFAULT_THRESHOLD) -> float:
    """Exact area under the empirical CED over [0, threshold], normalized.

    CED(e) = |{i : nme_i <= e}| / n steps up at each value, so the integral
    is sum_i max(0, threshold - nme_i) / n and the AUC divides by the
    threshold.
    """
    arr = np.asarray(nmes, np.float64)
    if arr.size == 0:
        raise ParameterError("AUC needs at least one NME value")
    if threshold <= 0:
        raise ParameterError(f"threshold must be positive, got {threshold}")
    # per-image contribution clamped to [0, 1] so zero-error images count
    # exactly 1 and the result stays in [0, 1] to the last ulp
    per_image = np.clip(1.0 - arr / threshold, 0.0, 1.0)
    return min(1.0, float(per_image.mean()))


def ced_curve(nmes, threshold: float = DEFAULT_THRESHOLD, samples: int = 101) -> np.ndarray:
    """(samples, 2) table of (error level, CED value) for plotting."""
    arr = np.asarray(nmes, np.float64)
    levels = np.linspace(0.0, threshold, samples)
    values = (arr[None, :] <= levels[:, None]).mean(axis=1)
    return np.column_stack([levels, values])


def load_landmarks(path: str | os.PathLike) -> dict[str, LandmarkSet]:
    """Read a landmark JSON file into image_id -> LandmarkSet."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(raw, list):
        raise ParseError(f"{path}: expected a JSON array of landmark records")
    out: dict[str, LandmarkSet] = {}
    for i, rec in enumerate(raw):
        if "image_id" not in rec or "points" not in rec:
            raise ParseError(f"{path}: record {i} missing image_id/points")
        pts = np.asarray(rec["points"], np.float64)
        scheme = {5: "five_point", 98: "wflw98"}.get(pts.shape[0])
        if scheme is None or pts.ndim != 2 or pts.shape[1] != 2:
            raise ParseError(
                f"{path}: record {i} has point array of shape {pts.shape}; "
                "expected (5, 2) or (98, 2)"
            )
        image_id = str(rec["image_id"])
        if image_id in out:
            raise ParseError(f"{path}: duplicate image_id {image_id!r}")
        out[image_id] = LandmarkSet(points=pts, scheme=scheme)
    return out


def evaluate(pred_file, gt_file, norm: str,
             threshold: float = DEFAULT_THRESHOLD) -> MetricReport:
    """Per-image NME plus aggregate FR/AUC for two aligned landmark files."""
    pred = load_landmarks(pred_file)
    gt = load_landmarks(gt_file)
    missing_in_pred = sorted(set(gt) - set(pred))
    missing_in_gt = sorted(set(pred) - set(gt))
    if missing_in_pred or missing_in_gt:
        raise MetricError(
            f"image id mismatch: missing in predictions {missing_in_pred}, "
            f"missing in ground truth {missing_in_gt}"
        )
    ids = tuple(sorted(gt))
    nmes = np.array([nme(pred[i], gt[i], norm) for i in ids])
    fractions = nmes / 100.0
    return MetricReport(
        nme_percent=nmes,
        nme_percent_mean=float(nmes.mean()),
        fr10_percent=failure_rate(fractions, threshold),
        auc10=auc(fractions, threshold),
        image_ids=ids,
        norm=norm,
    )
