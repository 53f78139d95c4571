"""Depth-evaluation metric suite applied between predicted and ground-truth
disparity/depth maps, plus cross-condition comparison reporting.

Formulas (over valid pixels inside the evaluation crop, depths in meters,
pred and gt depths clamped to [min_depth_m, depth_cap_m]):

* abs_rel  = mean(|z - z*| / z*)
* sq_rel   = mean((z - z*)^2 / z*)
* rmse_m   = sqrt(mean((z - z*)^2))
* rmse_log = sqrt(mean((ln z - ln z*)^2))
* delta_k  = fraction with max(z/z*, z*/z) < 1.25^k
* d1_all   = percent of pixels whose pixel-unit disparity error is both
             >= 3 px and >= 5% of the ground-truth disparity (computed on
             the unclamped disparities).
"""

from __future__ import annotations

import io
from dataclasses import dataclass, fields
from typing import Mapping, Optional, Union

import numpy as np

from .errors import ConfigurationError, DomainError, EvaluationError
from .geometry import CameraModel
from .robustfit import DisparityMap

__all__ = [
    "MetricSet",
    "EvalConfig",
    "ComparisonReport",
    "compute_metrics",
    "compare_metric_rows",
    "metrics_to_csv",
    "METRIC_COLUMNS",
]

METRIC_COLUMNS = (
    "abs_rel",
    "sq_rel",
    "rmse_m",
    "rmse_log",
    "d1_all_pct",
    "delta1",
    "delta2",
    "delta3",
)

# Lower is better for error columns, higher for the delta thresholds.
_HIGHER_IS_BETTER = {"delta1", "delta2", "delta3"}


@dataclass(frozen=True)
class MetricSet:
    abs_rel: float
    sq_rel: float
    rmse_m: float
    rmse_log: float
    d1_all_pct: float
    delta1: float
    delta2: float
    delta3: float

    def __post_init__(self) -> None:
        for name in ("abs_rel", "sq_rel", "rmse_m", "rmse_log"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be >= 0, got {getattr(self, name)}")
        if not (0.0 <= self.delta1 <= self.delta2 <= self.delta3 <= 1.0):
            raise DomainError(
                "delta thresholds must satisfy 0 <= d1 <= d2 <= d3 <= 1, got "
                f"{self.delta1}, {self.delta2}, {self.delta3}"
            )
        if not (0.0 <= self.d1_all_pct <= 100.0):
            raise DomainError(f"d1_all_pct must be in [0, 100], got {self.d1_all_pct}")

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def mean_of(cls, sets: list["MetricSet"]) -> "MetricSet":
        if not sets:
            raise DomainError("cannot average an empty list of metric sets")
        return cls(**{
            name: float(np.mean([getattr(s, name) for s in sets]))
            for name in METRIC_COLUMNS
        })


@dataclass(frozen=True)
class EvalConfig:
    """Evaluation protocol: depth clamp range, fractional crop
    (left, top, right, bottom) of the frame, and how to read ground truth."""

    depth_cap_m: float = 80.0
    min_depth_m: float = 1e-3
    eval_crop: tuple[float, float, float, float] = (0.0, 0.0, 1.0, 1.0)
    gt_kind: str = "depth_m"  # or "normalized_disparity"

    def __post_init__(self) -> None:
        if not (0 < self.min_depth_m < self.depth_cap_m):
            raise DomainError(
                f"need 0 < min_depth_m < depth_cap_m, got {self.min_depth_m}, {self.depth_cap_m}"
            )
        l, t, r, b = self.eval_crop
        if not (0.0 <= l < r <= 1.0 and 0.0 <= t < b <= 1.0):
            raise DomainError(f"eval_crop fractions invalid: {self.eval_crop}")
        if self.gt_kind not in ("depth_m", "normalized_disparity"):
            raise DomainError(f"unknown gt_kind {self.gt_kind!r}")


def _crop_mask(height: int, width: int, crop) -> np.ndarray:
    left, top, right, bottom = crop
    c0, c1 = int(round(left * width)), int(round(right * width))
    r0, r1 = int(round(top * height)), int(round(bottom * height))
    m = np.zeros((height, width), dtype=bool)
    m[r0:r1, c0:c1] = True
    return m


def compute_metrics(
    pred: DisparityMap,
    gt: Union[DisparityMap, np.ndarray],
    camera: CameraModel,
    cfg: Optional[EvalConfig] = None,
) -> MetricSet:
    """Evaluate ``pred`` against ``gt`` under the protocol in ``cfg``.

    ``gt`` is a :class:`DisparityMap` when ``cfg.gt_kind`` is
    ``normalized_disparity`` or a metric-depth array when it is ``depth_m``.
    Depth conversion uses Z = f*B/(d*W) with W taken from ``camera``.
    """
    cfg = cfg or EvalConfig()
    fb = camera.f_px * camera.baseline_m
    w_px = camera.image_w_px

    pred_vals = pred.values
    pred_valid = pred.valid_mask()

    if cfg.gt_kind == "normalized_disparity":
        if not isinstance(gt, DisparityMap):
            raise DomainError("gt_kind=normalized_disparity requires a DisparityMap")
        gt_raw = gt.values
        gt_valid = gt.valid_mask() & (gt_raw > 0)
        with np.errstate(divide="ignore"):
            gt_depth = fb / (gt_raw * w_px)
        gt_px = gt_raw * w_px
    else:
        gt_raw = np.asarray(gt, dtype=np.float64)
        gt_valid = np.isfinite(gt_raw) & (gt_raw > 0)
        gt_depth = gt_raw
        with np.errstate(divide="ignore"):
            gt_px = fb / gt_raw

    if gt_raw.shape != pred_vals.shape:
        raise DomainError(
            f"pred shape {pred_vals.shape} does not match gt shape {gt_raw.shape}"
        )

    valid = pred_valid & gt_valid & _crop_mask(*pred_vals.shape, cfg.eval_crop)
    if not np.any(valid):
        raise EvaluationError("no valid ground-truth pixels inside the evaluation crop")

    p = pred_vals[valid]
    with np.errstate(divide="ignore"):
        pred_depth = np.where(p > 0, fb / (p * w_px), cfg.depth_cap_m)
    pred_depth = np.clip(pred_depth, cfg.min_depth_m, cfg.depth_cap_m)
    z_gt = np.clip(gt_depth[valid], cfg.min_depth_m, cfg.depth_cap_m)
    pred_px = p * w_px
    g_px = gt_px[valid]

    diff = pred_depth - z_gt
    ratio = np.maximum(pred_depth / z_gt, z_gt / pred_depth)
    err_px = np.abs(pred_px - g_px)
    d1 = (err_px >= 3.0) & (err_px >= 0.05 * g_px)

    return MetricSet(
        abs_rel=float(np.mean(np.abs(diff) / z_gt)),
        sq_rel=float(np.mean(diff**2 / z_gt)),
        rmse_m=float(np.sqrt(np.mean(diff**2))),
        rmse_log=float(np.sqrt(np.mean((np.log(pred_depth) - np.log(z_gt)) ** 2))),
        d1_all_pct=float(100.0 * np.count_nonzero(d1) / d1.size),
        delta1=float(np.mean(ratio < 1.25)),
        delta2=float(np.mean(ratio < 1.25**2)),
        delta3=float(np.mean(ratio < 1.25**3)),
    )


@dataclass(frozen=True)
class ComparisonReport:
    """Per-metric deltas and rankings against the Unmodified baseline."""

    baseline: str
    deltas: dict[str, dict[str, float]]
    rankings: dict[str, list[str]]
    value_preserving_near_baseline: bool
    flat_color_degraded: bool


def _canon(name: str) -> str:
    return name.lower().replace(" ", "").replace("_", "").replace("-", "")


def compare_metric_rows(
    rows: Mapping[str, MetricSet],
    near_baseline_tol: float = 0.006,
    degraded_min: float = 0.068,
) -> ComparisonReport:
    """Compare condition rows against the "Unmodified" row.

    Flags the qualitative pattern expected when only pixel brightness drives
    the estimate: value-preserving recolorings (grayscale, false colors) stay
    within ``near_baseline_tol`` of the baseline's abs_rel, while flat-color
    conditions (semantic rgb, class-average colors) sit at least
    ``degraded_min`` above it. Conditions absent from ``rows`` do not veto
    their flag.
    """
    if len(rows) < 2:
        raise ConfigurationError("need at least 2 condition rows to compare")
    baseline_key = None
    for key in rows:
        if _canon(key) in ("unmodified", "unmodifiedimages"):
            baseline_key = key
            break
    if baseline_key is None:
        raise ConfigurationError('comparison requires an "Unmodified" row')
    base = rows[baseline_key]

    deltas = {
        cond: {
            m: getattr(ms, m) - getattr(base, m) for m in METRIC_COLUMNS
        }
        for cond, ms in rows.items()
    }
    rankings = {}
    for m in METRIC_COLUMNS:
        reverse = m in _HIGHER_IS_BETTER
        rankings[m] = sorted(rows, key=lambda c: getattr(rows[c], m), reverse=reverse)

    value_preserving = ("grayscale", "falsecolors")
    flat_color = ("semanticrgb", "classaveragecolors")
    eps = 1e-9  # thresholds are inclusive; don't let float noise flip them
    near = True
    degraded = True
    for cond in rows:
        canon = _canon(cond)
        d = deltas[cond]["abs_rel"]
        if canon in value_preserving and d > near_baseline_tol + eps:
            near = False
        if canon in flat_color and d < degraded_min - eps:
            degraded = False

    return ComparisonReport(
        baseline=baseline_key,
        deltas=deltas,
        rankings=rankings,
        value_preserving_near_baseline=near,
        flat_color_degraded=degraded,
    )


def metrics_to_csv(rows: Mapping[str, MetricSet]) -> str:
    """Serialize condition rows with the fixed column order
    condition, abs_rel, sq_rel, rmse, rmse_log, d1_all, delta1, delta2, delta3."""
    out = io.StringIO()
    out.write("condition,abs_rel,sq_rel,rmse,rmse_log,d1_all,delta1,delta2,delta3\r\n")
    for cond, ms in rows.items():
        vals = ",".join(repr(getattr(ms, m)) for m in METRIC_COLUMNS)
        out.write(f"{cond},{vals}\r\n")
    return out.getvalue()
