"""Robust extraction of geometry from disparity maps.

Horizon level via a RANSAC line fit over (row, disparity) pairs, roll angle
via a Hough vote over an iso-disparity band, plus the outlier-rejecting
regression used to summarize probe results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import (
    BandEmptyError,
    DegenerateSceneError,
    DomainError,
    FitError,
    StatisticsError,
)
from .geometry import PixelRect

__all__ = [
    "DisparityMap",
    "LineFit",
    "HorizonEstimate",
    "RollEstimate",
    "RegressionSummary",
    "RansacParams",
    "HoughParams",
    "default_ground_region",
    "fit_ground_line_ransac",
    "estimate_horizon",
    "estimate_roll",
    "regress_with_outlier_rejection",
    "region_mean_disparity",
]


@dataclass(frozen=True, eq=False)
class DisparityMap:
    """Per-pixel disparity as a fraction of image width, with an optional
    validity mask. Valid values must be finite, >= 0 and < 1."""

    values: np.ndarray
    mask: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.size == 0:
            raise DomainError(f"disparity map must be 2-D and non-empty, got shape {values.shape}")
        object.__setattr__(self, "values", values)
        mask = self.mask
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)
            if mask.shape != values.shape:
                raise DomainError("validity mask shape does not match disparity values")
            object.__setattr__(self, "mask", mask)
        checked = values[mask] if mask is not None else values
        if checked.size and (
            not np.all(np.isfinite(checked)) or checked.min() < 0 or checked.max() >= 1.0
        ):
            raise DomainError("valid disparities must be finite, >= 0 and < 1")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def valid_mask(self) -> np.ndarray:
        if self.mask is None:
            return np.ones(self.values.shape, dtype=bool)
        return self.mask


@dataclass(frozen=True)
class RansacParams:
    iterations: int = 200
    inlier_tol: float = 1e-3
    min_inlier_frac: float = 0.3
    seed: int = 0
    max_points: int = 4000


@dataclass(frozen=True)
class HoughParams:
    angle_range_deg: float = 10.0
    angle_res_deg: float = 0.1
    rho_res_px: float = 1.0
    min_band_pixels: int = 50
    refine: bool = True


@dataclass(frozen=True)
class LineFit:
    """Disparity = slope * y + intercept, y in centered rows."""

    slope: float
    intercept: float
    inlier_count: int
    region: PixelRect


@dataclass(frozen=True)
class HorizonEstimate:
    horizon_y: float
    spread: float
    repeats: int


@dataclass(frozen=True)
class RollEstimate:
    angle_deg: float
    support: int


@dataclass(frozen=True)
class RegressionSummary:
    slope: float
    intercept: float
    pearson_r: float
    n_points: int
    n_outliers_removed: int
    outlier_threshold_sd: float


def default_ground_region(dmap: DisparityMap) -> PixelRect:
    """Bottom-center sampling region: central 50% of width, bottom 40% of height."""
    w, h = dmap.width, dmap.height
    rw = max(1, int(round(w * 0.5)))
    rh = max(1, int(round(h * 0.4)))
    return PixelRect(col0=(w - rw) // 2, row0=h - rh, width=rw, height=rh)


def _region_points(dmap: DisparityMap, region: PixelRect, center_row: float):
    if not region.fits_inside(dmap.width, dmap.height):
        raise DomainError(f"region {region} outside map {dmap.width}x{dmap.height}")
    rs, cs = region.slices()
    sub = dmap.values[rs, cs]
    valid = dmap.valid_mask()[rs, cs]
    rows = np.arange(region.row0, region.row1, dtype=np.float64)[:, None]
    ys = np.broadcast_to(rows - center_row, sub.shape)[valid]
    ds = sub[valid]
    return ys, ds


def fit_ground_line_ransac(
    dmap: DisparityMap,
    region: Optional[PixelRect] = None,
    params: Optional[RansacParams] = None,
    center_row: Optional[float] = None,
) -> LineFit:
    """RANSAC line fit over (centered row, disparity) pairs in ``region``.

    Two-point candidate lines are scored by inlier count at ``inlier_tol``
    and the winner is refined by least squares on its inliers. Deterministic
    for a fixed ``params.seed``.
    """
    params = params or RansacParams()
    region = region or default_ground_region(dmap)
    if center_row is None:
        center_row = dmap.height / 2.0
    ys, ds = _region_points(dmap, region, center_row)
    n = ys.size
    if n < 2:
        raise FitError(f"need at least 2 valid pixels in region, got {n}")

    rng = np.random.default_rng([params.seed, 0xD15B])
    if n > params.max_points:
        pick = rng.choice(n, size=params.max_points, replace=False)
        ys, ds = ys[pick], ds[pick]
        n = params.max_points

    ia = rng.integers(0, n, size=params.iterations)
    ib = rng.integers(0, n, size=params.iterations)
    dy = ys[ib] - ys[ia]
    usable = dy != 0
    if not np.any(usable):
        raise DegenerateSceneError("all sampled point pairs share a row")
    with np.errstate(divide="ignore", invalid="ignore"):
        slopes = np.where(usable, (ds[ib] - ds[ia]) / dy, 0.0)
    intercepts = ds[ia] - slopes * ys[ia]
    resid = np.abs(ds[None, :] - (slopes[:, None] * ys[None, :] + intercepts[:, None]))
    counts = np.where(usable, (resid <= params.inlier_tol).sum(axis=1), -1)
    best = int(np.argmax(counts))
    best_count = int(counts[best])
    if best_count < max(2, math.ceil(params.min_inlier_frac * n)):
        raise DegenerateSceneError(
            f"best candidate keeps {best_count}/{n} inliers, below "
            f"min_inlier_frac={params.min_inlier_frac}"
        )

    keep = resid[best] <= params.inlier_tol
    yk, dk = ys[keep], ds[keep]
    ym, dm = yk.mean(), dk.mean()
    denom = float(np.sum((yk - ym) ** 2))
    if denom == 0.0:
        raise DegenerateSceneError("inlier rows are constant; cannot fit a line")
    slope = float(np.sum((yk - ym) * (dk - dm)) / denom)
    intercept = float(dm - slope * ym)
    if slope <= 0:
        raise DegenerateSceneError(
            f"ground fit slope {slope:.3e} is not positive; cannot extrapolate a horizon"
        )
    return LineFit(slope=slope, intercept=intercept, inlier_count=best_count, region=region)


def estimate_horizon(
    dmap: DisparityMap,
    region: Optional[PixelRect] = None,
    params: Optional[RansacParams] = None,
    repeats: int = 5,
    center_row: Optional[float] = None,
) -> HorizonEstimate:
    """Horizon level (centered row where fitted disparity hits zero),
    averaged over ``repeats`` independently seeded RANSAC fits."""
    if repeats < 1:
        raise DomainError(f"repeats must be >= 1, got {repeats}")
    params = params or RansacParams()
    horizons = []
    for rep in range(repeats):
        fit = fit_ground_line_ransac(
            dmap, region=region, params=replace(params, seed=params.seed * 1000003 + rep),
            center_row=center_row,
        )
        horizons.append(-fit.intercept / fit.slope)
    horizons = np.asarray(horizons)
    return HorizonEstimate(
        horizon_y=float(horizons.mean()),
        spread=float(horizons.std()),
        repeats=repeats,
    )


def estimate_roll(
    dmap: DisparityMap,
    band: tuple[float, float] = (0.030, 0.031),
    hough: Optional[HoughParams] = None,
) -> RollEstimate:
    """Tilt of the iso-disparity band, via a Hough vote over line angles.

    Pixels with disparity inside ``band`` vote for (angle, offset) bins;
    the strongest line's deviation from horizontal is returned, positive when
    the band runs downhill to the right. With ``refine`` the winning bin is
    polished by least squares over its supporting pixels.
    """
    hough = hough or HoughParams()
    lo, hi = band
    if not (lo < hi):
        raise DomainError(f"band must be (low, high) with low < high, got {band}")
    sel = (dmap.values >= lo) & (dmap.values <= hi) & dmap.valid_mask()
    rows, cols = np.nonzero(sel)
    if rows.size < hough.min_band_pixels:
        raise BandEmptyError(
            f"only {rows.size} pixels inside band [{lo}, {hi}], "
            f"need {hough.min_band_pixels}"
        )
    x = cols - dmap.width / 2.0
    y = rows - dmap.height / 2.0

    n_angles = int(round(2 * hough.angle_range_deg / hough.angle_res_deg)) + 1
    angles = np.linspace(-hough.angle_range_deg, hough.angle_range_deg, n_angles)
    best = (-1, 0.0, 0.0)  # votes, angle, rho bin center
    for ang in angles:
        t = math.radians(ang)
        rho = y * math.cos(t) - x * math.sin(t)
        bins = np.floor(rho / hough.rho_res_px + 0.5).astype(np.int64)
        offset = int(bins.min())
        counts = np.bincount(bins - offset)
        peak = int(np.argmax(counts))
        votes = int(counts[peak])
        if votes > best[0]:
            best = (votes, float(ang), float((peak + offset) * hough.rho_res_px))
    votes, angle, rho_center = best
    support = votes

    if hough.refine:
        # Polish with per-column centroids of the band pixels near the winning
        # line; weighting columns equally removes the thickness-quantization
        # bias a raw least-squares over the strip would keep.
        t = math.radians(angle)
        rho = y * math.cos(t) - x * math.sin(t)
        near = np.abs(rho - rho_center) <= 4.0 * hough.rho_res_px
        xs, ysel = x[near], y[near]
        if xs.size >= 2:
            order = np.argsort(xs, kind="stable")
            xs, ysel = xs[order], ysel[order]
            uniq, starts = np.unique(xs, return_index=True)
            if uniq.size >= 2:
                centroids = np.add.reduceat(ysel, starts) / np.diff(
                    np.append(starts, ysel.size)
                )
                xm, ym = uniq.mean(), centroids.mean()
                slope = float(
                    np.sum((uniq - xm) * (centroids - ym)) / np.sum((uniq - xm) ** 2)
                )
                refined = math.degrees(math.atan(slope))
                if abs(refined) <= hough.angle_range_deg:
                    angle = refined
                    support = int(xs.size)
    return RollEstimate(angle_deg=float(angle), support=support)


def regress_with_outlier_rejection(
    pairs: Sequence[tuple[float, float]], threshold_sd: float = 3.0
) -> RegressionSummary:
    """Ordinary least squares with one pass of residual-based rejection.

    Points whose |residual| exceeds ``threshold_sd`` times the residual SD
    are removed once and the line refit; Pearson's r is computed on the
    retained points. ``threshold_sd=inf`` reduces to plain OLS.
    """
    arr = np.asarray(pairs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DomainError(f"pairs must be an (n, 2) sequence, got shape {arr.shape}")
    if arr.shape[0] < 3:
        raise StatisticsError(f"need at least 3 pairs, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("pairs must be finite")

    def ols(x, y):
        xm, ym = x.mean(), y.mean()
        sxx = float(np.sum((x - xm) ** 2))
        if sxx == 0.0:
            raise StatisticsError("x values are constant; slope undefined")
        slope = float(np.sum((x - xm) * (y - ym)) / sxx)
        return slope, float(ym - slope * xm)

    x, y = arr[:, 0], arr[:, 1]
    slope, intercept = ols(x, y)
    resid = y - (slope * x + intercept)
    sd = float(resid.std())
    if math.isfinite(threshold_sd) and sd > 0:
        keep = np.abs(resid) <= threshold_sd * sd
    else:
        keep = np.ones(len(x), dtype=bool)
    removed = int(len(x) - keep.sum())
    if keep.sum() < 2:
        raise StatisticsError(f"outlier rejection left {int(keep.sum())} points")
    xk, yk = x[keep], y[keep]
    slope, intercept = ols(xk, yk)

    sx = float(xk.std())
    sy = float(yk.std())
    if sy == 0.0:
        pearson = 0.0
    else:
        pearson = float(np.mean((xk - xk.mean()) * (yk - yk.mean())) / (sx * sy))
        pearson = max(-1.0, min(1.0, pearson))
    return RegressionSummary(
        slope=slope,
        intercept=intercept,
        pearson_r=pearson,
        n_points=int(keep.sum()),
        n_outliers_removed=removed,
        outlier_threshold_sd=float(threshold_sd),
    )


def region_mean_disparity(dmap: DisparityMap, mask: np.ndarray) -> float:
    """Arithmetic mean of valid disparities under a boolean mask."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != dmap.values.shape:
        raise DomainError(
            f"mask shape {mask.shape} does not match map {dmap.values.shape}"
        )
    use = mask & dmap.valid_mask()
    if not np.any(use):
        raise DomainError("mask selects no valid pixels")
    return float(dmap.values[use].mean())
