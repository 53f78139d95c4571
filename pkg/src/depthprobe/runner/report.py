"""Trial records, aggregate curves and deterministic report emission.

``emit_report`` writes ``report.json`` (everything), ``trials.csv`` (flat
table with a fixed column set), one SVG per aggregate curve and one PNG per
side-by-side panel. Emission is a pure function of the report object: no
timestamps, sorted keys, stable float formatting.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import asdict, dataclass, field, is_dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image

from ..errors import DomainError
from ..imgsynth import ImageBuffer
from ..robustfit import DisparityMap, RegressionSummary

__all__ = [
    "TrialRecord",
    "CurvePoint",
    "Curve",
    "Panel",
    "ExperimentReport",
    "aggregate_curve",
    "emit_report",
    "trials_from_csv",
    "PARAM_COLUMNS",
    "MEASURED_COLUMNS",
]

PARAM_COLUMNS = (
    "r",
    "mode",
    "offset_px",
    "angle_deg",
    "condition",
    "probe_id",
    "obstacle_id",
    "cutout_id",
    "variant",
)
_STRING_PARAMS = {"mode", "condition", "probe_id", "obstacle_id", "cutout_id", "variant"}
MEASURED_COLUMNS = (
    "mean_disparity",
    "rel_distance",
    "rel_disparity",
    "horizon_y_px",
    "horizon_shift_px",
    "true_shift_px",
    "true_horizon_y_px",
    "roll_deg_est",
    "roll_change_deg",
    "true_angle_deg",
    "detection_score",
    "implied_depth_m",
    "context_spill",
    "abs_rel",
    "sq_rel",
    "rmse_m",
    "rmse_log",
    "d1_all_pct",
    "delta1",
    "delta2",
    "delta3",
)
TRIAL_STATUSES = ("ok", "model-error", "fit-error", "skipped")


@dataclass
class TrialRecord:
    experiment: str
    image_id: str
    index: int
    params: dict = field(default_factory=dict)
    measured: dict = field(default_factory=dict)
    status: str = "ok"
    note: str = ""

    def __post_init__(self) -> None:
        if self.status not in TRIAL_STATUSES:
            raise DomainError(f"unknown trial status {self.status!r}")
        unknown = set(self.params) - set(PARAM_COLUMNS)
        if unknown:
            raise DomainError(f"unregistered param columns {sorted(unknown)}")
        unknown = set(self.measured) - set(MEASURED_COLUMNS)
        if unknown:
            raise DomainError(f"unregistered measured columns {sorted(unknown)}")


@dataclass(frozen=True)
class CurvePoint:
    x: float
    mean: float
    sd: float
    n: int


@dataclass(frozen=True)
class Curve:
    name: str
    x_label: str
    y_label: str
    points: tuple[CurvePoint, ...]


@dataclass(frozen=True, eq=False)
class Panel:
    name: str
    image: ImageBuffer
    disparity: Optional[DisparityMap] = None


@dataclass
class ExperimentReport:
    experiment: str
    spec_echo: dict
    provenance: dict
    trials: list[TrialRecord]
    curves: list[Curve] = field(default_factory=list)
    regression: Optional[RegressionSummary] = None
    regression_no_rejection: Optional[RegressionSummary] = None
    extras: dict = field(default_factory=dict)
    panels: list[Panel] = field(default_factory=list)

    def ok_trials(self) -> list[TrialRecord]:
        return [t for t in self.trials if t.status == "ok"]


def aggregate_curve(
    trials: Sequence[TrialRecord],
    param_key: str,
    value_key: str,
    name: str,
    x_label: str,
    y_label: str,
) -> Curve:
    """Mean +- SD of ``value_key`` per distinct ``param_key`` over ok trials.
    N per bin counts exactly the ok trials in it; SD is 0 for singletons."""
    bins: dict[float, list[float]] = {}
    for t in trials:
        if t.status != "ok" or param_key not in t.params or value_key not in t.measured:
            continue
        bins.setdefault(float(t.params[param_key]), []).append(float(t.measured[value_key]))
    points = tuple(
        CurvePoint(
            x=x,
            mean=float(np.mean(vals)),
            sd=float(np.std(vals)) if len(vals) >= 2 else 0.0,
            n=len(vals),
        )
        for x, vals in sorted(bins.items())
    )
    return Curve(name=name, x_label=x_label, y_label=y_label, points=points)


def _slug(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", name.lower()).strip("_")


def _jsonable(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        return _jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        raise DomainError("raw arrays do not belong in report JSON")
    return obj


def _trial_row(t: TrialRecord) -> list[str]:
    def fmt(v):
        if v is None:
            return ""
        if isinstance(v, str):
            return v
        if isinstance(v, (bool, np.bool_)):
            return str(bool(v))
        return repr(float(v))

    row = [t.experiment, t.image_id, str(t.index), t.status, t.note]
    row += [fmt(t.params.get(c)) for c in PARAM_COLUMNS]
    row += [fmt(t.measured.get(c)) for c in MEASURED_COLUMNS]
    return row


def trials_to_csv(trials: Sequence[TrialRecord]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\r\n")
    writer.writerow(["experiment", "image_id", "trial", "status", "note", *PARAM_COLUMNS, *MEASURED_COLUMNS])
    for t in trials:
        writer.writerow(_trial_row(t))
    return out.getvalue()


def trials_from_csv(path) -> list[TrialRecord]:
    """Inverse of the trials.csv serialization."""
    text = Path(path).read_text()
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    expected = ["experiment", "image_id", "trial", "status", "note", *PARAM_COLUMNS, *MEASURED_COLUMNS]
    if header != expected:
        raise DomainError(f"unexpected trials.csv header {header}")
    trials = []
    for row in reader:
        if not row:
            continue
        experiment, image_id, index, status, note = row[:5]
        params = {}
        for key, cell in zip(PARAM_COLUMNS, row[5 : 5 + len(PARAM_COLUMNS)]):
            if cell == "":
                continue
            params[key] = cell if key in _STRING_PARAMS else float(cell)
        measured = {}
        for key, cell in zip(MEASURED_COLUMNS, row[5 + len(PARAM_COLUMNS) :]):
            if cell != "":
                measured[key] = float(cell)
        trials.append(
            TrialRecord(
                experiment=experiment,
                image_id=image_id,
                index=int(index),
                params=params,
                measured=measured,
                status=status,
                note=note,
            )
        )
    return trials


# ---------------------------------------------------------------------------
# SVG curve rendering (static, deterministic; mean line plus +-1 SD band)

_SVG_W, _SVG_H = 640, 400
_MARGIN = 56


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi == lo:
        return [lo]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def curve_to_svg(curve: Curve) -> str:
    pts = curve.points
    xs = [p.x for p in pts] or [0.0]
    los = [p.mean - p.sd for p in pts] or [0.0]
    his = [p.mean + p.sd for p in pts] or [1.0]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(los), max(his)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    def sx(x):
        return _MARGIN + (x - x_lo) / (x_hi - x_lo) * (_SVG_W - 2 * _MARGIN)

    def sy(y):
        return _SVG_H - _MARGIN - (y - y_lo) / (y_hi - y_lo) * (_SVG_H - 2 * _MARGIN)

    def pt(x, y):
        return f"{sx(x):.2f},{sy(y):.2f}"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_W}" height="{_SVG_H}" '
        f'viewBox="0 0 {_SVG_W} {_SVG_H}">',
        f'<rect width="{_SVG_W}" height="{_SVG_H}" fill="white"/>',
        f'<text x="{_SVG_W / 2:.0f}" y="20" text-anchor="middle" font-size="14">{curve.name}</text>',
    ]
    if pts:
        band = " ".join(pt(p.x, p.mean + p.sd) for p in pts)
        band += " " + " ".join(pt(p.x, p.mean - p.sd) for p in reversed(pts))
        parts.append(f'<polygon points="{band}" fill="#9ecae1" fill-opacity="0.5" stroke="none"/>')
        line = " ".join(pt(p.x, p.mean) for p in pts)
        parts.append(f'<polyline points="{line}" fill="none" stroke="#08519c" stroke-width="2"/>')
        for p in pts:
            parts.append(f'<circle cx="{sx(p.x):.2f}" cy="{sy(p.mean):.2f}" r="2.5" fill="#08519c"/>')
    axis = (
        f'<line x1="{_MARGIN}" y1="{_SVG_H - _MARGIN}" x2="{_SVG_W - _MARGIN}" '
        f'y2="{_SVG_H - _MARGIN}" stroke="black"/>'
        f'<line x1="{_MARGIN}" y1="{_MARGIN}" x2="{_MARGIN}" y2="{_SVG_H - _MARGIN}" stroke="black"/>'
    )
    parts.append(axis)
    for tx in _ticks(x_lo, x_hi):
        parts.append(
            f'<text x="{sx(tx):.2f}" y="{_SVG_H - _MARGIN + 18}" text-anchor="middle" '
            f'font-size="11">{tx:.4g}</text>'
        )
    for ty in _ticks(y_lo, y_hi):
        parts.append(
            f'<text x="{_MARGIN - 8}" y="{sy(ty):.2f}" text-anchor="end" '
            f'font-size="11">{ty:.4g}</text>'
        )
    parts.append(
        f'<text x="{_SVG_W / 2:.0f}" y="{_SVG_H - 12}" text-anchor="middle" '
        f'font-size="12">{curve.x_label}</text>'
    )
    parts.append(
        f'<text x="16" y="{_SVG_H / 2:.0f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {_SVG_H / 2:.0f})">{curve.y_label}</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _panel_png(panel: Panel) -> Image.Image:
    img = panel.image.pixels
    tiles = [img]
    if panel.disparity is not None:
        vals = panel.disparity.values
        peak = vals.max()
        gray = np.zeros_like(vals) if peak <= 0 else vals / peak
        gray8 = np.rint(gray * 255).astype(np.uint8)
        tiles.append(np.repeat(gray8[:, :, None], 3, axis=2))
    sep = np.full((img.shape[0], 4, 3), 255, dtype=np.uint8)
    joined = tiles[0]
    for tile in tiles[1:]:
        joined = np.concatenate([joined, sep, tile], axis=1)
    return Image.fromarray(joined, mode="RGB")


def emit_report(report: ExperimentReport, out_dir) -> list[Path]:
    """Write the deterministic file set for a report and return the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    payload = {
        "schema_version": 1,
        "experiment": report.experiment,
        "spec_echo": _jsonable(report.spec_echo),
        "provenance": _jsonable(report.provenance),
        "regression": _jsonable(report.regression) if report.regression else None,
        "regression_no_rejection": (
            _jsonable(report.regression_no_rejection) if report.regression_no_rejection else None
        ),
        "curves": _jsonable(report.curves),
        "extras": _jsonable(report.extras),
        "trials": _jsonable(report.trials),
    }
    json_path = out / "report.json"
    json_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    written.append(json_path)

    csv_path = out / "trials.csv"
    csv_path.write_text(trials_to_csv(report.trials))
    written.append(csv_path)

    for curve in report.curves:
        path = out / f"curve_{_slug(curve.name)}.svg"
        path.write_text(curve_to_svg(curve))
        written.append(path)

    for panel in report.panels:
        path = out / f"panel_{_slug(panel.name)}.png"
        _panel_png(panel).save(path, format="PNG")
        written.append(path)

    return written
