"""The preset probe experiments.

Every experiment follows the same shape: synthesize manipulated images,
collect disparity maps from the endpoint (built-in oracle or external model),
measure geometric quantities, and aggregate into curves plus, where the
protocol calls for one, an outlier-rejecting regression. Per-trial failures
degrade to non-ok statuses; an experiment aborts only when every trial fails.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .. import __version__
from ..errors import (
    ConfigurationError,
    DepthProbeError,
    FitError,
    StatisticsError,
)
from ..geometry import (
    CameraModel,
    CenteredCoord,
    GroundPlaneModel,
    PixelRect,
    depth_on_plane,
    kitti_camera,
)
from ..imgsynth import (
    ImageBuffer,
    PhotometricMode,
    PlacementMode,
    add_shadow,
    apply_photometric,
    class_average_colors,
    crop_pitch,
    crop_roll,
    edge_ablation,
    flip_vertical,
    paste_object,
    paste_shape,
    pitch_crop_window,
    roll_crop_window,
)
from ..metrics import EvalConfig, MetricSet, compare_metric_rows, compute_metrics, metrics_to_csv
from ..modelio import (
    ModelEndpoint,
    OracleSpec,
    request_in_batches,
)
from ..robustfit import (
    HoughParams,
    RansacParams,
    estimate_horizon,
    estimate_roll,
    region_mean_disparity,
    regress_with_outlier_rejection,
)
from ..scenes import Scene, make_synthetic_cutout, render_scene_disparity, scene_oracle_spec
from .report import ExperimentReport, Panel, TrialRecord, aggregate_curve

__all__ = [
    "ExperimentKind",
    "ExperimentSpec",
    "PositionScaleParams",
    "PitchCropParams",
    "PitchHorizonParams",
    "ObstacleDisparityParams",
    "RollCropParams",
    "PhotometricParams",
    "RecognitionParams",
    "ContextFlipParams",
    "ShapeProbe",
    "EdgeProbe",
    "ShadowProbe",
    "cropped_plane",
    "rolled_plane",
    "run_position_vs_scale",
    "run_pitch_crop",
    "run_pitch_horizon_natural",
    "run_pitch_vs_obstacle_disparity",
    "run_roll_crop",
    "run_photometric_suite",
    "run_recognition_probes",
    "run_context_and_flip",
    "run_experiment",
    "rebuild_report",
]


class ExperimentKind:
    POSITION_VS_SCALE = "position_vs_scale"
    PITCH_HORIZON_NATURAL = "pitch_horizon_natural"
    PITCH_CROP = "pitch_crop"
    PITCH_VS_OBSTACLE_DISPARITY = "pitch_vs_obstacle_disparity"
    ROLL_CROP = "roll_crop"
    PHOTOMETRIC_SUITE = "photometric_suite"
    RECOGNITION_PROBES = "recognition_probes"
    CONTEXT_AND_FLIP = "context_and_flip"
    ALL = (
        POSITION_VS_SCALE,
        PITCH_HORIZON_NATURAL,
        PITCH_CROP,
        PITCH_VS_OBSTACLE_DISPARITY,
        ROLL_CROP,
        PHOTOMETRIC_SUITE,
        RECOGNITION_PROBES,
        CONTEXT_AND_FLIP,
    )


def _default_r_sweep() -> tuple[float, ...]:
    return tuple(round(1.0 + 0.1 * i, 1) for i in range(21))  # 1.0 .. 3.0


@dataclass(frozen=True)
class PositionScaleParams:
    r_values: tuple[float, ...] = field(default_factory=_default_r_sweep)
    modes: tuple[str, ...] = PlacementMode.ALL
    cutouts_per_scene: int = 2


@dataclass(frozen=True)
class PitchCropParams:
    offsets: tuple[int, ...] = (-30, -20, -10, 0, 10, 20, 30)
    crop_h_frac: float = 0.80
    crop_w_frac: float = 0.95
    ransac: RansacParams = field(default_factory=RansacParams)
    repeats: int = 5
    outlier_threshold_sd: float = 3.0


@dataclass(frozen=True)
class PitchHorizonParams:
    ransac: RansacParams = field(default_factory=RansacParams)
    repeats: int = 5
    outlier_threshold_sd: float = 3.0


@dataclass(frozen=True)
class ObstacleDisparityParams:
    offsets: tuple[int, ...] = (-30, -20, -10, 0, 10, 20, 30)
    crop_h_frac: float = 0.80
    crop_w_frac: float = 0.95


@dataclass(frozen=True)
class RollCropParams:
    angles: tuple[float, ...] = (-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0)
    crop_h_frac: float = 0.70
    crop_w_frac: float = 0.85
    band: tuple[float, float] = (0.030, 0.031)
    hough: HoughParams = field(default_factory=HoughParams)
    outlier_threshold_sd: float = 3.0


@dataclass(frozen=True)
class PhotometricParams:
    conditions: tuple[str, ...] = PhotometricMode.ALL
    eval_config: EvalConfig = field(
        default_factory=lambda: EvalConfig(gt_kind="normalized_disparity")
    )
    gt_noise_sd: float = 0.0


@dataclass(frozen=True)
class ShapeProbe:
    probe_id: str
    vertices: tuple[tuple[float, float], ...]
    fill: Union[str, tuple[int, int, int]] = "black"  # "black" | "texture" | RGB
    register_with_oracle: bool = True


@dataclass(frozen=True)
class EdgeProbe:
    probe_id: str
    keep: tuple[str, ...]
    band_px: int = 5
    register_with_oracle: bool = True


@dataclass(frozen=True)
class ShadowProbe:
    probe_id: str
    darken_frac: float = 0.6
    height_px: int = 8
    falloff: str = "linear"
    register_with_oracle: bool = True


Probe = Union[ShapeProbe, EdgeProbe, ShadowProbe]


def default_probes() -> tuple[Probe, ...]:
    tri = ((-45.0, 115.0), (45.0, 115.0), (0.0, 35.0))
    return (
        ShapeProbe("triangle_black", tri, fill="black"),
        ShapeProbe("triangle_textured", tri, fill="texture"),
        ShapeProbe("triangle_unregistered", tri, fill="black", register_with_oracle=False),
        EdgeProbe("edges_bottom_sides", keep=("bottom", "left", "right")),
        EdgeProbe("interior_only", keep=("interior",)),
        EdgeProbe("full_sprite", keep=("bottom", "left", "right", "top", "interior")),
        ShadowProbe("shadow_on", darken_frac=0.6, register_with_oracle=True),
        ShadowProbe("shadow_off", darken_frac=0.0, register_with_oracle=False),
    )


@dataclass(frozen=True)
class RecognitionParams:
    probes: tuple[Probe, ...] = field(default_factory=default_probes)


@dataclass(frozen=True)
class ContextFlipParams:
    max_other_backgrounds: int = 3


_PARAM_TYPES = {
    ExperimentKind.POSITION_VS_SCALE: PositionScaleParams,
    ExperimentKind.PITCH_HORIZON_NATURAL: PitchHorizonParams,
    ExperimentKind.PITCH_CROP: PitchCropParams,
    ExperimentKind.PITCH_VS_OBSTACLE_DISPARITY: ObstacleDisparityParams,
    ExperimentKind.ROLL_CROP: RollCropParams,
    ExperimentKind.PHOTOMETRIC_SUITE: PhotometricParams,
    ExperimentKind.RECOGNITION_PROBES: RecognitionParams,
    ExperimentKind.CONTEXT_AND_FLIP: ContextFlipParams,
}


@dataclass
class ExperimentSpec:
    kind: str
    endpoint: ModelEndpoint
    params: Optional[object] = None
    seed: int = 0
    workers: int = 1

    def __post_init__(self) -> None:
        if self.kind not in ExperimentKind.ALL:
            raise ConfigurationError(f"unknown experiment kind {self.kind!r}")
        expected = _PARAM_TYPES[self.kind]
        if self.params is None:
            self.params = expected()
        elif not isinstance(self.params, expected):
            raise ConfigurationError(
                f"{self.kind} expects {expected.__name__} params, got {type(self.params).__name__}"
            )
        if self.workers < 1:
            raise ConfigurationError(f"workers must be >= 1, got {self.workers}")


def _trial_seed(base: int, index: int) -> int:
    return int(np.random.SeedSequence([base, index]).generate_state(1)[0])


def _pmap(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _provenance(spec: ExperimentSpec) -> dict:
    return {
        "tool": "depthprobe",
        "version": __version__,
        "seed": spec.seed,
        "workers": spec.workers,
        "endpoint": spec.endpoint.describe(),
        "defaults": asdict(spec.params),
    }


def _finish_report(report: ExperimentReport) -> ExperimentReport:
    if not report.trials:
        raise ConfigurationError(f"{report.experiment}: nothing to run")
    if not report.ok_trials():
        raise DepthProbeError(
            f"{report.experiment}: every trial failed "
            f"({sum(1 for t in report.trials if t.status != 'ok')} failures)"
        )
    return report


def _scene_hint(scene: Scene, noise_sd: float = 0.0) -> Optional[OracleSpec]:
    if scene.plane is None:
        return None
    return scene_oracle_spec(scene, noise_sd=noise_sd)


def cropped_plane(plane: GroundPlaneModel, window: PixelRect) -> GroundPlaneModel:
    """Ground-plane model as seen inside a pitch-crop window: same optics,
    frame-sized to the window, horizon re-expressed in window coordinates."""
    cam = plane.camera
    crop_cam = CameraModel(
        f_px=cam.f_px,
        cx_px=window.width / 2.0,
        cy_px=window.height / 2.0,
        cam_height_m=cam.cam_height_m,
        baseline_m=cam.baseline_m,
        image_w_px=window.width,
        image_h_px=window.height,
    )
    horizon_row = plane.horizon_y + cam.cy_px
    new_horizon = (horizon_row - window.row0) - window.height / 2.0
    return GroundPlaneModel(camera=crop_cam, horizon_y=new_horizon, roll_deg=plane.roll_deg)


def rolled_plane(
    plane: GroundPlaneModel, window: PixelRect, angle_deg: float
) -> GroundPlaneModel:
    """Ground-plane model as seen inside a roll-crop window rotated by
    ``angle_deg`` about the window center: the roll angles add and the
    horizon shifts by the exact window-center offset terms."""
    cam = plane.camera
    crop_cam = CameraModel(
        f_px=cam.f_px,
        cx_px=window.width / 2.0,
        cy_px=window.height / 2.0,
        cam_height_m=cam.cam_height_m,
        baseline_m=cam.baseline_m,
        image_w_px=window.width,
        image_h_px=window.height,
    )
    t0 = math.radians(plane.roll_deg)
    t_new = math.radians(plane.roll_deg + angle_deg)
    ex = window.col0 + (window.width - 1) / 2.0 - cam.cx_px
    ey = window.row0 + (window.height - 1) / 2.0 - cam.cy_px
    new_horizon = (
        ((plane.horizon_y - ey) * math.cos(t0) + ex * math.sin(t0)) / math.cos(t_new)
        - 0.5
        + 0.5 * math.tan(t_new)
    )
    return GroundPlaneModel(
        camera=crop_cam, horizon_y=new_horizon, roll_deg=plane.roll_deg + angle_deg
    )


def _crop_obstacle_polygon(polygon, window: PixelRect):
    return tuple((c - window.col0, r - window.row0) for c, r in polygon)


def _roll_obstacle_polygon(polygon, window: PixelRect, angle_deg: float, camera: CameraModel):
    t = math.radians(angle_deg)
    ccol = window.col0 + (window.width - 1) / 2.0
    crow = window.row0 + (window.height - 1) / 2.0
    out = []
    for col, row in polygon:
        dc, dr = col - ccol, row - crow
        u = dc * math.cos(t) - dr * math.sin(t)
        v = dc * math.sin(t) + dr * math.cos(t)
        out.append((u + (window.width - 1) / 2.0, v + (window.height - 1) / 2.0))
    return tuple(out)


def _cropped_scene_hint(
    scene: Scene, window: PixelRect, angle_deg: float = 0.0
) -> Optional[OracleSpec]:
    """Oracle hint for a crop: geometry honestly re-derived from the cropped
    view. Obstacles whose ground contact leaves the window are dropped, and
    depths are re-derived from the contact row against the cropped plane."""
    if scene.plane is None:
        return None
    from ..modelio import OracleMode, OracleObstacle

    if angle_deg == 0.0:
        plane = cropped_plane(scene.plane, window)
        mapper = lambda poly: _crop_obstacle_polygon(poly, window)
    else:
        plane = rolled_plane(scene.plane, window, angle_deg)
        mapper = lambda poly: _roll_obstacle_polygon(
            poly, window, angle_deg, scene.plane.camera
        )
    obstacles = []
    for o in scene.obstacles:
        poly = mapper(o.footprint_polygon())
        contact_col = (poly[2][0] + poly[3][0]) / 2.0
        contact_row = max(p[1] for p in poly)
        if not (0 <= contact_row < window.height and 0 <= contact_col < window.width):
            continue
        contact = CenteredCoord(
            contact_col - window.width / 2.0, contact_row - window.height / 2.0
        )
        try:
            depth = depth_on_plane(plane, contact)
        except DepthProbeError:
            continue
        obstacles.append(OracleObstacle(polygon_px=poly, depth_m=depth))
    return OracleSpec(
        mode=OracleMode.GEOMETRY_AWARE, plane=plane, obstacles=tuple(obstacles)
    )


def _paste_hint(
    scene: Scene, bbox: PixelRect, contact: CenteredCoord
) -> Optional[OracleSpec]:
    """Scene hint extended with a pasted object whose depth follows the
    vertical-position cue at its (exact) placed contact point."""
    if scene.plane is None:
        return None
    from ..modelio import OracleMode, OracleObstacle

    depth = depth_on_plane(scene.plane, contact)
    base = scene_oracle_spec(scene)
    polygon = (
        (float(bbox.col0), float(bbox.row0)),
        (float(bbox.col1 - 1), float(bbox.row0)),
        (float(bbox.col1 - 1), float(bbox.row1 - 1)),
        (float(bbox.col0), float(bbox.row1 - 1)),
    )
    return replace(
        base, obstacles=base.obstacles + (OracleObstacle(polygon_px=polygon, depth_m=depth),)
    )


# ---------------------------------------------------------------------------
# Experiments


def run_position_vs_scale(spec: ExperimentSpec, scenes: Sequence[Scene]) -> ExperimentReport:
    """Paste cutouts at a sweep of relative distances under the three
    placement modes and read back the estimated relative distance
    d(r=1)/d(r) from the measurement region."""
    params: PositionScaleParams = spec.params
    if not params.r_values:
        raise ConfigurationError("empty relative-distance sweep")
    if any(r <= 0 for r in params.r_values):
        raise ConfigurationError("relative distances must be positive")
    r_values = tuple(params.r_values)
    baseline_injected = False
    if 1.0 not in r_values:
        r_values = (1.0,) + r_values
        baseline_injected = True

    trials: list[TrialRecord] = []
    index = 0
    for s_idx, scene in enumerate(scenes):
        if scene.plane is not None:
            camera = scene.plane.camera
            horizon = scene.plane.horizon_y
        else:
            camera = kitti_camera(image_w_px=scene.image.width, image_h_px=scene.image.height)
            horizon = 0.0
        for k in range(params.cutouts_per_scene):
            cutout = make_synthetic_cutout(
                _trial_seed(spec.seed, 1000 * s_idx + k) % (2**31), camera=camera
            )
            cutout_id = f"{scene.scene_id}/cut{k}"
            for mode in params.modes:
                family: list[tuple[float, object]] = []
                images, hints = [], []
                for r in r_values:
                    try:
                        res = paste_object(scene.image, cutout, mode, r, horizon)
                    except DepthProbeError as exc:
                        trials.append(
                            TrialRecord(
                                spec.kind, scene.scene_id, index,
                                params={"r": r, "mode": mode, "cutout_id": cutout_id},
                                measured={}, status="skipped", note=f"paste failed: {exc}",
                            )
                        )
                        index += 1
                        continue
                    family.append((r, res))
                    images.append(res.image)
                    hints.append(_paste_hint(scene, res.bbox, res.contact))
                if not family:
                    continue
                try:
                    maps = request_in_batches(spec.endpoint, images, hints)
                except DepthProbeError as exc:
                    for r, _res in family:
                        trials.append(
                            TrialRecord(
                                spec.kind, scene.scene_id, index,
                                params={"r": r, "mode": mode, "cutout_id": cutout_id},
                                measured={}, status="model-error", note=str(exc),
                            )
                        )
                        index += 1
                    continue
                def measure(pair):
                    _r, res_dmap = pair
                    res, dmap = res_dmap
                    try:
                        return region_mean_disparity(dmap, res.measure_mask)
                    except DepthProbeError:
                        return None

                values = _pmap(
                    measure,
                    [(r, (res, dmap)) for (r, res), dmap in zip(family, maps)],
                    spec.workers,
                )
                measured = {r: v for (r, _res), v in zip(family, values)}
                baseline = measured.get(1.0)
                for r, _res in family:
                    mean_d = measured[r]
                    if mean_d is None or not baseline or baseline <= 0 or mean_d <= 0:
                        trials.append(
                            TrialRecord(
                                spec.kind, scene.scene_id, index,
                                params={"r": r, "mode": mode, "cutout_id": cutout_id},
                                measured={}, status="fit-error",
                                note="no usable disparity in measurement region",
                            )
                        )
                    else:
                        trials.append(
                            TrialRecord(
                                spec.kind, scene.scene_id, index,
                                params={"r": r, "mode": mode, "cutout_id": cutout_id},
                                measured={
                                    "mean_disparity": mean_d,
                                    "rel_distance": baseline / mean_d,
                                },
                            )
                        )
                    index += 1

    curves = [
        aggregate_curve(
            [t for t in trials if t.params.get("mode") == mode],
            "r", "rel_distance",
            name=f"estimated relative distance ({mode})",
            x_label="true relative distance r",
            y_label="estimated relative distance",
        )
        for mode in params.modes
    ]
    report = ExperimentReport(
        experiment=spec.kind,
        spec_echo={"kind": spec.kind, "r_values": list(r_values), "modes": list(params.modes),
                   "baseline_injected": baseline_injected},
        provenance=_provenance(spec),
        trials=trials,
        curves=curves,
    )
    return _finish_report(report)


def run_pitch_crop(spec: ExperimentSpec, scenes: Sequence[Scene]) -> ExperimentReport:
    """Crop each image at vertical offsets, estimate the horizon per crop,
    and regress estimated horizon shift against true shift (minus the
    offset), with the standard 3 SD outlier rejection."""
    params: PitchCropParams = spec.params
    if not params.offsets:
        raise ConfigurationError("empty offset sweep")
    if 0 not in params.offsets:
        raise ConfigurationError("offset sweep needs 0 as the reference crop")

    trials: list[TrialRecord] = []
    index = 0
    for scene in scenes:
        w, h = scene.image.width, scene.image.height
        images, hints, windows = [], [], []
        for offset in params.offsets:
            window = pitch_crop_window(w, h, offset, params.crop_h_frac, params.crop_w_frac)
            images.append(crop_pitch(scene.image, offset, params.crop_h_frac, params.crop_w_frac))
            hints.append(_cropped_scene_hint(scene, window))
            windows.append(window)
        try:
            maps = request_in_batches(spec.endpoint, images, hints)
        except DepthProbeError as exc:
            for offset in params.offsets:
                trials.append(
                    TrialRecord(spec.kind, scene.scene_id, index,
                                params={"offset_px": offset}, measured={},
                                status="model-error", note=str(exc)))
                index += 1
            continue

        def one(i):
            ransac = replace(params.ransac, seed=_trial_seed(spec.seed, index + i) % (2**31))
            try:
                return estimate_horizon(maps[i], params=ransac, repeats=params.repeats)
            except DepthProbeError as exc:
                return exc

        results = _pmap(one, range(len(params.offsets)), spec.workers)
        ref = results[params.offsets.index(0)]
        for offset, result in zip(params.offsets, results):
            if isinstance(result, DepthProbeError) or isinstance(ref, DepthProbeError):
                note = str(result if isinstance(result, DepthProbeError) else ref)
                trials.append(
                    TrialRecord(spec.kind, scene.scene_id, index,
                                params={"offset_px": offset}, measured={},
                                status="fit-error", note=note))
            else:
                trials.append(
                    TrialRecord(
                        spec.kind, scene.scene_id, index,
                        params={"offset_px": offset},
                        measured={
                            "horizon_y_px": result.horizon_y,
                            "horizon_shift_px": result.horizon_y - ref.horizon_y,
                            "true_shift_px": float(-offset),
                        },
                    )
                )
            index += 1

    pairs = [
        (t.measured["true_shift_px"], t.measured["horizon_shift_px"])
        for t in trials
        if t.status == "ok"
    ]
    if len(pairs) < 3:
        raise StatisticsError(f"only {len(pairs)} usable crops; cannot regress")
    regression = regress_with_outlier_rejection(pairs, params.outlier_threshold_sd)
    regression_plain = regress_with_outlier_rejection(pairs, math.inf)
    curve = aggregate_curve(
        trials, "offset_px", "horizon_shift_px",
        name="estimated horizon shift vs crop offset",
        x_label="crop offset (px)", y_label="estimated horizon shift (px)",
    )
    report = ExperimentReport(
        experiment=spec.kind,
        spec_echo={"kind": spec.kind, "offsets": list(params.offsets),
                   "crop_h_frac": params.crop_h_frac, "crop_w_frac": params.crop_w_frac},
        provenance=_provenance(spec),
        trials=trials,
        curves=[curve],
        regression=regression,
        regression_no_rejection=regression_plain,
    )
    return _finish_report(report)


def run_pitch_horizon_natural(spec: ExperimentSpec, scenes: Sequence[Scene]) -> ExperimentReport:
    """Regress estimated against true horizon levels over unmodified images;
    scenes without a known horizon are skipped."""
    params: PitchHorizonParams = spec.params
    trials: list[TrialRecord] = []
    index = 0
    usable = [s for s in scenes if s.plane is not None]
    skipped = [s for s in scenes if s.plane is None]
    for scene in skipped:
        trials.append(
            TrialRecord(spec.kind, scene.scene_id, index, params={}, measured={},
                        status="skipped", note="no ground-truth horizon"))
        index += 1
    images = [s.image for s in usable]
    hints = [_scene_hint(s) for s in usable]
    maps = request_in_batches(spec.endpoint, images, hints) if usable else []
    for scene, dmap in zip(usable, maps):
        ransac = replace(params.ransac, seed=_trial_seed(spec.seed, index) % (2**31))
        try:
            est = estimate_horizon(dmap, params=ransac, repeats=params.repeats)
        except DepthProbeError as exc:
            trials.append(
                TrialRecord(spec.kind, scene.scene_id, index, params={}, measured={},
                            status="fit-error", note=str(exc)))
            index += 1
            continue
        trials.append(
            TrialRecord(
                spec.kind, scene.scene_id, index,
                params={},
                measured={
                    "horizon_y_px": est.horizon_y,
                    "true_horizon_y_px": scene.plane.horizon_y,
                },
            )
        )
        index += 1

    pairs = [
        (t.measured["true_horizon_y_px"], t.measured["horizon_y_px"])
        for t in trials
        if t.status == "ok"
    ]
    if len(pairs) < 3:
        raise StatisticsError(f"only {len(pairs)} images with ground-truth horizons")
    regression = regress_with_outlier_rejection(pairs, params.outlier_threshold_sd)
    regression_plain = regress_with_outlier_rejection(pairs, math.inf)
    report = ExperimentReport(
        experiment=spec.kind,
        spec_echo={"kind": spec.kind, "n_images": len(scenes)},
        provenance=_provenance(spec),
        trials=trials,
        regression=regression,
        regression_no_rejection=regression_plain,
    )
    return _finish_report(report)


def run_pitch_vs_obstacle_disparity(
    spec: ExperimentSpec, scenes: Sequence[Scene]
) -> ExperimentReport:
    """Mean obstacle disparity per crop offset, normalized per obstacle to
    its offset-0 value."""
    params: ObstacleDisparityParams = spec.params
    if not params.offsets or 0 not in params.offsets:
        raise ConfigurationError("offset sweep must be non-empty and contain 0")
    trials: list[TrialRecord] = []
    index = 0
    for scene in scenes:
        if not scene.obstacles:
            trials.append(
                TrialRecord(spec.kind, scene.scene_id, index, params={}, measured={},
                            status="skipped", note="no obstacle masks"))
            index += 1
            continue
        w, h = scene.image.width, scene.image.height
        windows = [
            pitch_crop_window(w, h, o, params.crop_h_frac, params.crop_w_frac)
            for o in params.offsets
        ]
        images = [
            crop_pitch(scene.image, o, params.crop_h_frac, params.crop_w_frac)
            for o in params.offsets
        ]
        hints = [_cropped_scene_hint(scene, win) for win in windows]
        try:
            maps = request_in_batches(spec.endpoint, images, hints)
        except DepthProbeError as exc:
            for offset in params.offsets:
                trials.append(
                    TrialRecord(spec.kind, scene.scene_id, index,
                                params={"offset_px": offset}, measured={},
                                status="model-error", note=str(exc)))
                index += 1
            continue
        for obstacle in scene.obstacles:
            full_mask = obstacle.measure_mask(h, w)
            means = {}
            for offset, window, dmap in zip(params.offsets, windows, maps):
                sub = full_mask[window.slices()]
                if not sub.any():
                    means[offset] = None
                    continue
                try:
                    means[offset] = region_mean_disparity(dmap, sub)
                except DepthProbeError:
                    means[offset] = None
            ref = means.get(0)
            for offset in params.offsets:
                mean_d = means[offset]
                if mean_d is None or not ref or ref <= 0:
                    trials.append(
                        TrialRecord(
                            spec.kind, scene.scene_id, index,
                            params={"offset_px": offset, "obstacle_id": obstacle.obstacle_id},
                            measured={}, status="skipped",
                            note="obstacle mask empty or unmeasurable in crop",
                        )
                    )
                else:
                    trials.append(
                        TrialRecord(
                            spec.kind, scene.scene_id, index,
                            params={"offset_px": offset, "obstacle_id": obstacle.obstacle_id},
                            measured={
                                "mean_disparity": mean_d,
                                "rel_disparity": mean_d / ref,
                            },
                        )
                    )
                index += 1

    curve = aggregate_curve(
        trials, "offset_px", "rel_disparity",
        name="relative obstacle disparity vs crop offset",
        x_label="crop offset (px)", y_label="obstacle disparity relative to offset 0",
    )
    report = ExperimentReport(
        experiment=spec.kind,
        spec_echo={"kind": spec.kind, "offsets": list(params.offsets)},
        provenance=_provenance(spec),
        trials=trials,
        curves=[curve],
    )
    return _finish_report(report)


def run_roll_crop(spec: ExperimentSpec, scenes: Sequence[Scene]) -> ExperimentReport:
    """Crop at a sweep of roll angles, estimate the road-surface angle from
    each disparity map, and regress the change against the true angle."""
    params: RollCropParams = spec.params
    if not params.angles:
        raise ConfigurationError("empty roll-angle sweep")
    if 0.0 not in params.angles:
        raise ConfigurationError("angle sweep needs 0 as the reference")
    trials: list[TrialRecord] = []
    index = 0
    for scene in scenes:
        w, h = scene.image.width, scene.image.height
        window = roll_crop_window(w, h, params.crop_h_frac, params.crop_w_frac)
        images, hints = [], []
        for angle in params.angles:
            images.append(crop_roll(scene.image, angle, params.crop_h_frac, params.crop_w_frac))
            hints.append(_cropped_scene_hint(scene, window, angle_deg=angle))
        try:
            maps = request_in_batches(spec.endpoint, images, hints)
        except DepthProbeError as exc:
            for angle in params.angles:
                trials.append(
                    TrialRecord(spec.kind, scene.scene_id, index,
                                params={"angle_deg": angle}, measured={},
                                status="model-error", note=str(exc)))
                index += 1
            continue
        estimates = []
        for dmap in maps:
            try:
                estimates.append(estimate_roll(dmap, band=params.band, hough=params.hough))
            except DepthProbeError as exc:
                estimates.append(exc)
        ref = estimates[params.angles.index(0.0)]
        for angle, est in zip(params.angles, estimates):
            if isinstance(est, DepthProbeError) or isinstance(ref, DepthProbeError):
                note = str(est if isinstance(est, DepthProbeError) else ref)
                trials.append(
                    TrialRecord(spec.kind, scene.scene_id, index,
                                params={"angle_deg": angle}, measured={},
                                status="fit-error", note=note))
            else:
                trials.append(
                    TrialRecord(
                        spec.kind, scene.scene_id, index,
                        params={"angle_deg": angle},
                        measured={
                            "roll_deg_est": est.angle_deg,
                            "roll_change_deg": est.angle_deg - ref.angle_deg,
                            "true_angle_deg": float(angle),
                        },
                    )
                )
            index += 1

    pairs = [
        (t.measured["true_angle_deg"], t.measured["roll_change_deg"])
        for t in trials
        if t.status == "ok"
    ]
    if len(pairs) < 3:
        raise StatisticsError(f"only {len(pairs)} usable roll crops; cannot regress")
    regression = regress_with_outlier_rejection(pairs, params.outlier_threshold_sd)
    regression_plain = regress_with_outlier_rejection(pairs, math.inf)
    curve = aggregate_curve(
        trials, "angle_deg", "roll_change_deg",
        name="estimated roll change vs crop angle",
        x_label="crop angle (deg)", y_label="estimated roll change (deg)",
    )
    report = ExperimentReport(
        experiment=spec.kind,
        spec_echo={"kind": spec.kind, "angles": list(params.angles), "band": list(params.band)},
        provenance=_provenance(spec),
        trials=trials,
        curves=[curve],
        regression=regression,
        regression_no_rejection=regression_plain,
    )
    return _finish_report(report)


def run_photometric_suite(spec: ExperimentSpec, scenes: Sequence[Scene]) -> ExperimentReport:
    """Evaluate the metric suite per photometric condition. Ground truth
    comes from the scene (dataset rasters, or the scene's own geometry for
    synthetic scenes). Conditions lacking auxiliary inputs are reported as
    skipped, never silently dropped."""
    params: PhotometricParams = spec.params
    if not params.conditions:
        raise ConfigurationError("no photometric conditions requested")
    cfg = params.eval_config
    trials: list[TrialRecord] = []
    skipped_conditions: dict[str, str] = {}
    per_condition: dict[str, list[MetricSet]] = {}
    index = 0

    with_semantic = [s for s in scenes if s.semantic is not None]
    class_colors = None
    if PhotometricMode.CLASS_AVERAGE_COLORS in params.conditions and with_semantic:
        class_colors = class_average_colors(
            [s.image for s in with_semantic], [s.semantic for s in with_semantic]
        )

    def scene_gt(scene: Scene, seed: int):
        if cfg.gt_kind == "normalized_disparity":
            if scene.gt_disparity is not None:
                return scene.gt_disparity
            if scene.plane is not None:
                return render_scene_disparity(scene, noise_sd=params.gt_noise_sd, seed=seed)
            return None
        return scene.gt_depth

    for condition in params.conditions:
        needs_semantic = condition in (
            PhotometricMode.FALSE_COLORS,
            PhotometricMode.CLASS_AVERAGE_COLORS,
            PhotometricMode.SEMANTIC_RGB,
        )
        cond_scenes = []
        for scene in scenes:
            if needs_semantic and scene.semantic is None:
                continue
            cond_scenes.append(scene)
        if not cond_scenes:
            skipped_conditions[condition] = "no scenes with the required semantic maps"
            continue
        images, hints, usable = [], [], []
        for scene in cond_scenes:
            try:
                img = apply_photometric(
                    scene.image, condition, semantic=scene.semantic, class_colors=class_colors
                )
            except DepthProbeError as exc:
                trials.append(
                    TrialRecord(spec.kind, scene.scene_id, index,
                                params={"condition": condition}, measured={},
                                status="skipped", note=str(exc)))
                index += 1
                continue
            images.append(img)
            hints.append(_scene_hint(scene))
            usable.append(scene)
        if not images:
            skipped_conditions[condition] = "photometric conversion failed for all scenes"
            continue
        try:
            maps = request_in_batches(spec.endpoint, images, hints)
        except DepthProbeError as exc:
            for scene in usable:
                trials.append(
                    TrialRecord(spec.kind, scene.scene_id, index,
                                params={"condition": condition}, measured={},
                                status="model-error", note=str(exc)))
                index += 1
            continue
        for scene, dmap in zip(usable, maps):
            gt = scene_gt(scene, seed=_trial_seed(spec.seed, hash(scene.scene_id) % 2**31))
            if gt is None:
                trials.append(
                    TrialRecord(spec.kind, scene.scene_id, index,
                                params={"condition": condition}, measured={},
                                status="skipped", note="no ground truth for scene"))
                index += 1
                continue
            camera = scene.plane.camera if scene.plane is not None else None
            if camera is None:
                trials.append(
                    TrialRecord(spec.kind, scene.scene_id, index,
                                params={"condition": condition}, measured={},
                                status="skipped", note="no camera model for scene"))
                index += 1
                continue
            try:
                ms = compute_metrics(dmap, gt, camera, cfg)
            except DepthProbeError as exc:
                trials.append(
                    TrialRecord(spec.kind, scene.scene_id, index,
                                params={"condition": condition}, measured={},
                                status="fit-error", note=str(exc)))
                index += 1
                continue
            per_condition.setdefault(condition, []).append(ms)
            trials.append(
                TrialRecord(spec.kind, scene.scene_id, index,
                            params={"condition": condition}, measured=ms.as_dict()))
            index += 1

    rows = {
        condition: MetricSet.mean_of(sets) for condition, sets in per_condition.items() if sets
    }
    extras: dict = {"skipped_conditions": skipped_conditions}
    if rows:
        extras["metric_rows"] = {c: ms.as_dict() for c, ms in rows.items()}
        extras["metrics_csv"] = metrics_to_csv(rows)
    if len(rows) >= 2 and any(
        c.lower().replace("_", "") in ("unmodified",) for c in rows
    ):
        comparison = compare_metric_rows(rows)
        extras["comparison"] = {
            "baseline": comparison.baseline,
            "deltas": comparison.deltas,
            "rankings": comparison.rankings,
            "value_preserving_near_baseline": comparison.value_preserving_near_baseline,
            "flat_color_degraded": comparison.flat_color_degraded,
        }
    report = ExperimentReport(
        experiment=spec.kind,
        spec_echo={"kind": spec.kind, "conditions": list(params.conditions),
                   "eval": asdict(cfg)},
        provenance=_provenance(spec),
        trials=trials,
        extras=extras,
    )
    return _finish_report(report)


def _measure_detection(dmap, footprint: np.ndarray, exclude: np.ndarray) -> float:
    """Mean disparity under the footprint minus the ground disparity at the
    same rows, weighting ground rows by the footprint's per-row pixel counts
    so the comparison is unbiased for non-rectangular footprints."""
    cols = np.nonzero(footprint.any(axis=0))[0]
    pad = 4
    guard = np.zeros_like(footprint)
    guard[:, max(0, cols.min() - pad) : cols.max() + 1 + pad] = True
    ground_mask = ~guard & ~exclude & dmap.valid_mask()
    valid_fp = footprint & dmap.valid_mask()
    score_num = 0.0
    score_den = 0
    for row in np.nonzero(valid_fp.any(axis=1))[0]:
        fp_row = valid_fp[row]
        gnd_row = ground_mask[row]
        if not gnd_row.any():
            continue
        n = int(fp_row.sum())
        score_num += n * (
            float(dmap.values[row][fp_row].mean()) - float(dmap.values[row][gnd_row].mean())
        )
        score_den += n
    if score_den == 0:
        raise FitError("no footprint rows with ground pixels to compare against")
    return score_num / score_den


def run_recognition_probes(spec: ExperimentSpec, scenes: Sequence[Scene]) -> ExperimentReport:
    """Shape, edge-ablation and shadow probes: per probe, the detection
    score (footprint disparity minus ground disparity at the same rows) and
    the distance implied by the footprint's lowest point."""
    params: RecognitionParams = spec.params
    if not params.probes:
        raise ConfigurationError("no probes configured")
    from ..modelio import OracleMode, OracleObstacle

    trials: list[TrialRecord] = []
    panels: list[Panel] = []
    index = 0
    for s_idx, scene in enumerate(scenes):
        if scene.plane is None:
            trials.append(
                TrialRecord(spec.kind, scene.scene_id, index, params={}, measured={},
                            status="skipped", note="probe geometry needs a known plane"))
            index += 1
            continue
        cam = scene.plane.camera
        w, h = scene.image.width, scene.image.height
        cutout = make_synthetic_cutout(
            _trial_seed(spec.seed, 7000 + s_idx) % (2**31), camera=cam
        )
        images, hints, metas = [], [], []
        for probe in params.probes:
            try:
                if isinstance(probe, ShapeProbe):
                    if probe.fill == "black":
                        fill = (10, 10, 10)
                    elif probe.fill == "texture":
                        fill = np.roll(scene.image.pixels, shift=64, axis=1)
                    else:
                        fill = probe.fill
                    shaped = paste_shape(scene.image, probe.vertices, fill)
                    image, footprint = shaped.image, shaped.mask
                    contact = shaped.contact
                    polygon = tuple(
                        (vx + w / 2.0, vy + h / 2.0) for vx, vy in probe.vertices
                    )
                elif isinstance(probe, EdgeProbe):
                    image = edge_ablation(scene.image, cutout, probe.keep, probe.band_px)
                    footprint = cutout.support()
                    bbox = cutout.support_bbox()
                    contact = cutout.ground_contact
                    polygon = (
                        (float(bbox.col0), float(bbox.row0)),
                        (float(bbox.col1 - 1), float(bbox.row0)),
                        (float(bbox.col1 - 1), float(bbox.row1 - 1)),
                        (float(bbox.col0), float(bbox.row1 - 1)),
                    )
                else:  # ShadowProbe
                    pasted = paste_object(
                        scene.image, cutout, PlacementMode.POSITION_AND_SCALE, 1.0,
                        scene.plane.horizon_y,
                    )
                    image = pasted.image
                    if probe.darken_frac > 0:
                        image = add_shadow(
                            image, pasted.bbox, probe.darken_frac, probe.height_px, probe.falloff
                        )
                    footprint = cutout.support()
                    bbox = pasted.bbox
                    contact = pasted.contact
                    polygon = (
                        (float(bbox.col0), float(bbox.row0)),
                        (float(bbox.col1 - 1), float(bbox.row0)),
                        (float(bbox.col1 - 1), float(bbox.row1 - 1)),
                        (float(bbox.col0), float(bbox.row1 - 1)),
                    )
            except DepthProbeError as exc:
                trials.append(
                    TrialRecord(spec.kind, scene.scene_id, index,
                                params={"probe_id": probe.probe_id}, measured={},
                                status="skipped", note=str(exc)))
                index += 1
                continue
            hint = scene_oracle_spec(scene)
            if probe.register_with_oracle:
                depth = depth_on_plane(scene.plane, contact)
                hint = replace(
                    hint,
                    obstacles=hint.obstacles
                    + (OracleObstacle(polygon_px=polygon, depth_m=depth),),
                )
            images.append(image)
            hints.append(hint)
            metas.append((probe, footprint, contact))
        if not images:
            continue
        try:
            maps = request_in_batches(spec.endpoint, images, hints)
        except DepthProbeError as exc:
            for probe, _f, _c in metas:
                trials.append(
                    TrialRecord(spec.kind, scene.scene_id, index,
                                params={"probe_id": probe.probe_id}, measured={},
                                status="model-error", note=str(exc)))
                index += 1
            continue
        exclude = np.zeros((h, w), dtype=bool)
        for obstacle in scene.obstacles:
            exclude |= obstacle.mask(h, w)
        for (probe, footprint, contact), dmap, image in zip(metas, maps, images):
            try:
                score = _measure_detection(dmap, footprint, exclude)
                implied = depth_on_plane(scene.plane, contact)
            except DepthProbeError as exc:
                trials.append(
                    TrialRecord(spec.kind, scene.scene_id, index,
                                params={"probe_id": probe.probe_id}, measured={},
                                status="fit-error", note=str(exc)))
                index += 1
                continue
            trials.append(
                TrialRecord(
                    spec.kind, scene.scene_id, index,
                    params={"probe_id": probe.probe_id},
                    measured={"detection_score": score, "implied_depth_m": implied},
                )
            )
            index += 1
            if s_idx == 0:
                panels.append(Panel(name=probe.probe_id, image=image, disparity=dmap))

    report = ExperimentReport(
        experiment=spec.kind,
        spec_echo={"kind": spec.kind, "probes": [p.probe_id for p in params.probes]},
        provenance=_provenance(spec),
        trials=trials,
        panels=panels,
    )
    return _finish_report(report)


def run_context_and_flip(spec: ExperimentSpec, scenes: Sequence[Scene]) -> ExperimentReport:
    """Paste the same object at the same place onto its own background,
    other backgrounds, and a vertically flipped background; also measure how
    much the paste disturbs the rest of the map (context spill)."""
    params: ContextFlipParams = spec.params
    if not scenes:
        raise ConfigurationError("context experiment needs at least one scene")
    trials: list[TrialRecord] = []
    index = 0
    for s_idx, scene in enumerate(scenes):
        if scene.plane is None:
            trials.append(
                TrialRecord(spec.kind, scene.scene_id, index, params={}, measured={},
                            status="skipped", note="needs a known plane"))
            index += 1
            continue
        cam = scene.plane.camera
        cutout = make_synthetic_cutout(
            _trial_seed(spec.seed, 9000 + s_idx) % (2**31), camera=cam
        )
        others = [s for s in scenes if s is not scene and s.plane is not None][
            : params.max_other_backgrounds
        ]
        variants: list[tuple[str, ImageBuffer, Scene]] = []
        try:
            base_paste = paste_object(
                scene.image, cutout, PlacementMode.POSITION_AND_SCALE, 1.0,
                scene.plane.horizon_y,
            )
        except DepthProbeError as exc:
            trials.append(
                TrialRecord(spec.kind, scene.scene_id, index, params={}, measured={},
                            status="skipped", note=f"baseline paste failed: {exc}"))
            index += 1
            continue
        variants.append(("same_background", base_paste.image, scene))
        for other in others:
            try:
                pasted = paste_object(
                    other.image, cutout, PlacementMode.POSITION_AND_SCALE, 1.0,
                    other.plane.horizon_y,
                )
            except DepthProbeError as exc:
                trials.append(
                    TrialRecord(spec.kind, scene.scene_id, index,
                                params={"variant": f"context_{other.scene_id}"}, measured={},
                                status="skipped", note=str(exc)))
                index += 1
                continue
            variants.append((f"context_{other.scene_id}", pasted.image, other))
        flipped_bg = flip_vertical(scene.image)
        flip_paste = paste_object(
            flipped_bg, cutout, PlacementMode.POSITION_AND_SCALE, 1.0, scene.plane.horizon_y
        )
        variants.append(("flipped_background", flip_paste.image, scene))

        images = [scene.image] + [img for _n, img, _s in variants]
        hints = [_scene_hint(scene)] + [
            _paste_hint(target, base_paste.bbox, base_paste.contact)
            for _n, _img, target in variants
        ]
        try:
            maps = request_in_batches(spec.endpoint, images, hints)
        except DepthProbeError as exc:
            for name, _img, _t in variants:
                trials.append(
                    TrialRecord(spec.kind, scene.scene_id, index,
                                params={"variant": name}, measured={},
                                status="model-error", note=str(exc)))
                index += 1
            continue
        clean_map, variant_maps = maps[0], maps[1:]
        support = cutout.support()
        baseline = None
        for (name, _img, _target), dmap in zip(variants, variant_maps):
            try:
                mean_d = region_mean_disparity(dmap, base_paste.measure_mask)
            except DepthProbeError as exc:
                trials.append(
                    TrialRecord(spec.kind, scene.scene_id, index,
                                params={"variant": name}, measured={},
                                status="fit-error", note=str(exc)))
                index += 1
                continue
            if name == "same_background":
                baseline = mean_d
            measured = {"mean_disparity": mean_d}
            if baseline:
                measured["rel_disparity"] = mean_d / baseline
            if name == "same_background":
                spill = float(np.mean(np.abs(dmap.values[~support] - clean_map.values[~support])))
                measured["context_spill"] = spill
            trials.append(
                TrialRecord(spec.kind, scene.scene_id, index,
                            params={"variant": name}, measured=measured))
            index += 1

    report = ExperimentReport(
        experiment=spec.kind,
        spec_echo={"kind": spec.kind},
        provenance=_provenance(spec),
        trials=trials,
    )
    return _finish_report(report)


def oracle_bracket_flags(
    probe: ExperimentReport,
    fixed: ExperimentReport,
    geometry: ExperimentReport,
    tol: float = 1e-9,
) -> dict:
    """Whether an endpoint's regression slope lies inside the analytic
    bracket slope(fixed) <= slope <= slope(geometry). The flag is reported
    evidence, never an assumption."""
    for name, report in (("probe", probe), ("fixed", fixed), ("geometry", geometry)):
        if report.regression is None:
            raise ConfigurationError(f"{name} report carries no regression to bracket")
    lo = fixed.regression.slope
    hi = geometry.regression.slope
    slope = probe.regression.slope
    return {
        "fixed_prior_slope": lo,
        "probe_slope": slope,
        "geometry_aware_slope": hi,
        "within_bracket": bool(lo - tol <= slope <= hi + tol),
    }


_RUNNERS = {
    ExperimentKind.POSITION_VS_SCALE: run_position_vs_scale,
    ExperimentKind.PITCH_HORIZON_NATURAL: run_pitch_horizon_natural,
    ExperimentKind.PITCH_CROP: run_pitch_crop,
    ExperimentKind.PITCH_VS_OBSTACLE_DISPARITY: run_pitch_vs_obstacle_disparity,
    ExperimentKind.ROLL_CROP: run_roll_crop,
    ExperimentKind.PHOTOMETRIC_SUITE: run_photometric_suite,
    ExperimentKind.RECOGNITION_PROBES: run_recognition_probes,
    ExperimentKind.CONTEXT_AND_FLIP: run_context_and_flip,
}


def run_experiment(spec: ExperimentSpec, scenes: Sequence[Scene]) -> ExperimentReport:
    return _RUNNERS[spec.kind](spec, scenes)


# ---------------------------------------------------------------------------
# Rebuilding reports from a flat trial table (the `report` CLI path)

_CURVE_SPECS = {
    ExperimentKind.PITCH_CROP: (
        ("offset_px", "horizon_shift_px", "estimated horizon shift vs crop offset",
         "crop offset (px)", "estimated horizon shift (px)"),
    ),
    ExperimentKind.PITCH_VS_OBSTACLE_DISPARITY: (
        ("offset_px", "rel_disparity", "relative obstacle disparity vs crop offset",
         "crop offset (px)", "obstacle disparity relative to offset 0"),
    ),
    ExperimentKind.ROLL_CROP: (
        ("angle_deg", "roll_change_deg", "estimated roll change vs crop angle",
         "crop angle (deg)", "estimated roll change (deg)"),
    ),
}
_REGRESSION_SPECS = {
    ExperimentKind.PITCH_CROP: ("true_shift_px", "horizon_shift_px"),
    ExperimentKind.PITCH_HORIZON_NATURAL: ("true_horizon_y_px", "horizon_y_px"),
    ExperimentKind.ROLL_CROP: ("true_angle_deg", "roll_change_deg"),
}


def rebuild_report(trials: Sequence[TrialRecord]) -> ExperimentReport:
    """Reconstruct curves and regressions from a trial table alone; the
    report is a pure function of its trials."""
    if not trials:
        raise ConfigurationError("no trials to rebuild from")
    kind = trials[0].experiment
    curves = []
    if kind == ExperimentKind.POSITION_VS_SCALE:
        modes = sorted({t.params["mode"] for t in trials if "mode" in t.params})
        for mode in modes:
            curves.append(
                aggregate_curve(
                    [t for t in trials if t.params.get("mode") == mode],
                    "r", "rel_distance",
                    name=f"estimated relative distance ({mode})",
                    x_label="true relative distance r",
                    y_label="estimated relative distance",
                )
            )
    for spec_row in _CURVE_SPECS.get(kind, ()):
        curves.append(aggregate_curve(list(trials), *spec_row))
    regression = regression_plain = None
    if kind in _REGRESSION_SPECS:
        x_key, y_key = _REGRESSION_SPECS[kind]
        pairs = [
            (t.measured[x_key], t.measured[y_key])
            for t in trials
            if t.status == "ok" and x_key in t.measured and y_key in t.measured
        ]
        if len(pairs) >= 3:
            regression = regress_with_outlier_rejection(pairs, 3.0)
            regression_plain = regress_with_outlier_rejection(pairs, math.inf)
    return ExperimentReport(
        experiment=kind,
        spec_echo={"kind": kind, "rebuilt_from": "trials.csv"},
        provenance={"tool": "depthprobe", "version": __version__, "rebuilt": True},
        trials=list(trials),
        curves=curves,
        regression=regression,
        regression_no_rejection=regression_plain,
    )
