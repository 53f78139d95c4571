"""Synthetic road scenes with known geometry.

These provide the known-truth inputs for the oracle-bracket experiments:
an RGB rendering (sky, textured ground, boxy obstacles), the ground plane
that produced it, obstacle footprints with their depths, and a semantic map.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError
from .geometry import (
    CameraModel,
    CenteredCoord,
    GroundPlaneModel,
    PixelRect,
    depth_from_vertical_position,
    depth_on_plane,
    disparity_from_depth,
    kitti_camera,
)
from .imgsynth import ImageBuffer, ObjectCutout, SemanticMap
from .modelio import OracleMode, OracleObstacle, OracleSpec, render_oracle
from .robustfit import DisparityMap

__all__ = [
    "SceneObstacle",
    "Scene",
    "make_ground_scene",
    "make_synthetic_cutout",
    "scene_oracle_spec",
    "render_scene_disparity",
]

SKY_LABEL = 0
GROUND_LABEL = 1
OBSTACLE_LABEL_BASE = 2


@dataclass(frozen=True, eq=False)
class SceneObstacle:
    """Obstacle with a bounding-box footprint; ``depth_m`` may be None for
    dataset obstacles, whose depth the geometry-aware oracle re-derives from
    the contact row. ``mask_array`` overrides the box for irregular masks."""

    obstacle_id: str
    bbox: PixelRect
    depth_m: Optional[float] = None
    color: tuple[int, int, int] = (128, 128, 128)
    mask_array: Optional[np.ndarray] = None

    def footprint_polygon(self) -> tuple[tuple[float, float], ...]:
        b = self.bbox
        return (
            (float(b.col0), float(b.row0)),
            (float(b.col1 - 1), float(b.row0)),
            (float(b.col1 - 1), float(b.row1 - 1)),
            (float(b.col0), float(b.row1 - 1)),
        )

    def mask(self, height: int, width: int) -> np.ndarray:
        if self.mask_array is not None:
            return self.mask_array
        m = np.zeros((height, width), dtype=bool)
        m[self.bbox.slices()] = True
        return m

    def measure_mask(self, height: int, width: int) -> np.ndarray:
        if self.mask_array is not None:
            return self.mask_array
        b = self.bbox
        m = np.zeros((height, width), dtype=bool)
        m[
            b.row0 + b.height // 4 : b.row1 - b.height // 4,
            b.col0 + b.width // 4 : b.col1 - b.width // 4,
        ] = True
        return m


@dataclass(frozen=True, eq=False)
class Scene:
    """One probe-able image with whatever truth is known about it. Synthetic
    scenes know their plane exactly; dataset scenes may carry ground-truth
    depth/disparity rasters and a horizon loaded from disk."""

    scene_id: str
    image: ImageBuffer
    plane: Optional[GroundPlaneModel]
    obstacles: tuple[SceneObstacle, ...] = ()
    semantic: Optional[SemanticMap] = None
    gt_depth: Optional[np.ndarray] = None
    gt_disparity: Optional[DisparityMap] = None


def make_ground_scene(
    seed: int,
    camera: Optional[CameraModel] = None,
    n_obstacles: int = 2,
    horizon_jitter_px: float = 10.0,
    roll_deg: float = 0.0,
    avoid_disparity_band: Optional[tuple[float, float]] = None,
    obstacle_depth_range: tuple[float, float] = (9.0, 26.0),
) -> Scene:
    """Deterministic scene for a given seed: jittered horizon, textured
    ground, and boxy obstacles standing on the ground plane with plausible
    sizes for their depth. ``avoid_disparity_band`` resamples obstacle depths
    whose disparity would fall inside the given band (so roll-band fits stay
    uncontaminated)."""
    camera = camera or kitti_camera()
    rng = np.random.default_rng(seed)
    h_y = float(rng.uniform(-horizon_jitter_px, horizon_jitter_px))
    plane = GroundPlaneModel(camera, horizon_y=h_y, roll_deg=roll_deg)
    w, h = camera.image_w_px, camera.image_h_px

    x = np.arange(w, dtype=np.float64)[None, :] - camera.cx_px
    y = np.arange(h, dtype=np.float64)[:, None] - camera.cy_px
    theta = np.radians(roll_deg)
    below = ((y - h_y) * np.cos(theta) - x * np.sin(theta)) > 0

    px = np.zeros((h, w, 3), dtype=np.float64)
    t = np.clip((y - y.min()) / max(1.0, (h_y + camera.cy_px - y.min())), 0, 1.2)
    sky = np.stack(
        [140 + 70 * t, 170 + 55 * t, 220 + 25 * t], axis=-1
    ) * np.ones((1, w, 1))
    ground_base = np.array([96.0, 92.0, 86.0]) + 28.0 * np.clip((y - h_y) / 200.0, 0, 1)[..., None]
    texture = rng.normal(0.0, 9.0, size=(h, w, 1))
    ground = ground_base * np.ones((1, w, 1)) + texture
    px = np.where(below[..., None], ground, sky)

    labels = np.where(below, GROUND_LABEL, SKY_LABEL).astype(np.int64)
    palette = {SKY_LABEL: (70, 130, 180), GROUND_LABEL: (128, 64, 128)}
    names = {SKY_LABEL: "sky", GROUND_LABEL: "ground"}

    obstacles = []
    horizon_row = h_y + camera.cy_px
    for k in range(n_obstacles):
        for _ in range(64):
            depth = float(rng.uniform(*obstacle_depth_range))
            disp = disparity_from_depth(camera, depth)
            if avoid_disparity_band is None:
                break
            lo, hi = avoid_disparity_band
            if not (lo <= disp <= hi):
                break
        contact_drop = camera.f_px * camera.cam_height_m / depth
        contact_row = horizon_row + contact_drop
        if contact_row > h - 3:
            continue
        height_px = max(8, int(round(camera.f_px * 1.5 / depth)))
        width_px = max(8, int(round(camera.f_px * 1.8 / depth)))
        col_center = int(rng.uniform(0.25 * w, 0.75 * w))
        col0 = int(np.clip(col_center - width_px // 2, 0, w - width_px))
        row1 = int(round(contact_row)) + 1
        row0 = max(0, row1 - height_px)
        bbox = PixelRect(col0=col0, row0=row0, width=width_px, height=row1 - row0)
        color = tuple(int(v) for v in rng.integers(40, 220, size=3))
        label = OBSTACLE_LABEL_BASE + k
        obstacles.append(
            SceneObstacle(
                obstacle_id=f"obs{k}", bbox=bbox, depth_m=depth, color=color
            )
        )
        palette[label] = color
        names[label] = "obstacle"

    order = sorted(range(len(obstacles)), key=lambda i: obstacles[i].depth_m, reverse=True)
    for idx in order:
        obstacle = obstacles[idx]
        rs, cs = obstacle.bbox.slices()
        px[rs, cs, :] = np.array(obstacle.color, dtype=np.float64)
        shade_r0 = max(0, obstacle.bbox.row1 - 3)
        px[shade_r0 : obstacle.bbox.row1, cs, :] *= 0.45
        labels[rs, cs] = OBSTACLE_LABEL_BASE + idx

    image = ImageBuffer(np.clip(np.rint(px), 0, 255).astype(np.uint8))
    semantic = SemanticMap(labels=labels, palette=palette, names=names)
    return Scene(
        scene_id=f"scene_{seed:04d}",
        image=image,
        plane=plane,
        obstacles=tuple(obstacles),
        semantic=semantic,
    )


def make_synthetic_cutout(
    seed: int,
    camera: Optional[CameraModel] = None,
    contact_drop_px: Optional[float] = None,
    class_label: str = "car",
) -> ObjectCutout:
    """Car-like frame-aligned sprite resting on the ground, with a flat
    measurement patch around its lower body."""
    camera = camera or kitti_camera()
    rng = np.random.default_rng([seed, 0xCA9])
    w, h = camera.image_w_px, camera.image_h_px
    if contact_drop_px is None:
        contact_drop_px = float(rng.uniform(95.0, 160.0))
    contact_row = camera.cy_px + contact_drop_px
    depth = depth_from_vertical_position(camera, contact_drop_px, 0.0)
    body_h = max(12, int(round(camera.f_px * 1.5 / depth)))
    body_w = max(16, int(round(camera.f_px * 1.9 / depth)))
    col_center = int(rng.uniform(0.3 * w, 0.7 * w))
    col0 = int(np.clip(col_center - body_w // 2, 2, w - body_w - 2))
    row1 = int(round(contact_row)) + 1
    row0 = max(0, row1 - body_h)
    if row1 - row0 < 8:
        raise DomainError("contact too close to frame bottom for a cutout")

    sprite = np.zeros((h, w, 4), dtype=np.uint8)
    body = tuple(int(v) for v in rng.integers(60, 230, size=3))
    sprite[row0:row1, col0 : col0 + body_w, :3] = body
    sprite[row0:row1, col0 : col0 + body_w, 3] = 255
    # darker window band and bright light patches give the sprite texture
    win_h = max(2, body_h // 4)
    sprite[row0 + 1 : row0 + 1 + win_h, col0 + 2 : col0 + body_w - 2, :3] = (
        np.array(body, dtype=np.int64) // 3
    ).astype(np.uint8)
    light_h = max(2, body_h // 6)
    sprite[row1 - 2 * light_h : row1 - light_h, col0 + 2 : col0 + body_w // 4, :3] = (250, 230, 150)
    sprite[row1 - 2 * light_h : row1 - light_h, col0 + 3 * body_w // 4 : col0 + body_w - 2, :3] = (250, 230, 150)

    mask = np.zeros((h, w), dtype=bool)
    mask[
        row1 - max(3, body_h // 3) : row1 - 1,
        col0 + body_w // 4 : col0 + 3 * body_w // 4,
    ] = True

    return ObjectCutout(
        sprite=sprite,
        ground_contact=CenteredCoord(col0 + body_w / 2.0 - w / 2.0, (row1 - 1) - h / 2.0),
        source_id=f"synthetic_{seed}",
        class_label=class_label,
        placement_slots=("road",),
        measure_mask=mask,
    )


def scene_oracle_spec(scene: Scene, noise_sd: float = 0.0) -> OracleSpec:
    """Geometry-aware oracle description of a scene. Obstacles without a
    known depth get it re-derived from their contact row on the plane."""
    if scene.plane is None:
        raise DomainError(f"scene {scene.scene_id} has no ground-plane truth")
    cam = scene.plane.camera
    obstacles = []
    for o in scene.obstacles:
        depth = o.depth_m
        if depth is None:
            contact = CenteredCoord(
                o.bbox.col0 + o.bbox.width / 2.0 - cam.cx_px,
                (o.bbox.row1 - 1) - cam.cy_px,
            )
            depth = depth_on_plane(scene.plane, contact)
        obstacles.append(OracleObstacle(polygon_px=o.footprint_polygon(), depth_m=depth))
    return OracleSpec(
        mode=OracleMode.GEOMETRY_AWARE,
        plane=scene.plane,
        obstacles=tuple(obstacles),
        noise_sd=noise_sd,
    )


def render_scene_disparity(scene: Scene, noise_sd: float = 0.0, seed: int = 0) -> DisparityMap:
    """Ground-truth disparity for a synthetic scene."""
    return render_oracle(
        scene_oracle_spec(scene, noise_sd=noise_sd),
        scene.image.width,
        scene.image.height,
        seed=seed,
    )
