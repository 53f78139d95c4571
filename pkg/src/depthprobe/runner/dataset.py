"""On-disk dataset layout and ingestion into Scene objects.

Expected layout (all directories optional except images):

* ``images_dir``: ``<id>.png`` (8-bit RGB)
* ``cutouts_dir``: ``<id>.png`` RGBA sprite + ``<id>.json`` sidecar +
  ``<id>.mask.png`` measurement mask (see :mod:`depthprobe.imgsynth`)
* ``semantic_dir``: ``<id>.png`` paletted label raster + shared ``labels.json``
* ``gt_dir``: per image any of ``<id>.disp.png``/``.disp.json`` (normalized
  disparity, wire format), ``<id>.depth.png``/``.depth.json`` (16-bit depth,
  sidecar ``{"z_max": meters}``), ``<id>.horizon.json`` ``{"horizon_y": px}``
* ``obstacles_dir``: ``<id>.png`` grayscale mask, 0 background, k > 0 one
  obstacle each

Experiments never write into these directories.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from ..errors import ConfigurationError
from ..geometry import CameraModel, GroundPlaneModel, PixelRect, kitti_camera
from ..imgsynth import ImageBuffer, ObjectCutout, SemanticMap, load_cutout, load_semantic_map
from ..modelio import decode_disparity_response
from ..scenes import Scene, SceneObstacle

__all__ = ["DatasetLayout", "load_dataset_scenes", "load_dataset_cutouts"]

_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


@dataclass(frozen=True)
class DatasetLayout:
    images_dir: str
    cutouts_dir: Optional[str] = None
    semantic_dir: Optional[str] = None
    gt_dir: Optional[str] = None
    obstacles_dir: Optional[str] = None

    def __post_init__(self) -> None:
        images = Path(self.images_dir)
        if not images.is_dir() or not any(
            p.suffix.lower() in _IMAGE_SUFFIXES for p in images.iterdir()
        ):
            raise ConfigurationError(f"images_dir {self.images_dir} is empty or missing")


def _load_depth_raster(gt_dir: Path, image_id: str) -> Optional[np.ndarray]:
    png = gt_dir / f"{image_id}.depth.png"
    sidecar = gt_dir / f"{image_id}.depth.json"
    if not (png.exists() and sidecar.exists()):
        return None
    meta = json.loads(sidecar.read_text())
    z_max = float(meta["z_max"])
    with Image.open(png) as im:
        arr = np.asarray(im, dtype=np.float64)
    return arr / 65535.0 * z_max


def _load_obstacles(path: Path) -> tuple[SceneObstacle, ...]:
    with Image.open(path) as im:
        labels = np.asarray(im.convert("I"), dtype=np.int64)
    obstacles = []
    for label in sorted(np.unique(labels)):
        if label == 0:
            continue
        mask = labels == label
        rows = np.nonzero(mask.any(axis=1))[0]
        cols = np.nonzero(mask.any(axis=0))[0]
        bbox = PixelRect(
            col0=int(cols[0]), row0=int(rows[0]),
            width=int(cols[-1] - cols[0] + 1), height=int(rows[-1] - rows[0] + 1),
        )
        obstacles.append(
            SceneObstacle(
                obstacle_id=f"mask{int(label)}", bbox=bbox, depth_m=None, mask_array=mask
            )
        )
    return tuple(obstacles)


def load_dataset_scenes(
    layout: DatasetLayout, camera: Optional[CameraModel] = None
) -> list[Scene]:
    """Build Scenes from disk. A scene gets a ground-plane model only when a
    ground-truth horizon is available for it; the camera's intrinsics come
    from ``camera`` (default KITTI-like, resized to the first image)."""
    images_dir = Path(layout.images_dir)
    ids = sorted(
        p.stem for p in images_dir.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES
    )
    semantic_table = None
    if layout.semantic_dir:
        table_path = Path(layout.semantic_dir) / "labels.json"
        if not table_path.exists():
            raise ConfigurationError(f"semantic_dir set but {table_path} is missing")
        semantic_table = table_path

    scenes = []
    for image_id in ids:
        image = ImageBuffer.from_png(images_dir / f"{image_id}.png")
        cam = camera or kitti_camera(
            image_w_px=image.width, image_h_px=image.height
        )
        plane = None
        gt_depth = None
        gt_disparity = None
        if layout.gt_dir:
            gt_dir = Path(layout.gt_dir)
            horizon_path = gt_dir / f"{image_id}.horizon.json"
            if horizon_path.exists():
                horizon = json.loads(horizon_path.read_text())["horizon_y"]
                plane = GroundPlaneModel(cam, horizon_y=float(horizon))
            if (gt_dir / f"{image_id}.disp.png").exists():
                gt_disparity = decode_disparity_response(gt_dir, image_id)
            gt_depth = _load_depth_raster(gt_dir, image_id)

        semantic: Optional[SemanticMap] = None
        if layout.semantic_dir:
            sem_png = Path(layout.semantic_dir) / f"{image_id}.png"
            if sem_png.exists():
                semantic = load_semantic_map(sem_png, semantic_table)

        obstacles: tuple[SceneObstacle, ...] = ()
        if layout.obstacles_dir:
            obs_png = Path(layout.obstacles_dir) / f"{image_id}.png"
            if obs_png.exists():
                obstacles = _load_obstacles(obs_png)

        scenes.append(
            Scene(
                scene_id=image_id,
                image=image,
                plane=plane,
                obstacles=obstacles,
                semantic=semantic,
                gt_depth=gt_depth,
                gt_disparity=gt_disparity,
            )
        )
    return scenes


def load_dataset_cutouts(layout: DatasetLayout) -> list[ObjectCutout]:
    """Load every cutout sidecar in ``cutouts_dir``, validating that each
    references an existing sprite and mask."""
    if not layout.cutouts_dir:
        return []
    cutouts = []
    for sidecar in sorted(Path(layout.cutouts_dir).glob("*.json")):
        if sidecar.name.endswith(".mask.json"):
            continue
        cutouts.append(load_cutout(sidecar))
    return cutouts
