"""Pinhole-camera depth cues and the closed-form flat-ground disparity model.

Conventions used throughout the package:

* Pixel coordinates are (col, row) with row 0 at the top.
* Centered coordinates are offsets from the image principal point,
  x rightward-positive and y downward-positive, so a ground contact point
  has y > horizon_y.
* Disparities are dimensionless fractions of image width:
  d = f * B / (Z * W). Larger disparity means closer.
* A positive roll angle tilts the iso-disparity lines so that they run
  downhill to the right in pixel coordinates (slope dy/dx = tan(roll)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AboveHorizonError, DomainError

__all__ = [
    "CameraModel",
    "CenteredCoord",
    "GroundPlaneModel",
    "PixelRect",
    "kitti_camera",
    "depth_from_apparent_size",
    "depth_from_vertical_position",
    "depth_on_plane",
    "place_at_relative_distance",
    "ground_disparity_profile",
    "ground_disparity_field",
    "disparity_from_depth",
    "depth_from_disparity",
]


def _require_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise DomainError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera with a stereo baseline.

    ``f_px`` is the focal length in pixels, ``cam_height_m`` the height of
    the camera above the ground plane and ``baseline_m`` the stereo baseline
    used to express depth as a width-normalized disparity.
    """

    f_px: float
    cx_px: float
    cy_px: float
    cam_height_m: float
    baseline_m: float
    image_w_px: int
    image_h_px: int

    def __post_init__(self) -> None:
        for name in ("f_px", "cx_px", "cy_px", "cam_height_m", "baseline_m"):
            _require_finite(name, getattr(self, name))
        if self.f_px <= 0:
            raise DomainError(f"f_px must be positive, got {self.f_px}")
        if self.cam_height_m <= 0:
            raise DomainError(f"cam_height_m must be positive, got {self.cam_height_m}")
        if self.baseline_m <= 0:
            raise DomainError(f"baseline_m must be positive, got {self.baseline_m}")
        if self.image_w_px <= 0 or self.image_h_px <= 0:
            raise DomainError(
                f"image size must be positive, got {self.image_w_px}x{self.image_h_px}"
            )
        if not (0 <= self.cx_px < self.image_w_px):
            raise DomainError(f"cx_px {self.cx_px} outside [0, {self.image_w_px})")
        if not (0 <= self.cy_px < self.image_h_px):
            raise DomainError(f"cy_px {self.cy_px} outside [0, {self.image_h_px})")


def kitti_camera(
    f_px: float = 700.0,
    cam_height_m: float = 1.65,
    baseline_m: float = 0.54,
    image_w_px: int = 1242,
    image_h_px: int = 375,
) -> CameraModel:
    """Default camera with KITTI-like magnitudes, principal point at the
    image center. Every field can be overridden."""
    return CameraModel(
        f_px=f_px,
        cx_px=image_w_px / 2.0,
        cy_px=image_h_px / 2.0,
        cam_height_m=cam_height_m,
        baseline_m=baseline_m,
        image_w_px=image_w_px,
        image_h_px=image_h_px,
    )


@dataclass(frozen=True)
class CenteredCoord:
    """Image point as an offset from the principal point (x right, y down)."""

    x: float
    y: float

    def __post_init__(self) -> None:
        _require_finite("x", self.x)
        _require_finite("y", self.y)

    def to_pixel(self, camera: CameraModel) -> tuple[float, float]:
        """Return (col, row) pixel coordinates. Exact and invertible."""
        return (self.x + camera.cx_px, self.y + camera.cy_px)

    @classmethod
    def from_pixel(cls, camera: CameraModel, col: float, row: float) -> "CenteredCoord":
        return cls(col - camera.cx_px, row - camera.cy_px)


@dataclass(frozen=True)
class GroundPlaneModel:
    """Flat ground seen by ``camera`` with the horizon at centered row
    ``horizon_y`` and an in-image tilt of ``roll_deg`` degrees."""

    camera: CameraModel
    horizon_y: float
    roll_deg: float = 0.0

    def __post_init__(self) -> None:
        _require_finite("horizon_y", self.horizon_y)
        _require_finite("roll_deg", self.roll_deg)
        if abs(self.roll_deg) > 45.0:
            raise DomainError(f"roll_deg must be within +-45, got {self.roll_deg}")

    @property
    def horizon_row(self) -> float:
        return self.horizon_y + self.camera.cy_px


@dataclass(frozen=True)
class PixelRect:
    """Axis-aligned pixel rectangle, half-open on the far edges."""

    col0: int
    row0: int
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise DomainError(f"rectangle must have positive size, got {self}")

    @property
    def col1(self) -> int:
        return self.col0 + self.width

    @property
    def row1(self) -> int:
        return self.row0 + self.height

    def slices(self) -> tuple[slice, slice]:
        return (slice(self.row0, self.row1), slice(self.col0, self.col1))

    def fits_inside(self, width: int, height: int) -> bool:
        return 0 <= self.col0 and 0 <= self.row0 and self.col1 <= width and self.row1 <= height


def depth_from_apparent_size(camera: CameraModel, apparent_h_px: float, true_height_m: float) -> float:
    """Distance implied by the apparent-size cue: Z = f * H / h."""
    apparent_h_px = _require_finite("apparent_h_px", apparent_h_px)
    true_height_m = _require_finite("true_height_m", true_height_m)
    if apparent_h_px <= 0:
        raise DomainError(f"apparent_h_px must be positive, got {apparent_h_px}")
    if true_height_m <= 0:
        raise DomainError(f"true_height_m must be positive, got {true_height_m}")
    return camera.f_px * true_height_m / apparent_h_px


def depth_from_vertical_position(camera: CameraModel, ground_y: float, horizon_y: float) -> float:
    """Distance implied by the vertical-position cue: Z = f * Y / (y - h_y).

    ``ground_y`` is the centered row of the ground contact point; it must lie
    below the horizon.
    """
    ground_y = _require_finite("ground_y", ground_y)
    horizon_y = _require_finite("horizon_y", horizon_y)
    dy = ground_y - horizon_y
    if dy <= 0:
        raise AboveHorizonError(
            f"contact row {ground_y} is not below horizon {horizon_y}; "
            "no flat-ground solution"
        )
    return camera.f_px * camera.cam_height_m / dy


def depth_on_plane(plane: GroundPlaneModel, contact: CenteredCoord) -> float:
    """Vertical-position depth generalized to a rolled plane: the distance
    below the tilted horizon line replaces (y - h_y)."""
    theta = math.radians(plane.roll_deg)
    drop = (contact.y - plane.horizon_y) * math.cos(theta) - contact.x * math.sin(theta)
    if drop <= 0:
        raise AboveHorizonError(
            f"contact {contact} is not below the rolled horizon of {plane}"
        )
    return plane.camera.f_px * plane.camera.cam_height_m / drop


def place_at_relative_distance(
    contact: CenteredCoord, horizon_y: float, rel_dist_r: float
) -> tuple[float, CenteredCoord]:
    """Scaling and new contact point that move an object to ``rel_dist_r``
    times its current distance: s = 1/r, x' = x/r, y' = h_y + (y - h_y)/r."""
    rel_dist_r = _require_finite("rel_dist_r", rel_dist_r)
    horizon_y = _require_finite("horizon_y", horizon_y)
    if rel_dist_r <= 0:
        raise DomainError(f"rel_dist_r must be positive, got {rel_dist_r}")
    if contact.y <= horizon_y:
        raise AboveHorizonError(
            f"contact row {contact.y} is not below horizon {horizon_y}"
        )
    scale = 1.0 / rel_dist_r
    new_contact = CenteredCoord(
        contact.x / rel_dist_r,
        horizon_y + (contact.y - horizon_y) / rel_dist_r,
    )
    return scale, new_contact


def disparity_from_depth(camera: CameraModel, depth_m: float) -> float:
    """Width-normalized disparity at metric depth: d = f * B / (Z * W)."""
    depth_m = _require_finite("depth_m", depth_m)
    if depth_m <= 0:
        raise DomainError(f"depth_m must be positive, got {depth_m}")
    return camera.f_px * camera.baseline_m / (depth_m * camera.image_w_px)


def depth_from_disparity(camera: CameraModel, disparity: float) -> float:
    """Inverse of :func:`disparity_from_depth`."""
    disparity = _require_finite("disparity", disparity)
    if disparity <= 0:
        raise DomainError(f"disparity must be positive, got {disparity}")
    return camera.f_px * camera.baseline_m / (disparity * camera.image_w_px)


def ground_disparity_profile(plane: GroundPlaneModel, rows) -> np.ndarray:
    """Ground disparity along the principal column for centered rows ``rows``.

    Zero at and above the horizon, B * (y - h_y) / (Y * W) below it; linear
    in y. With a nonzero roll the profile is the x = 0 column of the field.
    """
    y = np.asarray(rows, dtype=np.float64)
    cam = plane.camera
    theta = math.radians(plane.roll_deg)
    drop = (y - plane.horizon_y) * math.cos(theta)
    scale = cam.baseline_m / (cam.cam_height_m * cam.image_w_px)
    return np.maximum(0.0, drop * scale)


def ground_disparity_field(plane: GroundPlaneModel, x, y) -> np.ndarray:
    """Ground disparity at centered coordinates (x, y), broadcasting over
    array inputs. Iso-disparity lines have slope tan(roll_deg)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    cam = plane.camera
    theta = math.radians(plane.roll_deg)
    drop = (y - plane.horizon_y) * math.cos(theta) - x * math.sin(theta)
    scale = cam.baseline_m / (cam.cam_height_m * cam.image_w_px)
    return np.maximum(0.0, drop * scale)
