"""Controlled test-image synthesis: object pastes under three placement
modes, pitch/roll crops, photometric manipulations, shadow/edge/shape
probes, flips and context swaps.

All operations are deterministic and return new buffers; pixels outside an
operation's declared support region are left bit-unchanged. Centered
coordinates here are measured from the image center (W/2, H/2), matching the
default cameras in :mod:`depthprobe.geometry`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

import numpy as np
from PIL import Image, ImageDraw
from scipy import ndimage

from .errors import (
    ConfigurationError,
    CropError,
    DomainError,
    InvalidCutoutError,
    PlacementError,
)
from .geometry import CenteredCoord, PixelRect, place_at_relative_distance

__all__ = [
    "ImageBuffer",
    "ObjectCutout",
    "PlacementMode",
    "PhotometricMode",
    "SemanticMap",
    "PasteResult",
    "PastedShape",
    "paste_object",
    "pitch_crop_window",
    "roll_crop_window",
    "crop_pitch",
    "crop_roll",
    "apply_photometric",
    "class_average_colors",
    "add_shadow",
    "paste_shape",
    "edge_ablation",
    "flip_vertical",
    "context_swap",
    "load_cutout",
    "save_cutout",
    "load_semantic_map",
    "save_semantic_map",
]

EDGE_PARTS = ("bottom", "left", "right", "top", "interior")


def _iround(v: float) -> int:
    """Round half toward +inf (0.5 -> 1)."""
    return int(math.floor(v + 0.5))


def _iround_half_down(v: float) -> int:
    """Round half toward -inf (0.5 -> 0); used for contact rows so the
    rounding bias is one-sided and documented."""
    return int(math.ceil(v - 0.5))


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """8-bit RGB raster. ``pixels`` is (H, W, 3) uint8 and read-only."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3 or px.dtype != np.uint8:
            raise DomainError(
                f"pixels must be (H, W, 3) uint8, got shape {px.shape} dtype {px.dtype}"
            )
        if px.shape[0] == 0 or px.shape[1] == 0:
            raise DomainError("image must be non-empty")
        px = px.copy() if px.flags.writeable else px
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def writable_copy(self) -> np.ndarray:
        return self.pixels.copy()

    def pixels_equal(self, other: "ImageBuffer") -> bool:
        return self.pixels.shape == other.pixels.shape and bool(
            np.array_equal(self.pixels, other.pixels)
        )

    @classmethod
    def from_png(cls, path) -> "ImageBuffer":
        with Image.open(path) as im:
            return cls(np.asarray(im.convert("RGB"), dtype=np.uint8))

    def to_png(self, path) -> None:
        Image.fromarray(self.pixels, mode="RGB").save(path, format="PNG")


class PlacementMode:
    """Which of position/scale follow the relative-distance math and which
    stay frozen at their r = 1 values."""

    POSITION_AND_SCALE = "position_and_scale"
    POSITION_ONLY = "position_only"
    SCALE_ONLY = "scale_only"
    ALL = (POSITION_AND_SCALE, POSITION_ONLY, SCALE_ONLY)


class PhotometricMode:
    UNMODIFIED = "unmodified"
    GRAYSCALE = "grayscale"
    FALSE_COLORS = "false_colors"
    CLASS_AVERAGE_COLORS = "class_average_colors"
    SEMANTIC_RGB = "semantic_rgb"
    ALL = (UNMODIFIED, GRAYSCALE, FALSE_COLORS, CLASS_AVERAGE_COLORS, SEMANTIC_RGB)


@dataclass(frozen=True, eq=False)
class ObjectCutout:
    """Frame-aligned RGBA sprite with its ground contact and measurement
    region. The alpha channel defines the outline; ``ground_contact`` sits on
    the bottom edge of the alpha support (within 2 px)."""

    sprite: np.ndarray
    ground_contact: CenteredCoord
    source_id: str
    class_label: str
    placement_slots: tuple[str, ...]
    measure_mask: np.ndarray

    def __post_init__(self) -> None:
        sprite = np.asarray(self.sprite)
        if sprite.ndim != 3 or sprite.shape[2] != 4 or sprite.dtype != np.uint8:
            raise InvalidCutoutError(
                f"sprite must be (H, W, 4) uint8, got {sprite.shape} {sprite.dtype}"
            )
        mask = np.asarray(self.measure_mask, dtype=bool)
        if mask.shape != sprite.shape[:2]:
            raise InvalidCutoutError("measure_mask shape must match sprite frame")
        support = sprite[:, :, 3] > 0
        if not support.any():
            raise InvalidCutoutError("cutout has empty alpha support")
        if np.any(mask & ~support):
            raise InvalidCutoutError("measure_mask must lie inside the alpha support")
        rows = np.nonzero(support.any(axis=1))[0]
        cols = np.nonzero(support.any(axis=0))[0]
        h, w = sprite.shape[:2]
        col, row = self.ground_contact.x + w / 2.0, self.ground_contact.y + h / 2.0
        if not (rows[-1] - 2 <= row <= rows[-1] + 2):
            raise InvalidCutoutError(
                f"ground contact row {row} not on the support bottom edge {rows[-1]} +-2"
            )
        if not (cols[0] - 2 <= col <= cols[-1] + 2):
            raise InvalidCutoutError("ground contact column outside the support")
        sprite = sprite.copy() if sprite.flags.writeable else sprite
        sprite.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "sprite", sprite)
        object.__setattr__(self, "measure_mask", mask)
        object.__setattr__(self, "placement_slots", tuple(self.placement_slots))

    def support(self) -> np.ndarray:
        return self.sprite[:, :, 3] > 0

    def support_bbox(self) -> PixelRect:
        support = self.support()
        rows = np.nonzero(support.any(axis=1))[0]
        cols = np.nonzero(support.any(axis=0))[0]
        return PixelRect(
            col0=int(cols[0]), row0=int(rows[0]),
            width=int(cols[-1] - cols[0] + 1), height=int(rows[-1] - rows[0] + 1),
        )


@dataclass(frozen=True, eq=False)
class SemanticMap:
    """Integer label raster plus a label -> RGB palette (and optional names)."""

    labels: np.ndarray
    palette: Mapping[int, tuple[int, int, int]]
    names: Optional[Mapping[int, str]] = None

    def __post_init__(self) -> None:
        labels = np.asarray(self.labels)
        if labels.ndim != 2 or not np.issubdtype(labels.dtype, np.integer):
            raise DomainError("labels must be a 2-D integer raster")
        object.__setattr__(self, "labels", labels)
        missing = set(np.unique(labels).tolist()) - set(self.palette)
        if missing:
            raise ConfigurationError(f"palette missing labels {sorted(missing)}")

    def color_raster(self) -> np.ndarray:
        out = np.zeros((*self.labels.shape, 3), dtype=np.uint8)
        for label, rgb in self.palette.items():
            out[self.labels == label] = rgb
        return out


@dataclass(frozen=True, eq=False)
class PasteResult:
    image: ImageBuffer
    measure_mask: np.ndarray
    contact: CenteredCoord
    scale: float
    bbox: PixelRect


@dataclass(frozen=True, eq=False)
class PastedShape:
    image: ImageBuffer
    mask: np.ndarray
    contact: CenteredCoord


def _blend_rgba(dst: np.ndarray, rgba: np.ndarray, row0: int, col0: int) -> None:
    h, w = rgba.shape[:2]
    region = dst[row0 : row0 + h, col0 : col0 + w, :].astype(np.float64)
    alpha = rgba[:, :, 3:4].astype(np.float64) / 255.0
    out = np.rint(rgba[:, :, :3].astype(np.float64) * alpha + region * (1.0 - alpha))
    dst[row0 : row0 + h, col0 : col0 + w, :] = out.astype(np.uint8)


def _resize_rgba(rgba: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    if (rgba.shape[1], rgba.shape[0]) == size:
        return rgba
    im = Image.fromarray(rgba, mode="RGBA").resize(size, resample=Image.BILINEAR)
    return np.asarray(im, dtype=np.uint8)


def paste_object(
    background: ImageBuffer,
    cutout: ObjectCutout,
    mode: str,
    rel_dist_r: float,
    horizon_y: float,
) -> PasteResult:
    """Alpha-composite ``cutout`` onto ``background`` at relative distance
    ``rel_dist_r``.

    position_and_scale moves and scales the sprite; position_only moves it at
    scale 1; scale_only rescales it about the fixed contact point. Returns the
    composited image with the measurement mask transformed alongside.
    """
    if mode not in PlacementMode.ALL:
        raise DomainError(f"unknown placement mode {mode!r}")
    if not (isinstance(rel_dist_r, (int, float)) and math.isfinite(rel_dist_r) and rel_dist_r > 0):
        raise DomainError(f"rel_dist_r must be a positive finite number, got {rel_dist_r!r}")
    sprite = cutout.sprite
    if sprite.shape[:2] != background.pixels.shape[:2]:
        raise PlacementError(
            f"cutout frame {sprite.shape[:2]} does not match background "
            f"{background.pixels.shape[:2]}"
        )

    h, w = sprite.shape[:2]
    cx, cy = w / 2.0, h / 2.0
    contact = cutout.ground_contact
    if mode == PlacementMode.SCALE_ONLY:
        scale = 1.0 / rel_dist_r
        new_contact = contact
    else:
        scale, new_contact = place_at_relative_distance(contact, horizon_y, rel_dist_r)
        if mode == PlacementMode.POSITION_ONLY:
            scale = 1.0

    bbox = cutout.support_bbox()
    new_w = max(1, _iround(bbox.width * scale))
    new_h = max(1, _iround(bbox.height * scale))
    contact_col = contact.x + cx
    contact_row = contact.y + cy
    target_col = new_contact.x + cx
    target_row = new_contact.y + cy
    col0 = _iround(target_col - scale * (contact_col - bbox.col0))
    row0 = _iround_half_down(target_row - scale * (contact_row - bbox.row0))
    placed = PixelRect(col0, row0, new_w, new_h)
    if not placed.fits_inside(w, h):
        raise PlacementError(
            f"placement {placed} falls outside the {w}x{h} frame (r={rel_dist_r}, mode={mode})"
        )

    sub = sprite[bbox.slices()]
    sub = _resize_rgba(sub, (new_w, new_h)) if scale != 1.0 else sub
    out = background.writable_copy()
    _blend_rgba(out, sub, row0, col0)

    # Transform the measurement mask with the exact (unrounded) placement
    # map so its centroid tracks the analytic position to sub-pixel accuracy.
    placed_mask = np.zeros((h, w), dtype=bool)
    rows_dst = np.arange(row0, row0 + new_h, dtype=np.float64)
    cols_dst = np.arange(col0, col0 + new_w, dtype=np.float64)
    src_r = contact_row + (rows_dst - target_row) / scale
    src_c = contact_col + (cols_dst - target_col) / scale
    grid_r, grid_c = np.meshgrid(src_r, src_c, indexing="ij")
    sampled = ndimage.map_coordinates(
        cutout.measure_mask.astype(np.float64), [grid_r, grid_c], order=1, mode="constant"
    )
    placed_mask[row0 : row0 + new_h, col0 : col0 + new_w] = sampled >= 0.5

    return PasteResult(
        image=ImageBuffer(out),
        measure_mask=placed_mask,
        contact=new_contact,
        scale=scale,
        bbox=placed,
    )


def pitch_crop_window(
    width: int, height: int, offset_px: int, crop_h_frac: float = 0.80, crop_w_frac: float = 0.95
) -> PixelRect:
    """Crop window whose vertical center sits ``offset_px`` below the frame
    center; horizontally centered."""
    if not (0 < crop_h_frac <= 1 and 0 < crop_w_frac <= 1):
        raise DomainError(f"crop fractions must be in (0, 1], got {crop_h_frac}, {crop_w_frac}")
    offset = int(offset_px)
    if offset != offset_px:
        raise DomainError(f"offset_px must be integral, got {offset_px!r}")
    ch = max(1, _iround(height * crop_h_frac))
    cw = max(1, _iround(width * crop_w_frac))
    window = PixelRect(
        col0=_iround((width - cw) / 2.0),
        row0=_iround((height - ch) / 2.0) + offset,
        width=cw,
        height=ch,
    )
    if not window.fits_inside(width, height):
        raise CropError(
            f"pitch crop offset {offset} pushes window {window} outside {width}x{height}"
        )
    return window


def crop_pitch(
    image: ImageBuffer, offset_px: int, crop_h_frac: float = 0.80, crop_w_frac: float = 0.95
) -> ImageBuffer:
    """Emulate a camera-pitch change by cropping a vertically shifted window.
    The ground-truth horizon of the crop is the original horizon minus
    ``offset_px`` in the crop's centered coordinates."""
    window = pitch_crop_window(image.width, image.height, offset_px, crop_h_frac, crop_w_frac)
    return ImageBuffer(image.pixels[window.slices()].copy())


def roll_crop_window(
    width: int, height: int, crop_h_frac: float = 0.70, crop_w_frac: float = 0.85
) -> PixelRect:
    """Centered window used for roll crops; smaller than the pitch window so
    rotations up to +-5 degrees stay inside KITTI-shaped frames."""
    return pitch_crop_window(width, height, 0, crop_h_frac, crop_w_frac)


def crop_roll(
    image: ImageBuffer, angle_deg: float, crop_h_frac: float = 0.70, crop_w_frac: float = 0.85
) -> ImageBuffer:
    """Emulate a camera roll of ``angle_deg`` by sampling a window rotated
    about the image center with bilinear interpolation. Scene content appears
    rotated by minus the angle inside the crop."""
    if not math.isfinite(angle_deg) or abs(angle_deg) > 5.0:
        raise DomainError(f"roll angle must be within +-5 degrees, got {angle_deg}")
    window = roll_crop_window(image.width, image.height, crop_h_frac, crop_w_frac)
    center_col = window.col0 + (window.width - 1) / 2.0
    center_row = window.row0 + (window.height - 1) / 2.0
    t = math.radians(angle_deg)
    u = np.arange(window.width, dtype=np.float64) - (window.width - 1) / 2.0
    v = np.arange(window.height, dtype=np.float64)[:, None] - (window.height - 1) / 2.0
    src_col = center_col + u[None, :] * math.cos(t) + v * math.sin(t)
    src_row = center_row + (-u[None, :] * math.sin(t) + v * math.cos(t))

    eps = 1e-9
    if (
        src_col.min() < -eps
        or src_row.min() < -eps
        or src_col.max() > image.width - 1 + eps
        or src_row.max() > image.height - 1 + eps
    ):
        raise CropError(
            f"rotated window ({angle_deg} deg) exceeds the {image.width}x{image.height} frame"
        )

    out = np.empty((window.height, window.width, 3), dtype=np.uint8)
    coords = np.stack([src_row, src_col])
    for c in range(3):
        sampled = ndimage.map_coordinates(
            image.pixels[:, :, c].astype(np.float64), coords, order=1, mode="nearest"
        )
        out[:, :, c] = np.clip(np.rint(sampled), 0, 255).astype(np.uint8)
    return ImageBuffer(out)


def _rgb_to_hs(rgb: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hue and saturation channels of an RGB float array in [0, 1]."""
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    span = maxc - minc
    with np.errstate(divide="ignore", invalid="ignore"):
        sat = np.where(maxc > 0, span / maxc, 0.0)
        rc = np.where(span > 0, (maxc - r) / span, 0.0)
        gc = np.where(span > 0, (maxc - g) / span, 0.0)
        bc = np.where(span > 0, (maxc - b) / span, 0.0)
    hue = np.where(
        maxc == r, bc - gc, np.where(maxc == g, 2.0 + rc - bc, 4.0 + gc - rc)
    )
    hue = (hue / 6.0) % 1.0
    hue = np.where(span > 0, hue, 0.0)
    return hue, sat


def _hsv_to_rgb(h: np.ndarray, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    i = i.astype(np.int64) % 6
    out = np.empty((*h.shape, 3), dtype=np.float64)
    choices = [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)]
    for idx, (rr, gg, bb) in enumerate(choices):
        sel = i == idx
        out[sel, 0] = rr[sel]
        out[sel, 1] = gg[sel]
        out[sel, 2] = bb[sel]
    return out


def apply_photometric(
    image: ImageBuffer,
    mode: str,
    semantic: Optional[SemanticMap] = None,
    class_colors: Optional[Mapping[int, tuple[int, int, int]]] = None,
) -> ImageBuffer:
    """Photometric test conditions.

    grayscale replicates luminance; false_colors swaps in the semantic
    raster's hue and saturation while keeping the input value channel;
    class_average_colors flattens every class to its (precomputed) mean
    color; semantic_rgb returns the semantic color raster itself.
    """
    if mode not in PhotometricMode.ALL:
        raise DomainError(f"unknown photometric mode {mode!r}")
    if mode == PhotometricMode.UNMODIFIED:
        return ImageBuffer(image.pixels.copy())
    if mode == PhotometricMode.GRAYSCALE:
        px = image.pixels.astype(np.float64)
        lum = np.rint(0.299 * px[..., 0] + 0.587 * px[..., 1] + 0.114 * px[..., 2])
        return ImageBuffer(np.repeat(lum[..., None], 3, axis=2).astype(np.uint8))

    if semantic is None:
        raise ConfigurationError(f"photometric mode {mode} requires a semantic map")
    if semantic.labels.shape != image.pixels.shape[:2]:
        raise ConfigurationError("semantic map does not match the image size")

    if mode == PhotometricMode.SEMANTIC_RGB:
        return ImageBuffer(semantic.color_raster())

    if mode == PhotometricMode.CLASS_AVERAGE_COLORS:
        if class_colors is None:
            raise ConfigurationError("class_average_colors requires a class color table")
        out = np.zeros_like(image.pixels)
        for label in np.unique(semantic.labels):
            if int(label) not in class_colors:
                raise ConfigurationError(f"class color table missing label {int(label)}")
            out[semantic.labels == label] = class_colors[int(label)]
        return ImageBuffer(out)

    # false colors: hue/saturation from the semantic colors, value from input
    sem_rgb = semantic.color_raster().astype(np.float64) / 255.0
    hue, sat = _rgb_to_hs(sem_rgb)
    value = image.pixels.max(axis=-1).astype(np.float64) / 255.0
    rgb = _hsv_to_rgb(hue, sat, value)
    return ImageBuffer(np.rint(rgb * 255.0).astype(np.uint8))


def class_average_colors(
    images: Sequence[ImageBuffer], semantics: Sequence[SemanticMap]
) -> dict[int, tuple[int, int, int]]:
    """Mean color per semantic label over a set of images."""
    if len(images) != len(semantics) or not images:
        raise ConfigurationError("need equally many images and semantic maps, at least one")
    sums: dict[int, np.ndarray] = {}
    counts: dict[int, int] = {}
    for img, sem in zip(images, semantics):
        if sem.labels.shape != img.pixels.shape[:2]:
            raise ConfigurationError("semantic map does not match its image")
        for label in np.unique(sem.labels):
            sel = sem.labels == label
            sums.setdefault(int(label), np.zeros(3))
            sums[int(label)] += img.pixels[sel].reshape(-1, 3).sum(axis=0)
            counts[int(label)] = counts.get(int(label), 0) + int(sel.sum())
    return {
        label: tuple(int(v) for v in np.rint(sums[label] / counts[label]))
        for label in sums
    }


def add_shadow(
    image: ImageBuffer,
    contact_box: PixelRect,
    darken_frac: float = 0.6,
    height_px: int = 8,
    falloff: Union[str, Callable[[np.ndarray], np.ndarray]] = "linear",
) -> ImageBuffer:
    """Darken a strip of ``height_px`` rows under ``contact_box`` by
    ``darken_frac`` times a falloff that decreases away from the contact
    edge ("linear", "constant", or a callable on the row offsets)."""
    if not (0.0 <= darken_frac <= 1.0):
        raise DomainError(f"darken_frac must be in [0, 1], got {darken_frac}")
    if height_px < 1:
        raise DomainError(f"height_px must be >= 1, got {height_px}")
    if not contact_box.fits_inside(image.width, image.height):
        raise PlacementError(f"contact box {contact_box} outside the frame")
    if darken_frac == 0.0:
        return ImageBuffer(image.pixels.copy())

    rows = np.arange(height_px, dtype=np.float64)
    if falloff == "linear":
        weights = 1.0 - rows / height_px
    elif falloff == "constant":
        weights = np.ones_like(rows)
    elif callable(falloff):
        weights = np.clip(np.asarray(falloff(rows), dtype=np.float64), 0.0, 1.0)
        if weights.shape != rows.shape:
            raise DomainError("falloff callable must return one weight per strip row")
    else:
        raise DomainError(f"unknown falloff {falloff!r}")

    out = image.writable_copy()
    r_end = min(contact_box.row1 + height_px, image.height)
    strip = out[contact_box.row1 : r_end, contact_box.col0 : contact_box.col1, :]
    factors = (1.0 - darken_frac * weights[: strip.shape[0]])[:, None, None]
    out[contact_box.row1 : r_end, contact_box.col0 : contact_box.col1, :] = np.rint(
        strip.astype(np.float64) * factors
    ).astype(np.uint8)
    return ImageBuffer(out)


def _polygon_mask(shape: tuple[int, int], pixel_xy: list[tuple[float, float]]) -> np.ndarray:
    im = Image.new("L", (shape[1], shape[0]), 0)
    ImageDraw.Draw(im).polygon(pixel_xy, fill=255)
    return np.asarray(im) > 0


def paste_shape(
    image: ImageBuffer,
    polygon: Sequence,
    fill: Union[tuple[int, int, int], np.ndarray],
) -> PastedShape:
    """Rasterize a simple polygon (centered coordinates) and composite a
    solid color or a texture raster into it. The polygon's lowest vertex is
    recorded as its ground contact."""
    pts = []
    for p in polygon:
        if isinstance(p, CenteredCoord):
            pts.append((p.x, p.y))
        else:
            pts.append((float(p[0]), float(p[1])))
    if len(pts) < 3:
        raise DomainError(f"polygon needs at least 3 vertices, got {len(pts)}")
    arr = np.asarray(pts, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise DomainError("polygon vertices must be finite")
    x, y = arr[:, 0], arr[:, 1]
    area = 0.5 * abs(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
    if area <= 0.0:
        raise DomainError("degenerate polygon with zero area")

    w, h = image.width, image.height
    pixel_xy = [(px + w / 2.0, py + h / 2.0) for px, py in pts]
    for col, row in pixel_xy:
        if not (0 <= col <= w - 1 and 0 <= row <= h - 1):
            raise PlacementError(f"polygon vertex ({col}, {row}) outside the frame")
    mask = _polygon_mask((h, w), pixel_xy)
    if not mask.any():
        raise DomainError("polygon rasterizes to an empty mask")

    out = image.writable_copy()
    if isinstance(fill, np.ndarray):
        if fill.shape != image.pixels.shape or fill.dtype != np.uint8:
            raise DomainError("texture fill must be an (H, W, 3) uint8 raster")
        out[mask] = fill[mask]
    else:
        out[mask] = np.asarray(fill, dtype=np.uint8)

    lowest = max(pts, key=lambda p: (p[1], p[0]))
    return PastedShape(
        image=ImageBuffer(out), mask=mask, contact=CenteredCoord(lowest[0], lowest[1])
    )


def _edge_part_masks(support: np.ndarray, band_px: int) -> dict[str, np.ndarray]:
    h, w = support.shape
    rr = np.arange(h)[:, None]
    cc = np.arange(w)[None, :]
    big = np.where(support, rr, -1)
    bottom_edge = big.max(axis=0)[None, :]
    top_edge = np.where(support, rr, h).min(axis=0)[None, :]
    left_edge = np.where(support, cc, w).min(axis=1)[:, None]
    right_edge = np.where(support, cc, -1).max(axis=1)[:, None]
    parts = {
        "bottom": support & (rr > bottom_edge - band_px),
        "top": support & (rr < top_edge + band_px),
        "left": support & (cc < left_edge + band_px),
        "right": support & (cc > right_edge - band_px),
    }
    edges = parts["bottom"] | parts["top"] | parts["left"] | parts["right"]
    parts["interior"] = support & ~edges
    return parts


def edge_ablation(
    image: ImageBuffer, cutout: ObjectCutout, keep: Iterable[str], band_px: int = 5
) -> ImageBuffer:
    """Composite only the selected sprite parts: edge strips of thickness
    ``band_px`` along the alpha support's bottom/left/right/top boundaries,
    or the interior left when all four strips are removed."""
    keep = set(keep)
    unknown = keep - set(EDGE_PARTS)
    if unknown:
        raise DomainError(f"unknown sprite parts {sorted(unknown)}")
    if not keep:
        raise DomainError("keep must name at least one sprite part")
    if cutout.sprite.shape[:2] != image.pixels.shape[:2]:
        raise PlacementError("cutout frame does not match the image")
    bbox = cutout.support_bbox()
    if band_px < 1 or band_px > min(bbox.width, bbox.height):
        raise DomainError(
            f"band_px {band_px} larger than the {bbox.width}x{bbox.height} sprite support"
        )
    parts = _edge_part_masks(cutout.support(), band_px)
    selected = np.zeros_like(parts["bottom"])
    for name in keep:
        selected |= parts[name]
    rgba = cutout.sprite.copy()
    rgba[:, :, 3] = np.where(selected, rgba[:, :, 3], 0)
    out = image.writable_copy()
    _blend_rgba(out, rgba, 0, 0)
    return ImageBuffer(out)


def flip_vertical(image: ImageBuffer) -> ImageBuffer:
    """Reverse row order."""
    return ImageBuffer(image.pixels[::-1].copy())


def context_swap(cutout: ObjectCutout, new_background: ImageBuffer, slot: str) -> ImageBuffer:
    """Paste the cutout at identical centered coordinates and scale onto a
    different background; ``slot`` must be one the cutout allows."""
    if slot not in cutout.placement_slots:
        raise PlacementError(
            f"slot {slot!r} not among the cutout's placement slots {cutout.placement_slots}"
        )
    return paste_object(
        new_background, cutout, PlacementMode.POSITION_AND_SCALE, 1.0, horizon_y=0.0
    ).image


# ---------------------------------------------------------------------------
# Disk formats: RGBA sprite PNG + JSON sidecar, paletted semantic PNG + JSON.

def save_cutout(cutout: ObjectCutout, sprite_path) -> None:
    sprite_path = Path(sprite_path)
    Image.fromarray(cutout.sprite, mode="RGBA").save(sprite_path, format="PNG")
    mask_name = sprite_path.stem + ".mask.png"
    Image.fromarray((cutout.measure_mask * np.uint8(255)), mode="L").save(
        sprite_path.with_name(mask_name), format="PNG"
    )
    sidecar = {
        "source_id": cutout.source_id,
        "class_label": cutout.class_label,
        "ground_contact": {"x": cutout.ground_contact.x, "y": cutout.ground_contact.y},
        "placement_slots": list(cutout.placement_slots),
        "measure_mask": mask_name,
    }
    sprite_path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def load_cutout(sidecar_path) -> ObjectCutout:
    sidecar_path = Path(sidecar_path)
    meta = json.loads(sidecar_path.read_text())
    sprite_path = sidecar_path.with_suffix(".png")
    if not sprite_path.exists():
        raise ConfigurationError(f"cutout sidecar {sidecar_path} has no sprite {sprite_path}")
    with Image.open(sprite_path) as im:
        sprite = np.asarray(im.convert("RGBA"), dtype=np.uint8)
    mask_path = sidecar_path.with_name(meta["measure_mask"])
    if not mask_path.exists():
        raise ConfigurationError(f"measure mask {mask_path} missing")
    with Image.open(mask_path) as im:
        mask = np.asarray(im.convert("L")) >= 128
    return ObjectCutout(
        sprite=sprite,
        ground_contact=CenteredCoord(meta["ground_contact"]["x"], meta["ground_contact"]["y"]),
        source_id=meta["source_id"],
        class_label=meta["class_label"],
        placement_slots=tuple(meta["placement_slots"]),
        measure_mask=mask,
    )


def save_semantic_map(sem: SemanticMap, png_path, table_path) -> None:
    labels = sem.labels.astype(np.uint8)
    im = Image.fromarray(labels, mode="P")
    palette = [0] * (256 * 3)
    for label, rgb in sem.palette.items():
        palette[3 * label : 3 * label + 3] = list(rgb)
    im.putpalette(palette)
    im.save(png_path, format="PNG")
    table = {
        str(label): {
            "color": list(sem.palette[label]),
            "name": (sem.names or {}).get(label, str(label)),
        }
        for label in sem.palette
    }
    Path(table_path).write_text(json.dumps(table, indent=2, sort_keys=True))


def load_semantic_map(png_path, table_path) -> SemanticMap:
    with Image.open(png_path) as im:
        if im.mode != "P":
            raise ConfigurationError(f"semantic map {png_path} is not a paletted PNG")
        labels = np.asarray(im, dtype=np.int64)
    table = json.loads(Path(table_path).read_text())
    palette = {int(k): tuple(v["color"]) for k, v in table.items()}
    names = {int(k): v["name"] for k, v in table.items()}
    return SemanticMap(labels=labels, palette=palette, names=names)
