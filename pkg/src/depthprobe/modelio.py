"""The boundary between the harness and any depth estimator.

Wire format (bit-exact):

* request manifest ``request.json``:
  ``{"batch_id": str, "images": [{"image": "<name>.png"}, ...]}``
  with each image stored as an 8-bit RGB PNG next to the manifest, followed
  by an empty ``request.done`` sentinel once everything is written.
* response, per image: ``<name>.disp.png`` (16-bit grayscale PNG) plus
  ``<name>.disp.json`` ``{"d_max": float, "width": int, "height": int}``;
  decoded disparity = pixel / 65535 * d_max. The responder signals each
  image with an empty ``<name>.done`` sentinel, or ``<name>.error``
  containing diagnostics.
* shutdown: the harness writes a ``shutdown`` sentinel at the exchange root.

Each batch lives in its own ``batch_NNNN`` subdirectory of the exchange
directory, which subprocess endpoints pass to the adapter as its last
command-line argument.

Two built-in oracle models bracket the behaviors a learned network can show:
the geometry-aware oracle re-derives the scene geometry it is told about,
the fixed-prior oracle ignores the image entirely and renders its prior.
"""

from __future__ import annotations

import json
import math
import os
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image, ImageDraw

from .errors import (
    ConfigurationError,
    DomainError,
    EndpointTimeoutError,
    ModelError,
    ProtocolError,
)
from .geometry import GroundPlaneModel, disparity_from_depth
from .imgsynth import ImageBuffer
from .robustfit import DisparityMap

__all__ = [
    "OracleMode",
    "OracleObstacle",
    "OracleSpec",
    "ModelEndpoint",
    "OracleEndpoint",
    "SubprocessEndpoint",
    "DirectoryEndpoint",
    "render_oracle",
    "request_disparity",
    "request_in_batches",
    "write_disparity_response",
    "decode_disparity_response",
    "write_request",
    "read_request",
    "REQUEST_MANIFEST",
    "REQUEST_SENTINEL",
    "SHUTDOWN_SENTINEL",
    "EXCHANGE_ROOT_ENV",
]

REQUEST_MANIFEST = "request.json"
REQUEST_SENTINEL = "request.done"
SHUTDOWN_SENTINEL = "shutdown"
EXCHANGE_ROOT_ENV = "DEPTHPROBE_EXCHANGE_ROOT"

_DISP_SCALE = 65535


class OracleMode:
    GEOMETRY_AWARE = "geometry_aware"
    FIXED_PRIOR = "fixed_prior"
    ALL = (GEOMETRY_AWARE, FIXED_PRIOR)


@dataclass(frozen=True)
class OracleObstacle:
    """Filled footprint polygon (pixel (col, row) vertices) at a constant
    metric depth."""

    polygon_px: tuple[tuple[float, float], ...]
    depth_m: float

    def __post_init__(self) -> None:
        if len(self.polygon_px) < 3:
            raise DomainError("obstacle footprint needs at least 3 vertices")
        if not (math.isfinite(self.depth_m) and self.depth_m > 0):
            raise DomainError(f"obstacle depth must be positive, got {self.depth_m}")
        object.__setattr__(
            self,
            "polygon_px",
            tuple((float(c), float(r)) for c, r in self.polygon_px),
        )


@dataclass(frozen=True)
class OracleSpec:
    """Analytic scene description handed to the built-in oracles."""

    mode: str
    plane: Optional[GroundPlaneModel] = None
    obstacles: tuple[OracleObstacle, ...] = ()
    prior_plane: Optional[GroundPlaneModel] = None
    noise_sd: float = 0.0

    def __post_init__(self) -> None:
        if self.mode not in OracleMode.ALL:
            raise DomainError(f"unknown oracle mode {self.mode!r}")
        if self.mode == OracleMode.GEOMETRY_AWARE and self.plane is None:
            raise ConfigurationError("geometry-aware oracle requires a scene plane")
        if self.mode == OracleMode.FIXED_PRIOR and self.prior_plane is None:
            raise ConfigurationError("fixed-prior oracle requires a prior plane")
        if not (math.isfinite(self.noise_sd) and self.noise_sd >= 0):
            raise DomainError(f"noise_sd must be >= 0, got {self.noise_sd}")
        object.__setattr__(self, "obstacles", tuple(self.obstacles))


def render_oracle(spec: OracleSpec, width: int, height: int, seed: int = 0) -> DisparityMap:
    """Render the disparity map an analytic oracle would output.

    Geometry-aware: ground per the scene plane (its camera must match the
    raster size), obstacle footprints filled with their constant disparity,
    nearer obstacles painted over farther ones. Fixed-prior: the prior
    plane's map rendered about the raster center, so any crop sees the
    uncropped prior's central window; obstacles are ignored.
    """
    if width <= 0 or height <= 0:
        raise DomainError(f"raster size must be positive, got {width}x{height}")
    if spec.mode == OracleMode.GEOMETRY_AWARE:
        plane = spec.plane
        cam = plane.camera
        if (cam.image_w_px, cam.image_h_px) != (width, height):
            raise DomainError(
                f"scene camera frame {cam.image_w_px}x{cam.image_h_px} does not "
                f"match the {width}x{height} raster"
            )
        origin_col, origin_row = cam.cx_px, cam.cy_px
    else:
        plane = spec.prior_plane
        cam = plane.camera
        origin_col, origin_row = width / 2.0, height / 2.0

    x = np.arange(width, dtype=np.float64)[None, :] - origin_col
    y = np.arange(height, dtype=np.float64)[:, None] - origin_row
    theta = math.radians(plane.roll_deg)
    drop = (y - plane.horizon_y) * math.cos(theta) - x * math.sin(theta)
    scale = cam.baseline_m / (cam.cam_height_m * cam.image_w_px)
    values = np.maximum(0.0, drop * scale)

    if spec.mode == OracleMode.GEOMETRY_AWARE and spec.obstacles:
        for obstacle in sorted(spec.obstacles, key=lambda o: o.depth_m, reverse=True):
            disp = disparity_from_depth(cam, obstacle.depth_m)
            if disp >= 1.0:
                raise DomainError(
                    f"obstacle at {obstacle.depth_m} m maps to disparity {disp} >= 1"
                )
            im = Image.new("L", (width, height), 0)
            ImageDraw.Draw(im).polygon(obstacle.polygon_px, fill=255)
            mask = np.asarray(im) > 0
            values[mask] = disp

    if spec.noise_sd > 0:
        rng = np.random.default_rng(seed)
        values = values + rng.normal(0.0, spec.noise_sd, size=values.shape)
    values = np.clip(values, 0.0, np.nextafter(1.0, 0.0))
    return DisparityMap(values)


# ---------------------------------------------------------------------------
# Wire codec


def write_request(batch_dir: Path, batch_id: str, images: Sequence[ImageBuffer]) -> list[str]:
    """Write images + manifest + sentinel; returns the image stems."""
    batch_dir = Path(batch_dir)
    batch_dir.mkdir(parents=True, exist_ok=True)
    stems = [f"img_{i:03d}" for i in range(len(images))]
    for stem, image in zip(stems, images):
        image.to_png(batch_dir / f"{stem}.png")
    manifest = {"batch_id": batch_id, "images": [{"image": f"{s}.png"} for s in stems]}
    (batch_dir / REQUEST_MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True))
    (batch_dir / REQUEST_SENTINEL).touch()
    return stems


def read_request(batch_dir: Path) -> list[tuple[str, ImageBuffer]]:
    """Parse a request directory into (stem, image) pairs."""
    batch_dir = Path(batch_dir)
    manifest_path = batch_dir / REQUEST_MANIFEST
    try:
        manifest = json.loads(manifest_path.read_text())
        entries = manifest["images"]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ProtocolError(manifest_path, f"unreadable request manifest: {exc}")
    out = []
    for entry in entries:
        name = entry.get("image") if isinstance(entry, dict) else None
        if not name or not str(name).endswith(".png"):
            raise ProtocolError(manifest_path, f"bad image entry {entry!r}")
        img_path = batch_dir / name
        if not img_path.exists():
            raise ProtocolError(img_path, "image named in manifest is missing")
        out.append((str(name)[:-4], ImageBuffer.from_png(img_path)))
    return out


def write_disparity_response(
    batch_dir: Path, stem: str, values: np.ndarray, d_max: Optional[float] = None
) -> None:
    """Encode one disparity map per the wire format and mark it done."""
    batch_dir = Path(batch_dir)
    values = np.asarray(values, dtype=np.float64)
    if d_max is None:
        d_max = float(values.max()) if values.size else 0.0
    if not (math.isfinite(d_max) and d_max >= 0):
        raise DomainError(f"d_max must be finite and >= 0, got {d_max}")
    if d_max > 0:
        quantized = np.rint(np.clip(values / d_max, 0.0, 1.0) * _DISP_SCALE)
    else:
        quantized = np.zeros_like(values)
    png = Image.fromarray(quantized.astype(np.uint16))  # uint16 -> 16-bit gray
    png.save(batch_dir / f"{stem}.disp.png", format="PNG")
    sidecar = {
        "d_max": d_max,
        "width": int(values.shape[1]),
        "height": int(values.shape[0]),
    }
    (batch_dir / f"{stem}.disp.json").write_text(json.dumps(sidecar, sort_keys=True))
    (batch_dir / f"{stem}.done").touch()


def decode_disparity_response(
    batch_dir: Path, stem: str, expected_size: Optional[tuple[int, int]] = None
) -> DisparityMap:
    """Validate and decode one response; raises :class:`ProtocolError`
    naming the offending file on any malformation. ``expected_size`` is the
    (width, height) of the request image."""
    batch_dir = Path(batch_dir)
    png_path = batch_dir / f"{stem}.disp.png"
    sidecar_path = batch_dir / f"{stem}.disp.json"
    if not png_path.exists():
        raise ProtocolError(png_path, "response image missing")
    if not sidecar_path.exists():
        raise ProtocolError(sidecar_path, "response sidecar missing")
    try:
        sidecar = json.loads(sidecar_path.read_text())
    except (OSError, ValueError) as exc:
        raise ProtocolError(sidecar_path, f"sidecar is not valid JSON: {exc}")
    try:
        d_max = float(sidecar["d_max"])
        width = int(sidecar["width"])
        height = int(sidecar["height"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(sidecar_path, f"sidecar missing d_max/width/height: {exc}")
    if not (math.isfinite(d_max) and d_max >= 0):
        raise ProtocolError(sidecar_path, f"bad disparity scale d_max={d_max}")
    try:
        with Image.open(png_path) as im:
            if im.mode not in ("I", "I;16"):
                raise ProtocolError(
                    png_path, f"response must be a 16-bit grayscale PNG, got mode {im.mode}"
                )
            arr = np.asarray(im, dtype=np.int64)
    except ProtocolError:
        raise
    except Exception as exc:
        raise ProtocolError(png_path, f"cannot decode PNG: {exc}")
    if arr.shape != (height, width):
        raise ProtocolError(
            png_path, f"PNG size {arr.shape[::-1]} does not match sidecar {width}x{height}"
        )
    if expected_size is not None and (width, height) != expected_size:
        raise ProtocolError(
            sidecar_path,
            f"response size {width}x{height} does not match request image "
            f"{expected_size[0]}x{expected_size[1]}",
        )
    if arr.min() < 0 or arr.max() > _DISP_SCALE:
        raise ProtocolError(png_path, "pixel values outside the 16-bit range")
    values = arr.astype(np.float64) / _DISP_SCALE * d_max
    if values.size and values.max() >= 1.0:
        raise ProtocolError(png_path, "decoded disparities reach 1.0 or more")
    return DisparityMap(values)


# ---------------------------------------------------------------------------
# Endpoints


class ModelEndpoint:
    """Anything that turns a batch of images into disparity maps."""

    max_batch: int = 8

    def request(self, images, scene_hints=None):  # pragma: no cover - interface
        raise NotImplementedError

    def close(self) -> None:
        pass

    def describe(self) -> str:
        return type(self).__name__

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


@dataclass
class OracleEndpoint(ModelEndpoint):
    """Built-in analytic model. Geometry-aware mode renders the per-image
    scene hints; fixed-prior mode renders its configured prior and ignores
    both hints and image content."""

    mode: str = OracleMode.GEOMETRY_AWARE
    prior_plane: Optional[GroundPlaneModel] = None
    noise_sd: float = 0.0
    seed: int = 0
    max_batch: int = 64

    def __post_init__(self) -> None:
        if self.mode not in OracleMode.ALL:
            raise DomainError(f"unknown oracle mode {self.mode!r}")
        if self.mode == OracleMode.FIXED_PRIOR and self.prior_plane is None:
            raise ConfigurationError("fixed-prior endpoint needs a prior plane")

    def describe(self) -> str:
        return f"oracle:{self.mode}"

    def request(self, images, scene_hints=None):
        if self.mode == OracleMode.GEOMETRY_AWARE:
            if scene_hints is None or len(scene_hints) != len(images):
                raise ConfigurationError(
                    "geometry-aware oracle endpoint needs one scene hint per image"
                )
        maps = []
        for i, image in enumerate(images):
            if self.mode == OracleMode.GEOMETRY_AWARE:
                hint = scene_hints[i]
                if hint is None:
                    raise ConfigurationError(f"missing scene hint for image {i}")
                spec = OracleSpec(
                    mode=self.mode,
                    plane=hint.plane,
                    obstacles=hint.obstacles,
                    noise_sd=self.noise_sd if self.noise_sd > 0 else hint.noise_sd,
                )
            else:
                spec = OracleSpec(
                    mode=OracleMode.FIXED_PRIOR,
                    prior_plane=self.prior_plane,
                    noise_sd=self.noise_sd,
                )
            image_seed = int(
                np.random.SeedSequence([self.seed, i]).generate_state(1)[0]
            )
            maps.append(render_oracle(spec, image.width, image.height, seed=image_seed))
        return maps


class _WireSession:
    """One exchange directory with sequential batch subdirectories."""

    def __init__(self, exchange_dir: Path):
        self.exchange_dir = Path(exchange_dir)
        self.batch_seq = 0

    def next_batch_dir(self) -> Path:
        batch_dir = self.exchange_dir / f"batch_{self.batch_seq:04d}"
        self.batch_seq += 1
        return batch_dir


def _collect_responses(batch_dir, stems, sizes, deadline, poll_interval, liveness=None):
    pending = dict(zip(stems, sizes))
    failures = {}
    while pending:
        for stem in list(pending):
            error_path = batch_dir / f"{stem}.error"
            if error_path.exists():
                failures[stem] = error_path.read_text(errors="replace")
                del pending[stem]
            elif (batch_dir / f"{stem}.done").exists():
                del pending[stem]
        if failures and not pending:
            break
        if pending:
            if liveness is not None:
                liveness()
            if time.monotonic() > deadline:
                raise EndpointTimeoutError(
                    f"no response for {sorted(pending)} in {batch_dir} before timeout"
                )
            time.sleep(poll_interval)
    if failures:
        details = "; ".join(f"{stem}: {msg.strip()}" for stem, msg in sorted(failures.items()))
        raise ModelError(f"model reported per-image errors: {details}")
    return [
        decode_disparity_response(batch_dir, stem, expected_size=size)
        for stem, size in zip(stems, sizes)
    ]


@dataclass
class SubprocessEndpoint(ModelEndpoint):
    """Launches an adapter process once per run; the exchange directory is
    appended to the command line. One batch in flight at a time."""

    command: tuple[str, ...] = ()
    timeout_s: float = 60.0
    max_batch: int = 8
    exchange_root: Optional[str] = None
    poll_interval_s: float = 0.02
    _proc: Optional[subprocess.Popen] = field(default=None, repr=False, compare=False)
    _session: Optional[_WireSession] = field(default=None, repr=False, compare=False)
    _stderr_path: Optional[Path] = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.command:
            raise ConfigurationError("subprocess endpoint needs a non-empty command")
        if self.timeout_s <= 0:
            raise DomainError(f"timeout_s must be positive, got {self.timeout_s}")

    def describe(self) -> str:
        return "cmd:" + " ".join(self.command)

    def _ensure_started(self) -> None:
        if self._session is not None:
            return
        root = self.exchange_root or os.environ.get(EXCHANGE_ROOT_ENV) or None
        exchange_dir = Path(tempfile.mkdtemp(prefix="depthprobe_xchg_", dir=root))
        self._session = _WireSession(exchange_dir)
        self._stderr_path = exchange_dir / "adapter_stderr.log"
        stderr = open(self._stderr_path, "wb")
        try:
            self._proc = subprocess.Popen(
                list(self.command) + [str(exchange_dir)],
                stdout=subprocess.DEVNULL,
                stderr=stderr,
            )
        except OSError as exc:
            raise ModelError(f"could not launch {self.command}: {exc}")
        finally:
            stderr.close()

    def _check_alive(self) -> None:
        if self._proc is not None and self._proc.poll() is not None:
            code = self._proc.returncode
            tail = ""
            if self._stderr_path and self._stderr_path.exists():
                tail = self._stderr_path.read_text(errors="replace")[-2000:]
            raise ModelError(f"adapter exited with status {code}; stderr tail:\n{tail}")

    def request(self, images, scene_hints=None):
        self._ensure_started()
        batch_dir = self._session.next_batch_dir()
        stems = write_request(batch_dir, batch_dir.name, images)
        sizes = [(im.width, im.height) for im in images]
        deadline = time.monotonic() + self.timeout_s
        try:
            return _collect_responses(
                batch_dir, stems, sizes, deadline, self.poll_interval_s, self._check_alive
            )
        except EndpointTimeoutError:
            self._check_alive()
            raise

    def close(self) -> None:
        if self._session is not None:
            try:
                (self._session.exchange_dir / SHUTDOWN_SENTINEL).touch()
            except OSError:
                pass
        if self._proc is not None:
            try:
                self._proc.wait(timeout=5.0)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
            self._proc = None


@dataclass
class DirectoryEndpoint(ModelEndpoint):
    """Exchange through a directory serviced by an externally managed
    process; no subprocess lifecycle handling."""

    directory: str = ""
    timeout_s: float = 60.0
    max_batch: int = 8
    poll_interval_s: float = 0.02
    _session: Optional[_WireSession] = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.directory:
            raise ConfigurationError("directory endpoint needs an exchange directory")
        if self.timeout_s <= 0:
            raise DomainError(f"timeout_s must be positive, got {self.timeout_s}")

    def describe(self) -> str:
        return f"dir:{self.directory}"

    def request(self, images, scene_hints=None):
        if self._session is None:
            Path(self.directory).mkdir(parents=True, exist_ok=True)
            self._session = _WireSession(Path(self.directory))
        batch_dir = self._session.next_batch_dir()
        stems = write_request(batch_dir, batch_dir.name, images)
        sizes = [(im.width, im.height) for im in images]
        deadline = time.monotonic() + self.timeout_s
        return _collect_responses(batch_dir, stems, sizes, deadline, self.poll_interval_s)


def request_disparity(
    endpoint: ModelEndpoint,
    images: Sequence[ImageBuffer],
    scene_hints: Optional[Sequence[Optional[OracleSpec]]] = None,
) -> list[DisparityMap]:
    """Send one batch to an endpoint and return maps in input order.

    The batch fails atomically: a single bad response raises and nothing is
    returned. Batches larger than ``endpoint.max_batch`` are rejected; use
    :func:`request_in_batches` to chunk automatically.
    """
    if len(images) == 0:
        return []
    if len(images) > endpoint.max_batch:
        raise DomainError(
            f"batch of {len(images)} exceeds endpoint max_batch={endpoint.max_batch}"
        )
    if scene_hints is not None and len(scene_hints) != len(images):
        raise ConfigurationError("scene_hints must align one-to-one with images")
    maps = endpoint.request(images, scene_hints)
    if len(maps) != len(images):
        raise ModelError(f"endpoint returned {len(maps)} maps for {len(images)} images")
    for i, (image, dmap) in enumerate(zip(images, maps)):
        if (dmap.width, dmap.height) != (image.width, image.height):
            raise ModelError(
                f"map {i} sized {dmap.width}x{dmap.height} for a "
                f"{image.width}x{image.height} image"
            )
    return maps


def request_in_batches(
    endpoint: ModelEndpoint,
    images: Sequence[ImageBuffer],
    scene_hints: Optional[Sequence[Optional[OracleSpec]]] = None,
) -> list[DisparityMap]:
    """Chunk a long trial list through an endpoint, honoring max_batch and
    keeping one batch in flight."""
    out: list[DisparityMap] = []
    step = endpoint.max_batch
    for start in range(0, len(images), step):
        chunk = images[start : start + step]
        hints = None if scene_hints is None else scene_hints[start : start + step]
        out.extend(request_disparity(endpoint, chunk, hints))
    return out
