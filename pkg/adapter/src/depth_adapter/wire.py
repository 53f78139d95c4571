"""Minimal wire-format helpers, independent of the harness package.

A batch directory holds ``request.json`` listing 8-bit RGB PNGs, plus a
``request.done`` sentinel. Each response is ``<name>.disp.png`` (16-bit
grayscale, disparity = pixel / 65535 * d_max) with a ``<name>.disp.json``
sidecar ``{"d_max", "width", "height"}`` and a ``<name>.done`` sentinel.
Failures become ``<name>.error`` files.
"""

import json
from pathlib import Path

import numpy as np
from PIL import Image

REQUEST_MANIFEST = "request.json"
REQUEST_SENTINEL = "request.done"
SHUTDOWN_SENTINEL = "shutdown"
SCALE = 65535


class WireError(Exception):
    pass


def read_manifest(batch_dir):
    path = Path(batch_dir) / REQUEST_MANIFEST
    try:
        manifest = json.loads(path.read_text())
        entries = manifest["images"]
        names = [entry["image"] for entry in entries]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise WireError(f"unreadable manifest {path}: {exc}")
    stems = []
    for name in names:
        if not isinstance(name, str) or not name.endswith(".png"):
            raise WireError(f"bad image entry {name!r} in {path}")
        stems.append(name[:-4])
    return stems


def read_image(batch_dir, stem):
    path = Path(batch_dir) / f"{stem}.png"
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def read_disparity(png_path, sidecar_path):
    meta = json.loads(Path(sidecar_path).read_text())
    d_max = float(meta["d_max"])
    with Image.open(png_path) as im:
        arr = np.asarray(im, dtype=np.float64)
    return arr / SCALE * d_max


def resolve_d_max(values, policy):
    if policy == "max":
        return float(values.max()) if values.size else 0.0
    if policy.startswith("fixed:"):
        return float(policy.split(":", 1)[1])
    raise WireError(f"unknown d_max policy {policy!r}")


def write_disparity(batch_dir, stem, values, d_max):
    batch_dir = Path(batch_dir)
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise WireError(f"disparity for {stem} must be 2-D, got shape {values.shape}")
    if d_max > 0:
        quantized = np.rint(np.clip(values / d_max, 0.0, 1.0) * SCALE)
    else:
        quantized = np.zeros_like(values)
    Image.fromarray(quantized.astype(np.uint16)).save(
        batch_dir / f"{stem}.disp.png", format="PNG"
    )
    sidecar = {
        "d_max": float(d_max),
        "width": int(values.shape[1]),
        "height": int(values.shape[0]),
    }
    (batch_dir / f"{stem}.disp.json").write_text(json.dumps(sidecar, sort_keys=True))
    (batch_dir / f"{stem}.done").touch()


def write_error(batch_dir, stem, message):
    (Path(batch_dir) / f"{stem}.error").write_text(message)
