"""Request loop: watch an exchange directory, answer batches one image at a
time, exit cleanly on the shutdown sentinel.

The model is pluggable behind a single entry point: ``module:function`` where
``function(weights_path_or_None)`` returns a callable mapping an (H, W, 3)
uint8 image array to an (H, W) float disparity array. The ``echo`` and
``constant:<v>`` stubs need no ML runtime at all; ``echo`` replays a
reference map supplied next to the request as ``<name>.ref.disp.png`` +
``<name>.ref.disp.json``.
"""

import importlib
import time
import traceback
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import wire


@dataclass
class AdapterConfig:
    exchange_dir: str
    stub: Optional[str] = None       # "echo" | "constant:<v>"
    model: Optional[str] = None      # "module:function"
    weights: Optional[str] = None
    d_max_policy: str = "max"        # "max" | "fixed:<v>" | "preserve" (echo)
    poll_interval_s: float = 0.02

    def __post_init__(self):
        if (self.stub is None) == (self.model is None):
            raise ValueError("configure exactly one of --stub or --model")
        if self.stub is not None:
            if self.stub != "echo" and not self.stub.startswith("constant:"):
                raise ValueError(f"unknown stub {self.stub!r}")


def _load_model(spec: str, weights: Optional[str]) -> Callable:
    module_name, _, attr = spec.partition(":")
    if not module_name or not attr:
        raise ValueError(f"model spec must be 'module:function', got {spec!r}")
    module = importlib.import_module(module_name)
    loader = getattr(module, attr)
    return loader(weights)


def _constant_infer(value: float) -> Callable:
    def infer(image: np.ndarray) -> np.ndarray:
        return np.full(image.shape[:2], value, dtype=np.float64)

    return infer


def _answer_image(batch_dir: Path, stem: str, config: AdapterConfig, infer) -> None:
    try:
        if config.stub == "echo":
            ref_png = batch_dir / f"{stem}.ref.disp.png"
            ref_json = batch_dir / f"{stem}.ref.disp.json"
            if not (ref_png.exists() and ref_json.exists()):
                wire.write_error(batch_dir, stem, f"no reference map for {stem}")
                return
            values = wire.read_disparity(ref_png, ref_json)
            if config.d_max_policy == "preserve":
                import json

                d_max = float(json.loads(ref_json.read_text())["d_max"])
            else:
                d_max = wire.resolve_d_max(values, config.d_max_policy)
        else:
            image = wire.read_image(batch_dir, stem)
            values = infer(image)
            values = np.asarray(values, dtype=np.float64)
            if values.shape != image.shape[:2]:
                wire.write_error(
                    batch_dir, stem,
                    f"model returned shape {values.shape} for image {image.shape[:2]}",
                )
                return
            policy = config.d_max_policy if config.d_max_policy != "preserve" else "max"
            d_max = wire.resolve_d_max(values, policy)
        wire.write_disparity(batch_dir, stem, values, d_max)
    except Exception:
        wire.write_error(batch_dir, stem, traceback.format_exc())


def _process_batch(batch_dir: Path, config: AdapterConfig, infer) -> None:
    try:
        stems = wire.read_manifest(batch_dir)
    except wire.WireError as exc:
        (batch_dir / "request.error").write_text(str(exc))
        return
    for stem in stems:
        if (batch_dir / f"{stem}.done").exists() or (batch_dir / f"{stem}.error").exists():
            continue  # restartable: never redo finished work
        _answer_image(batch_dir, stem, config, infer)


def serve(config: AdapterConfig) -> int:
    """Run until the shutdown sentinel appears; returns the exit status."""
    root = Path(config.exchange_dir)
    root.mkdir(parents=True, exist_ok=True)
    if config.stub is not None:
        infer = None if config.stub == "echo" else _constant_infer(
            float(config.stub.split(":", 1)[1])
        )
    else:
        infer = _load_model(config.model, config.weights)

    processed: set[Path] = set()
    while True:
        if (root / wire.SHUTDOWN_SENTINEL).exists():
            return 0
        candidates = []
        if (root / wire.REQUEST_SENTINEL).exists():
            candidates.append(root)
        candidates.extend(
            sentinel.parent
            for sentinel in sorted(root.glob(f"*/{wire.REQUEST_SENTINEL}"))
        )
        for batch_dir in candidates:
            if batch_dir in processed:
                continue
            processed.add(batch_dir)
            _process_batch(batch_dir, config, infer)
        time.sleep(config.poll_interval_s)
