import json
import threading
import time
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from depth_adapter.serve import AdapterConfig, serve
from depth_adapter import wire


def write_request(batch_dir: Path, arrays):
    batch_dir.mkdir(parents=True, exist_ok=True)
    stems = []
    for i, rgb in enumerate(arrays):
        stem = f"img_{i:03d}"
        Image.fromarray(rgb, mode="RGB").save(batch_dir / f"{stem}.png")
        stems.append(stem)
    manifest = {"batch_id": batch_dir.name, "images": [{"image": f"{s}.png"} for s in stems]}
    (batch_dir / "request.json").write_text(json.dumps(manifest))
    (batch_dir / "request.done").touch()
    return stems


def wait_for(paths, timeout=10.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if all(p.exists() for p in paths):
            return
        time.sleep(0.01)
    missing = [str(p) for p in paths if not p.exists()]
    raise AssertionError(f"timed out waiting for {missing}")


@pytest.fixture
def exchange(tmp_path):
    return tmp_path / "exchange"


def run_adapter(config):
    thread = threading.Thread(target=serve, args=(config,), daemon=True)
    thread.start()
    return thread


def shutdown(exchange, thread):
    (exchange / "shutdown").touch()
    thread.join(timeout=5.0)
    assert not thread.is_alive()


class TestConstantStub:
    def test_constant_decodes_to_configured_value(self, exchange):
        config = AdapterConfig(exchange_dir=str(exchange), stub="constant:0.02")
        thread = run_adapter(config)
        try:
            rgb = np.zeros((12, 20, 3), dtype=np.uint8)
            batch = exchange / "batch_0000"
            stems = write_request(batch, [rgb, rgb])
            wait_for([batch / f"{s}.done" for s in stems])
            for stem in stems:
                values = wire.read_disparity(
                    batch / f"{stem}.disp.png", batch / f"{stem}.disp.json"
                )
                d_max = json.loads((batch / f"{stem}.disp.json").read_text())["d_max"]
                assert values.shape == (12, 20)
                assert np.max(np.abs(values - 0.02)) <= d_max / 65535
        finally:
            shutdown(exchange, thread)

    def test_sequential_batches(self, exchange):
        config = AdapterConfig(exchange_dir=str(exchange), stub="constant:0.1")
        thread = run_adapter(config)
        try:
            rgb = np.zeros((6, 6, 3), dtype=np.uint8)
            for i in range(3):
                batch = exchange / f"batch_{i:04d}"
                (stem,) = write_request(batch, [rgb])
                wait_for([batch / f"{stem}.done"])
        finally:
            shutdown(exchange, thread)


class TestEchoStub:
    def test_round_trips_reference_within_quantization(self, exchange):
        rng = np.random.default_rng(0)
        ref = rng.uniform(0.0, 0.44, size=(16, 24))
        batch = exchange / "batch_0000"
        batch.mkdir(parents=True)
        # reference map placed next to the request, wire-encoded
        wire.write_disparity(batch, "img_000.ref", ref, d_max=float(ref.max()))
        (batch / "img_000.ref.done").unlink()
        rgb = np.zeros((16, 24, 3), dtype=np.uint8)
        config = AdapterConfig(exchange_dir=str(exchange), stub="echo", d_max_policy="preserve")
        thread = run_adapter(config)
        try:
            write_request(batch, [rgb])
            wait_for([batch / "img_000.done"])
            out = wire.read_disparity(batch / "img_000.disp.png", batch / "img_000.disp.json")
            d_max = float(ref.max())
            assert np.max(np.abs(out - ref)) <= d_max / 65535
            # decode -> re-encode under the preserved scale keeps the exact
            # 16-bit payload
            a = np.asarray(Image.open(batch / "img_000.ref.disp.png"))
            b = np.asarray(Image.open(batch / "img_000.disp.png"))
            assert np.array_equal(a, b)
        finally:
            shutdown(exchange, thread)

    def test_missing_reference_becomes_error_file(self, exchange):
        config = AdapterConfig(exchange_dir=str(exchange), stub="echo")
        thread = run_adapter(config)
        try:
            rgb = np.zeros((8, 8, 3), dtype=np.uint8)
            batch = exchange / "batch_0000"
            (stem,) = write_request(batch, [rgb])
            wait_for([batch / f"{stem}.error"])
            assert "no reference map" in (batch / f"{stem}.error").read_text()
            # adapter is still alive and serves the next, well-formed batch
            batch2 = exchange / "batch_0001"
            batch2.mkdir()
            wire.write_disparity(batch2, "img_000.ref", np.full((4, 4), 0.2), d_max=0.2)
            (batch2 / "img_000.ref.done").unlink()
            (stem2,) = write_request(batch2, [np.zeros((4, 4, 3), dtype=np.uint8)])
            wait_for([batch2 / f"{stem2}.done"])
        finally:
            shutdown(exchange, thread)


class TestRobustness:
    def test_malformed_manifest_writes_request_error_and_continues(self, exchange):
        config = AdapterConfig(exchange_dir=str(exchange), stub="constant:0.05")
        thread = run_adapter(config)
        try:
            bad = exchange / "batch_0000"
            bad.mkdir(parents=True)
            (bad / "request.json").write_text("{not json")
            (bad / "request.done").touch()
            wait_for([bad / "request.error"])
            good = exchange / "batch_0001"
            (stem,) = write_request(good, [np.zeros((5, 5, 3), dtype=np.uint8)])
            wait_for([good / f"{stem}.done"])
        finally:
            shutdown(exchange, thread)

    def test_model_exception_writes_traceback_error(self, exchange, tmp_path):
        plugin = tmp_path / "boom_model.py"
        plugin.write_text(
            "def load(weights):\n"
            "    def infer(image):\n"
            "        raise RuntimeError('synthetic model crash')\n"
            "    return infer\n"
        )
        import sys

        sys.path.insert(0, str(tmp_path))
        try:
            config = AdapterConfig(exchange_dir=str(exchange), model="boom_model:load")
            thread = run_adapter(config)
            try:
                batch = exchange / "batch_0000"
                (stem,) = write_request(batch, [np.zeros((4, 4, 3), dtype=np.uint8)])
                wait_for([batch / f"{stem}.error"])
                text = (batch / f"{stem}.error").read_text()
                assert "synthetic model crash" in text and "Traceback" in text
            finally:
                shutdown(exchange, thread)
        finally:
            sys.path.remove(str(tmp_path))

    def test_plugin_model_served(self, exchange, tmp_path):
        plugin = tmp_path / "rowgrad_model.py"
        plugin.write_text(
            "import numpy as np\n"
            "def load(weights):\n"
            "    def infer(image):\n"
            "        h, w = image.shape[:2]\n"
            "        return np.tile(np.linspace(0, 0.3, h)[:, None], (1, w))\n"
            "    return infer\n"
        )
        import sys

        sys.path.insert(0, str(tmp_path))
        try:
            config = AdapterConfig(exchange_dir=str(exchange), model="rowgrad_model:load")
            thread = run_adapter(config)
            try:
                batch = exchange / "batch_0000"
                (stem,) = write_request(batch, [np.zeros((10, 7, 3), dtype=np.uint8)])
                wait_for([batch / f"{stem}.done"])
                out = wire.read_disparity(
                    batch / f"{stem}.disp.png", batch / f"{stem}.disp.json"
                )
                expected = np.tile(np.linspace(0, 0.3, 10)[:, None], (1, 7))
                assert np.max(np.abs(out - expected)) <= 0.3 / 65535
            finally:
                shutdown(exchange, thread)
        finally:
            sys.path.remove(str(tmp_path))

    def test_config_validation(self, exchange):
        with pytest.raises(ValueError):
            AdapterConfig(exchange_dir=str(exchange))
        with pytest.raises(ValueError):
            AdapterConfig(exchange_dir=str(exchange), stub="echo", model="x:y")
        with pytest.raises(ValueError):
            AdapterConfig(exchange_dir=str(exchange), stub="nonsense")
