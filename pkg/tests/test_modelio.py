import json
import sys
import textwrap
import threading
import time
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from depthprobe.errors import (
    ConfigurationError,
    DomainError,
    EndpointTimeoutError,
    ModelError,
    ProtocolError,
)
from depthprobe.geometry import GroundPlaneModel, kitti_camera, ground_disparity_profile
from depthprobe.imgsynth import ImageBuffer
from depthprobe.modelio import (
    DirectoryEndpoint,
    OracleEndpoint,
    OracleMode,
    OracleObstacle,
    OracleSpec,
    SubprocessEndpoint,
    decode_disparity_response,
    read_request,
    render_oracle,
    request_disparity,
    request_in_batches,
    write_disparity_response,
    write_request,
)
from depthprobe.robustfit import estimate_horizon

CAM = kitti_camera()
GOLDEN_DIR = Path(__file__).parent / "data"

# Same frozen closed-form value as in test_geometry: disparity of an obstacle
# at 11.55 m for the default camera.
OBSTACLE_DISPARITY_11_55 = 0.0263504611330698287


def flat_image(width=64, height=48):
    return ImageBuffer(np.full((height, width, 3), 90, dtype=np.uint8))


def small_camera(width=64, height=48):
    return kitti_camera(f_px=70.0, image_w_px=width, image_h_px=height)


class TestRenderOracle:
    def test_empty_obstacles_matches_profile_rowwise(self):
        plane = GroundPlaneModel(CAM, horizon_y=-4.0)
        spec = OracleSpec(mode=OracleMode.GEOMETRY_AWARE, plane=plane)
        dmap = render_oracle(spec, CAM.image_w_px, CAM.image_h_px)
        rows = np.arange(CAM.image_h_px) - CAM.cy_px
        profile = ground_disparity_profile(plane, rows)
        np.testing.assert_allclose(dmap.values, np.tile(profile[:, None], (1, CAM.image_w_px)))

    def test_obstacle_footprint_has_frozen_disparity(self):
        plane = GroundPlaneModel(CAM, horizon_y=0.0)
        obstacle = OracleObstacle(
            polygon_px=((500, 200), (600, 200), (600, 280), (500, 280)), depth_m=11.55
        )
        spec = OracleSpec(mode=OracleMode.GEOMETRY_AWARE, plane=plane, obstacles=(obstacle,))
        dmap = render_oracle(spec, CAM.image_w_px, CAM.image_h_px)
        patch = dmap.values[220:260, 520:580]
        np.testing.assert_allclose(patch, OBSTACLE_DISPARITY_11_55, rtol=1e-9)

    def test_noiseless_render_is_deterministic(self):
        plane = GroundPlaneModel(CAM, horizon_y=2.0)
        spec = OracleSpec(mode=OracleMode.GEOMETRY_AWARE, plane=plane)
        a = render_oracle(spec, CAM.image_w_px, CAM.image_h_px, seed=1)
        b = render_oracle(spec, CAM.image_w_px, CAM.image_h_px, seed=2)
        assert np.array_equal(a.values, b.values)

    def test_noise_is_seeded(self):
        cam = small_camera(100, 80)
        plane = GroundPlaneModel(cam, horizon_y=2.0)
        spec = OracleSpec(mode=OracleMode.GEOMETRY_AWARE, plane=plane, noise_sd=0.001)
        a = render_oracle(spec, 100, 80, seed=7)
        b = render_oracle(spec, 100, 80, seed=7)
        c = render_oracle(spec, 100, 80, seed=8)
        assert np.array_equal(a.values, b.values)
        assert not np.array_equal(a.values, c.values)

    def test_painters_order_nearer_wins(self):
        plane = GroundPlaneModel(CAM, horizon_y=0.0)
        far = OracleObstacle(((400, 190), (700, 190), (700, 300), (400, 300)), depth_m=25.0)
        near = OracleObstacle(((550, 210), (650, 210), (650, 320), (550, 320)), depth_m=9.0)
        for order in [(far, near), (near, far)]:
            spec = OracleSpec(mode=OracleMode.GEOMETRY_AWARE, plane=plane, obstacles=order)
            dmap = render_oracle(spec, CAM.image_w_px, CAM.image_h_px)
            overlap = dmap.values[220:290, 560:640]
            np.testing.assert_allclose(
                overlap, CAM.f_px * CAM.baseline_m / (9.0 * CAM.image_w_px), rtol=1e-9
            )

    def test_fixed_prior_renders_central_window(self):
        prior = GroundPlaneModel(CAM, horizon_y=-6.0)
        spec = OracleSpec(mode=OracleMode.FIXED_PRIOR, prior_plane=prior)
        full = render_oracle(spec, CAM.image_w_px, CAM.image_h_px)
        ch, cw = 275, 1180
        crop = render_oracle(spec, cw, ch)
        r0 = (CAM.image_h_px - ch) // 2
        c0 = (CAM.image_w_px - cw) // 2
        np.testing.assert_allclose(
            crop.values, full.values[r0 : r0 + ch, c0 : c0 + cw], atol=1e-12
        )

    def test_geometry_camera_must_match_raster(self):
        plane = GroundPlaneModel(CAM, horizon_y=0.0)
        spec = OracleSpec(mode=OracleMode.GEOMETRY_AWARE, plane=plane)
        with pytest.raises(DomainError):
            render_oracle(spec, 100, 100)

    def test_estimate_horizon_recovers_plane(self):
        for h_y in (-12.0, 0.0, 9.5):
            plane = GroundPlaneModel(CAM, horizon_y=h_y)
            spec = OracleSpec(mode=OracleMode.GEOMETRY_AWARE, plane=plane)
            dmap = render_oracle(spec, CAM.image_w_px, CAM.image_h_px)
            est = estimate_horizon(dmap)
            assert abs(est.horizon_y - h_y) <= 0.5

    def test_spec_validation(self):
        with pytest.raises(ConfigurationError):
            OracleSpec(mode=OracleMode.GEOMETRY_AWARE)
        with pytest.raises(ConfigurationError):
            OracleSpec(mode=OracleMode.FIXED_PRIOR)
        with pytest.raises(DomainError):
            OracleObstacle(((0, 0), (1, 0), (1, 1)), depth_m=0.0)


class TestWireCodec:
    def test_round_trip_quantization_bound_on_fuzzed_maps(self, tmp_path):
        rng = np.random.default_rng(0)
        for i in range(30):
            h = int(rng.integers(2, 40))
            w = int(rng.integers(2, 40))
            d_max_true = float(rng.uniform(0.01, 0.98))
            values = rng.uniform(0, d_max_true, size=(h, w))
            write_disparity_response(tmp_path, f"m{i}", values)
            decoded = decode_disparity_response(tmp_path, f"m{i}", expected_size=(w, h))
            d_max = float(values.max())
            assert np.max(np.abs(decoded.values - values)) <= d_max / 65535

    def test_all_zero_map(self, tmp_path):
        write_disparity_response(tmp_path, "z", np.zeros((4, 4)))
        decoded = decode_disparity_response(tmp_path, "z")
        assert np.array_equal(decoded.values, np.zeros((4, 4)))

    def test_reencode_is_pixel_identical(self, tmp_path):
        rng = np.random.default_rng(1)
        values = rng.uniform(0, 0.5, size=(16, 16))
        write_disparity_response(tmp_path, "a", values, d_max=0.5)
        first = decode_disparity_response(tmp_path, "a")
        write_disparity_response(tmp_path, "b", first.values, d_max=0.5)
        a = np.asarray(Image.open(tmp_path / "a.disp.png"))
        b = np.asarray(Image.open(tmp_path / "b.disp.png"))
        assert np.array_equal(a, b)

    def test_golden_fixture_round_trip(self, tmp_path):
        decoded = decode_disparity_response(GOLDEN_DIR, "golden", expected_size=(1242, 375))
        meta = json.loads((GOLDEN_DIR / "golden.scene.json").read_text())
        plane = GroundPlaneModel(CAM, horizon_y=meta["horizon_y"])
        obstacles = tuple(
            OracleObstacle(tuple(map(tuple, o["polygon_px"])), o["depth_m"])
            for o in meta["obstacles"]
        )
        truth = render_oracle(
            OracleSpec(mode=OracleMode.GEOMETRY_AWARE, plane=plane, obstacles=obstacles),
            1242,
            375,
        )
        d_max = json.loads((GOLDEN_DIR / "golden.disp.json").read_text())["d_max"]
        assert np.max(np.abs(decoded.values - truth.values)) <= d_max / 65535

    @pytest.mark.parametrize(
        "breakage,expected_in_message",
        [
            ("missing_png", "disp.png"),
            ("missing_sidecar", "disp.json"),
            ("bad_json", "disp.json"),
            ("missing_keys", "disp.json"),
            ("bad_dmax", "disp.json"),
            ("wrong_dims", "disp.png"),
            ("eight_bit", "disp.png"),
            ("too_large_values", "disp.png"),
        ],
    )
    def test_malformed_responses_name_offending_file(self, tmp_path, breakage, expected_in_message):
        values = np.full((8, 8), 0.125)
        write_disparity_response(tmp_path, "x", values, d_max=0.5)
        png = tmp_path / "x.disp.png"
        sidecar = tmp_path / "x.disp.json"
        if breakage == "missing_png":
            png.unlink()
        elif breakage == "missing_sidecar":
            sidecar.unlink()
        elif breakage == "bad_json":
            sidecar.write_text("{not json")
        elif breakage == "missing_keys":
            sidecar.write_text(json.dumps({"width": 8}))
        elif breakage == "bad_dmax":
            sidecar.write_text(json.dumps({"d_max": -2.0, "width": 8, "height": 8}))
        elif breakage == "wrong_dims":
            sidecar.write_text(json.dumps({"d_max": 0.5, "width": 9, "height": 8}))
        elif breakage == "eight_bit":
            Image.fromarray(np.zeros((8, 8), dtype=np.uint8), mode="L").save(png)
        elif breakage == "too_large_values":
            sidecar.write_text(json.dumps({"d_max": 40.0, "width": 8, "height": 8}))
        with pytest.raises(ProtocolError) as err:
            decode_disparity_response(tmp_path, "x", expected_size=(8, 8))
        assert expected_in_message in str(err.value)
        assert "x." in err.value.path

    def test_size_mismatch_with_request(self, tmp_path):
        write_disparity_response(tmp_path, "x", np.zeros((8, 8)))
        with pytest.raises(ProtocolError):
            decode_disparity_response(tmp_path, "x", expected_size=(10, 8))

    def test_request_round_trip(self, tmp_path):
        imgs = [flat_image(20, 10), flat_image(12, 14)]
        stems = write_request(tmp_path / "b0", "b0", imgs)
        assert stems == ["img_000", "img_001"]
        assert (tmp_path / "b0" / "request.done").exists()
        parsed = read_request(tmp_path / "b0")
        assert [s for s, _ in parsed] == stems
        assert parsed[0][1].pixels_equal(imgs[0])
        assert parsed[1][1].pixels_equal(imgs[1])

    def test_read_request_rejects_bad_manifest(self, tmp_path):
        (tmp_path / "request.json").write_text("nope")
        with pytest.raises(ProtocolError):
            read_request(tmp_path)


class TestOracleEndpoint:
    def test_geometry_aware_requires_hints(self):
        ep = OracleEndpoint(mode=OracleMode.GEOMETRY_AWARE)
        with pytest.raises(ConfigurationError):
            request_disparity(ep, [flat_image()])

    def test_geometry_aware_reduces_to_profile(self):
        cam = small_camera()
        plane = GroundPlaneModel(cam, horizon_y=1.0)
        hint = OracleSpec(mode=OracleMode.GEOMETRY_AWARE, plane=plane)
        ep = OracleEndpoint(mode=OracleMode.GEOMETRY_AWARE)
        (dmap,) = request_disparity(ep, [flat_image()], [hint])
        rows = np.arange(48) - 24.0
        profile = ground_disparity_profile(plane, rows)
        np.testing.assert_allclose(dmap.values, np.tile(profile[:, None], (1, 64)))

    def test_fixed_prior_ignores_crop_offsets(self):
        # On pitch-cropped images, the prior's horizon estimate never moves.
        prior = GroundPlaneModel(CAM, horizon_y=0.0)
        ep = OracleEndpoint(mode=OracleMode.FIXED_PRIOR, prior_plane=prior)
        crop = flat_image(1180, 300)
        maps = request_disparity(ep, [crop, crop, crop])
        ests = [estimate_horizon(m).horizon_y for m in maps]
        assert max(ests) - min(ests) == pytest.approx(0.0, abs=1e-9)

    def test_batch_order_and_chunking(self):
        cam = small_camera()
        ep = OracleEndpoint(mode=OracleMode.GEOMETRY_AWARE, max_batch=2)
        hints = [
            OracleSpec(mode=OracleMode.GEOMETRY_AWARE, plane=GroundPlaneModel(cam, horizon_y=h))
            for h in (-8.0, -4.0, 0.0, 4.0, 8.0)
        ]
        images = [flat_image() for _ in hints]
        with pytest.raises(DomainError):
            request_disparity(ep, images, hints)
        maps = request_in_batches(ep, images, hints)
        assert len(maps) == 5
        # ground starts exactly at each hint's horizon row
        for dmap, hint in zip(maps, hints):
            first_nonzero = np.nonzero(dmap.values[:, 0] > 0)[0][0]
            assert first_nonzero == int(np.ceil(hint.plane.horizon_y + 24.0 + 1e-9))


ADAPTER_SCRIPT = textwrap.dedent(
    """
    import json, sys, time
    from pathlib import Path
    import numpy as np
    from PIL import Image

    behavior = sys.argv[1]
    root = Path(sys.argv[-1])
    processed = set()
    if behavior == "crash":
        sys.exit(3)
    while True:
        if (root / "shutdown").exists():
            sys.exit(0)
        for req in sorted(root.glob("*/request.done")):
            bdir = req.parent
            if bdir in processed:
                continue
            processed.add(bdir)
            manifest = json.loads((bdir / "request.json").read_text())
            for entry in manifest["images"]:
                name = entry["image"][:-4]
                if behavior == "error_files":
                    (bdir / (name + ".error")).write_text("synthetic failure")
                    continue
                if behavior == "silent":
                    continue
                with Image.open(bdir / entry["image"]) as im:
                    w, h = im.size
                vals = np.full((h, w), 0.02)
                d_max = float(vals.max())
                q = np.rint(vals / d_max * 65535).astype(np.uint16)
                Image.fromarray(q).save(bdir / (name + ".disp.png"))
                (bdir / (name + ".disp.json")).write_text(
                    json.dumps({"d_max": d_max, "width": w, "height": h})
                )
                (bdir / (name + ".done")).touch()
        time.sleep(0.005)
    """
)


@pytest.fixture
def adapter_script(tmp_path):
    path = tmp_path / "toy_adapter.py"
    path.write_text(ADAPTER_SCRIPT)
    return path


class TestSubprocessEndpoint:
    def test_constant_round_trip(self, adapter_script, tmp_path):
        ep = SubprocessEndpoint(
            command=(sys.executable, str(adapter_script), "ok"),
            timeout_s=20.0,
            exchange_root=str(tmp_path),
        )
        with ep:
            maps = request_disparity(ep, [flat_image(30, 20), flat_image(16, 12)])
            assert len(maps) == 2
            for dmap in maps:
                assert np.allclose(dmap.values, 0.02, atol=0.02 / 65535)
            # second batch through the same session
            (dmap,) = request_disparity(ep, [flat_image(8, 8)])
            assert dmap.width == 8

    def test_error_files_fail_batch_atomically(self, adapter_script, tmp_path):
        ep = SubprocessEndpoint(
            command=(sys.executable, str(adapter_script), "error_files"),
            timeout_s=20.0,
            exchange_root=str(tmp_path),
        )
        with ep:
            with pytest.raises(ModelError) as err:
                request_disparity(ep, [flat_image(8, 8)])
            assert "synthetic failure" in str(err.value)

    def test_crashing_adapter_reports_exit(self, adapter_script, tmp_path):
        ep = SubprocessEndpoint(
            command=(sys.executable, str(adapter_script), "crash"),
            timeout_s=20.0,
            exchange_root=str(tmp_path),
        )
        with ep:
            with pytest.raises(ModelError) as err:
                request_disparity(ep, [flat_image(8, 8)])
            assert "status 3" in str(err.value)

    def test_silent_adapter_times_out(self, adapter_script, tmp_path):
        ep = SubprocessEndpoint(
            command=(sys.executable, str(adapter_script), "silent"),
            timeout_s=1.0,
            exchange_root=str(tmp_path),
        )
        with ep:
            with pytest.raises(EndpointTimeoutError):
                request_disparity(ep, [flat_image(8, 8)])


class TestDirectoryEndpoint:
    def test_round_trip_with_threaded_responder(self, tmp_path):
        exchange = tmp_path / "xchg"
        stop = threading.Event()

        def responder():
            served = set()
            while not stop.is_set():
                for req in exchange.glob("*/request.done"):
                    bdir = req.parent
                    if bdir in served:
                        continue
                    served.add(bdir)
                    for stem, img in read_request(bdir):
                        write_disparity_response(
                            bdir, stem, np.full((img.height, img.width), 0.03)
                        )
                time.sleep(0.005)

        thread = threading.Thread(target=responder, daemon=True)
        thread.start()
        try:
            ep = DirectoryEndpoint(directory=str(exchange), timeout_s=20.0)
            maps = request_disparity(ep, [flat_image(10, 6)])
            assert np.allclose(maps[0].values, 0.03, atol=0.03 / 65535)
        finally:
            stop.set()
            thread.join(timeout=2)
