import json

import numpy as np
import pytest

from depthprobe.cli import main
from depthprobe.imgsynth import ImageBuffer
from depthprobe.modelio import decode_disparity_response


@pytest.fixture
def scene_png(tmp_path):
    rng = np.random.default_rng(0)
    img = ImageBuffer(rng.integers(0, 256, size=(375, 1242, 3), dtype=np.uint8))
    path = tmp_path / "scene.png"
    img.to_png(path)
    return path


class TestSynth:
    def test_pitch_crop(self, tmp_path, scene_png):
        out = tmp_path / "crop.png"
        assert main(["synth", "pitch", "--image", str(scene_png), "--offset", "20",
                     "--out", str(out)]) == 0
        cropped = ImageBuffer.from_png(out)
        assert cropped.height == 300 and cropped.width == 1180

    def test_flip(self, tmp_path, scene_png):
        out = tmp_path / "flip.png"
        assert main(["synth", "flip", "--image", str(scene_png), "--out", str(out)]) == 0
        src = ImageBuffer.from_png(scene_png)
        flipped = ImageBuffer.from_png(out)
        assert np.array_equal(flipped.pixels, src.pixels[::-1])

    def test_grayscale(self, tmp_path, scene_png):
        out = tmp_path / "gray.png"
        assert main(["synth", "photometric", "--image", str(scene_png),
                     "--mode", "grayscale", "--out", str(out)]) == 0
        gray = ImageBuffer.from_png(out)
        assert np.array_equal(gray.pixels[..., 0], gray.pixels[..., 1])

    def test_bad_crop_offset_is_clean_error(self, tmp_path, scene_png):
        assert main(["synth", "pitch", "--image", str(scene_png), "--offset", "500",
                     "--out", str(tmp_path / "x.png")]) == 2


class TestOracleAndFit:
    def test_oracle_then_fit(self, tmp_path, capsys):
        out = tmp_path / "maps"
        assert main(["oracle", "--count", "1", "--seed", "4", "--out", str(out)]) == 0
        stems = [p.name[: -len(".disp.png")] for p in out.glob("*.disp.png")]
        assert len(stems) == 1
        horizon = json.loads((out / f"{stems[0]}.horizon.json").read_text())["horizon_y"]
        assert main(["fit", "--map", str(out / f"{stems[0]}.disp.png"), "--roll"]) == 0
        printed = capsys.readouterr().out
        line = [l for l in printed.splitlines() if l.startswith("horizon_y:")][0]
        estimated = float(line.split()[1])
        assert estimated == pytest.approx(horizon, abs=0.5)


class TestProbeAndReport:
    def test_probe_pitch_crop_with_config_then_reemit(self, tmp_path, capsys):
        config = tmp_path / "exp.json"
        config.write_text(json.dumps({
            "schema_version": 1,
            "params": {"offsets": [-20, 0, 20]},
        }))
        out = tmp_path / "probe_out"
        rc = main([
            "probe", "pitch_crop", "--endpoint", "oracle:geometry", "--synthetic", "2",
            "--obstacles", "0", "--seed", "5", "--config", str(config), "--out", str(out),
        ])
        assert rc == 0
        printed = capsys.readouterr().out
        assert "slope=" in printed
        assert (out / "report.json").exists() and (out / "trials.csv").exists()
        report = json.loads((out / "report.json").read_text())
        assert report["regression"]["slope"] == pytest.approx(1.0, abs=0.02)
        offsets = {t["params"]["offset_px"] for t in report["trials"]}
        assert offsets == {-20.0, 0.0, 20.0}

        re_out = tmp_path / "reemitted"
        assert main(["report", "--trials", str(out / "trials.csv"), "--out", str(re_out)]) == 0
        rebuilt = json.loads((re_out / "report.json").read_text())
        assert rebuilt["regression"]["slope"] == pytest.approx(
            report["regression"]["slope"], abs=1e-12
        )

    def test_probe_with_bracket_flag(self, tmp_path, capsys):
        out = tmp_path / "bracketed"
        rc = main([
            "probe", "pitch_crop", "--endpoint", "oracle:geometry", "--synthetic", "2",
            "--obstacles", "0", "--seed", "5", "--bracket", "--out", str(out),
        ])
        assert rc == 0
        assert "within_bracket=True" in capsys.readouterr().out
        report = json.loads((out / "report.json").read_text())
        flags = report["extras"]["oracle_bracket"]
        assert flags["within_bracket"] is True
        assert flags["fixed_prior_slope"] <= flags["probe_slope"] <= flags["geometry_aware_slope"]

    def test_probe_fixed_prior_endpoint(self, tmp_path):
        out = tmp_path / "fixed_out"
        rc = main([
            "probe", "pitch_crop", "--endpoint", "oracle:fixed", "--synthetic", "2",
            "--obstacles", "0", "--seed", "5", "--out", str(out),
        ])
        assert rc == 0
        report = json.loads((out / "report.json").read_text())
        assert abs(report["regression"]["slope"]) <= 0.02

    def test_unknown_endpoint_is_clean_error(self, tmp_path):
        rc = main(["probe", "pitch_crop", "--endpoint", "magic:box", "--out", str(tmp_path)])
        assert rc == 2


class TestMetricsCommand:
    def test_metrics_over_condition_dirs(self, tmp_path, capsys):
        from depthprobe.modelio import write_disparity_response

        rng = np.random.default_rng(1)
        gt_dir = tmp_path / "gt"
        gt_dir.mkdir()
        pred_dir = tmp_path / "pred"
        for condition in ("unmodified", "grayscale"):
            (pred_dir / condition).mkdir(parents=True)
        for i in range(2):
            gt = rng.uniform(0.01, 0.4, size=(32, 64))
            write_disparity_response(gt_dir, f"img{i}", gt, d_max=0.4)
            write_disparity_response(pred_dir / "unmodified", f"img{i}", gt, d_max=0.4)
            noisy = np.clip(gt * 1.05, 0, 0.5)
            write_disparity_response(pred_dir / "grayscale", f"img{i}", noisy, d_max=0.5)
        out = tmp_path / "metrics_out"
        rc = main(["metrics", "--pred", str(pred_dir), "--gt", str(gt_dir),
                   "--out", str(out)])
        assert rc == 0
        text = (out / "metrics.csv").read_text()
        lines = text.strip().splitlines()
        assert lines[0].startswith("condition,abs_rel")
        rows = {l.split(",")[0]: l for l in lines[1:]}
        assert float(rows["unmodified"].split(",")[1]) == pytest.approx(0.0, abs=1e-9)
        assert float(rows["grayscale"].split(",")[1]) > 0.0
        assert (out / "comparison.json").exists()


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
