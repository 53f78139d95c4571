"""Command-line interface.

Subcommands:

* ``synth``   emit manipulated images only (crops, flips, photometric, ...)
* ``probe``   run one experiment and write its report
* ``metrics`` Table-style metric evaluation between prediction and gt dirs
* ``fit``     horizon/roll estimates for a single disparity map
* ``oracle``  render oracle disparity maps for synthetic scenes
* ``report``  re-emit report files from an existing trials.csv

Endpoints are given as ``oracle:geometry``, ``oracle:fixed[:h_y]``,
``dir:PATH`` or ``cmd:<shell command>`` (adapter launched per run, exchange
directory appended to its argv). ``DEPTHPROBE_DATA`` provides the default
dataset root and ``DEPTHPROBE_EXCHANGE_ROOT`` the exchange scratch space.
"""

from __future__ import annotations

import argparse
import json
import os
import shlex
import sys
from dataclasses import fields
from pathlib import Path

from . import __version__
from .errors import ConfigurationError, DepthProbeError
from .geometry import GroundPlaneModel, kitti_camera
from .imgsynth import (
    ImageBuffer,
    PhotometricMode,
    add_shadow,
    apply_photometric,
    crop_pitch,
    crop_roll,
    flip_vertical,
)
from .geometry import PixelRect
from .metrics import EvalConfig, MetricSet, compare_metric_rows, compute_metrics, metrics_to_csv
from .modelio import (
    DirectoryEndpoint,
    OracleEndpoint,
    OracleMode,
    SubprocessEndpoint,
    decode_disparity_response,
    write_disparity_response,
)
from .robustfit import DisparityMap, estimate_horizon, estimate_roll
from .runner import (
    DatasetLayout,
    ExperimentKind,
    ExperimentSpec,
    emit_report,
    load_dataset_scenes,
    rebuild_report,
    run_experiment,
    trials_from_csv,
)
from .runner.experiments import _PARAM_TYPES
from .scenes import make_ground_scene, render_scene_disparity

DATA_ENV = "DEPTHPROBE_DATA"


def _parse_endpoint(text: str):
    if text.startswith("oracle:"):
        rest = text.split(":", 2)[1:]
        mode = rest[0]
        if mode in ("geometry", "geometry_aware"):
            return OracleEndpoint(mode=OracleMode.GEOMETRY_AWARE)
        if mode in ("fixed", "fixed_prior"):
            h_y = float(rest[1]) if len(rest) > 1 else 0.0
            return OracleEndpoint(
                mode=OracleMode.FIXED_PRIOR,
                prior_plane=GroundPlaneModel(kitti_camera(), horizon_y=h_y),
            )
        raise ConfigurationError(f"unknown oracle endpoint {text!r}")
    if text.startswith("dir:"):
        return DirectoryEndpoint(directory=text[4:])
    if text.startswith("cmd:"):
        return SubprocessEndpoint(command=tuple(shlex.split(text[4:])))
    raise ConfigurationError(
        f"endpoint must start with oracle:, dir: or cmd:, got {text!r}"
    )


def _load_config(path: str) -> dict:
    text = Path(path).read_text()
    if path.endswith(".toml"):
        try:
            import tomllib  # Python >= 3.11
        except ModuleNotFoundError:
            import tomli as tomllib
        cfg = tomllib.loads(text)
    else:
        cfg = json.loads(text)
    version = cfg.pop("schema_version", 1)
    if version != 1:
        raise ConfigurationError(f"unsupported config schema_version {version}")
    return cfg


def _params_from_config(kind: str, cfg: dict):
    cls = _PARAM_TYPES[kind]
    allowed = {f.name for f in fields(cls)}
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigurationError(f"unknown {kind} parameters {sorted(unknown)}")
    coerced = {
        key: tuple(value) if isinstance(value, list) else value
        for key, value in cfg.items()
    }
    return cls(**coerced)


def _scenes_for(args) -> list:
    dataset = args.dataset or os.environ.get(DATA_ENV)
    if dataset:
        layout = DatasetLayout(
            images_dir=str(Path(dataset) / "images"),
            cutouts_dir=_optional_dir(dataset, "cutouts"),
            semantic_dir=_optional_dir(dataset, "semantic"),
            gt_dir=_optional_dir(dataset, "gt"),
            obstacles_dir=_optional_dir(dataset, "obstacles"),
        )
        return load_dataset_scenes(layout)
    return [
        make_ground_scene(args.seed * 10007 + i, n_obstacles=args.obstacles)
        for i in range(args.synthetic)
    ]


def _optional_dir(root, name):
    path = Path(root) / name
    return str(path) if path.is_dir() else None


def _cmd_probe(args) -> int:
    endpoint = _parse_endpoint(args.endpoint)
    params = None
    if args.config:
        cfg = _load_config(args.config)
        cfg.pop("kind", None)
        params = _params_from_config(args.kind, cfg.get("params", cfg))
    spec = ExperimentSpec(
        kind=args.kind,
        endpoint=endpoint,
        params=params,
        seed=args.seed,
        workers=args.workers,
    )
    scenes = _scenes_for(args)
    with endpoint:
        report = run_experiment(spec, scenes)
    if args.bracket:
        if args.kind not in (ExperimentKind.PITCH_CROP, ExperimentKind.ROLL_CROP):
            raise ConfigurationError("--bracket applies to pitch_crop and roll_crop")
        from .runner.experiments import oracle_bracket_flags

        geo_spec = ExperimentSpec(
            kind=args.kind, endpoint=_parse_endpoint("oracle:geometry"),
            params=spec.params, seed=args.seed, workers=args.workers,
        )
        fixed_spec = ExperimentSpec(
            kind=args.kind, endpoint=_parse_endpoint("oracle:fixed"),
            params=spec.params, seed=args.seed, workers=args.workers,
        )
        geo_report = run_experiment(geo_spec, scenes)
        fixed_report = run_experiment(fixed_spec, scenes)
        report.extras["oracle_bracket"] = oracle_bracket_flags(
            report, fixed_report, geo_report
        )
        flags = report.extras["oracle_bracket"]
        print(
            f"oracle bracket: {flags['fixed_prior_slope']:.4f} <= "
            f"{flags['probe_slope']:.4f} <= {flags['geometry_aware_slope']:.4f} "
            f"-> within_bracket={flags['within_bracket']}"
        )
    written = emit_report(report, args.out)
    if report.regression:
        reg = report.regression
        print(
            f"{args.kind}: slope={reg.slope:.4f} r={reg.pearson_r:.4f} "
            f"n={reg.n_points} outliers_removed={reg.n_outliers_removed}"
        )
    ok = len(report.ok_trials())
    print(f"{args.kind}: {ok}/{len(report.trials)} trials ok -> {args.out}")
    for path in written:
        print(f"  wrote {path}")
    return 0


def _cmd_synth(args) -> int:
    image = ImageBuffer.from_png(args.image)
    if args.op == "pitch":
        out = crop_pitch(image, args.offset)
    elif args.op == "roll":
        out = crop_roll(image, args.angle)
    elif args.op == "flip":
        out = flip_vertical(image)
    elif args.op == "shadow":
        col0, row0, w, h = args.box
        out = add_shadow(image, PixelRect(col0, row0, w, h), args.darken)
    elif args.op == "photometric":
        from .imgsynth import load_semantic_map

        semantic = None
        if args.semantic:
            semantic = load_semantic_map(args.semantic, args.semantic_table)
        out = apply_photometric(image, args.mode, semantic=semantic)
    else:
        raise ConfigurationError(f"unknown synth op {args.op!r}")
    out.to_png(args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_metrics(args) -> int:
    camera = kitti_camera()
    cfg = EvalConfig(gt_kind=args.gt_kind, depth_cap_m=args.depth_cap)
    pred_root = Path(args.pred)
    gt_root = Path(args.gt)
    conditions = sorted(p.name for p in pred_root.iterdir() if p.is_dir())
    if not conditions:
        conditions = [""]
    rows: dict[str, MetricSet] = {}
    for condition in conditions:
        cond_dir = pred_root / condition if condition else pred_root
        per_image = []
        for png in sorted(cond_dir.glob("*.disp.png")):
            stem = png.name[: -len(".disp.png")]
            pred = decode_disparity_response(cond_dir, stem)
            if args.gt_kind == "normalized_disparity":
                gt = decode_disparity_response(gt_root, stem)
            else:
                from .runner.dataset import _load_depth_raster

                gt = _load_depth_raster(gt_root, stem)
                if gt is None:
                    continue
            per_image.append(compute_metrics(pred, gt, camera, cfg))
        if per_image:
            rows[condition or "unmodified"] = MetricSet.mean_of(per_image)
    if not rows:
        raise ConfigurationError("no evaluable prediction/gt pairs found")
    csv_text = metrics_to_csv(rows)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(csv_text)
    print(csv_text, end="")
    if len(rows) >= 2 and any(c.lower() == "unmodified" for c in rows):
        comparison = compare_metric_rows(rows)
        (out / "comparison.json").write_text(
            json.dumps(
                {
                    "baseline": comparison.baseline,
                    "deltas": comparison.deltas,
                    "value_preserving_near_baseline": comparison.value_preserving_near_baseline,
                    "flat_color_degraded": comparison.flat_color_degraded,
                },
                indent=2,
                sort_keys=True,
            )
        )
    return 0


def _cmd_fit(args) -> int:
    directory = Path(args.map).parent
    stem = Path(args.map).name
    for suffix in (".disp.png",):
        if stem.endswith(suffix):
            stem = stem[: -len(suffix)]
    dmap = decode_disparity_response(directory, stem)
    est = estimate_horizon(dmap, repeats=args.repeats)
    print(f"horizon_y: {est.horizon_y:.3f} px (spread {est.spread:.3f}, repeats {est.repeats})")
    if args.roll:
        roll = estimate_roll(dmap, band=(args.band[0], args.band[1]))
        print(f"roll: {roll.angle_deg:.3f} deg (support {roll.support})")
    return 0


def _cmd_oracle(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        scene = make_ground_scene(args.seed * 10007 + i, n_obstacles=args.obstacles)
        dmap = render_scene_disparity(scene, noise_sd=args.noise_sd, seed=args.seed + i)
        scene.image.to_png(out / f"{scene.scene_id}.png")
        write_disparity_response(out, scene.scene_id, dmap.values)
        (out / f"{scene.scene_id}.horizon.json").write_text(
            json.dumps({"horizon_y": scene.plane.horizon_y})
        )
        print(f"wrote {scene.scene_id} (horizon_y {scene.plane.horizon_y:+.2f} px)")
    return 0


def _cmd_report(args) -> int:
    trials = trials_from_csv(args.trials)
    report = rebuild_report(trials)
    written = emit_report(report, args.out)
    for path in written:
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="depthprobe",
        description="Probe which pictorial depth cues a monocular depth estimator uses.",
    )
    parser.add_argument("--version", action="version", version=f"depthprobe {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    probe = sub.add_parser("probe", help="run one experiment")
    probe.add_argument("kind", choices=ExperimentKind.ALL)
    probe.add_argument("--endpoint", default="oracle:geometry")
    probe.add_argument("--dataset", help=f"dataset root (default ${DATA_ENV})")
    probe.add_argument("--synthetic", type=int, default=6, help="synthetic scene count")
    probe.add_argument("--obstacles", type=int, default=2, help="obstacles per synthetic scene")
    probe.add_argument("--config", help="JSON/TOML experiment parameters")
    probe.add_argument("--seed", type=int, default=0)
    probe.add_argument("--workers", type=int, default=1)
    probe.add_argument(
        "--bracket", action="store_true",
        help="also run both oracle endpoints and report the slope-bracket flag",
    )
    probe.add_argument("--out", required=True)
    probe.set_defaults(func=_cmd_probe)

    synth = sub.add_parser("synth", help="emit one manipulated image")
    synth.add_argument("op", choices=("pitch", "roll", "flip", "shadow", "photometric"))
    synth.add_argument("--image", required=True)
    synth.add_argument("--out", required=True)
    synth.add_argument("--offset", type=int, default=0)
    synth.add_argument("--angle", type=float, default=0.0)
    synth.add_argument("--darken", type=float, default=0.6)
    synth.add_argument("--box", type=int, nargs=4, metavar=("COL0", "ROW0", "W", "H"),
                       default=(0, 0, 1, 1))
    synth.add_argument("--mode", choices=PhotometricMode.ALL, default=PhotometricMode.GRAYSCALE)
    synth.add_argument("--semantic")
    synth.add_argument("--semantic-table")
    synth.set_defaults(func=_cmd_synth)

    met = sub.add_parser("metrics", help="evaluate predictions against ground truth")
    met.add_argument("--pred", required=True, help="dir (or dir of condition dirs) of .disp files")
    met.add_argument("--gt", required=True)
    met.add_argument("--gt-kind", choices=("depth_m", "normalized_disparity"),
                     default="normalized_disparity")
    met.add_argument("--depth-cap", type=float, default=80.0)
    met.add_argument("--out", required=True)
    met.set_defaults(func=_cmd_metrics)

    fit = sub.add_parser("fit", help="horizon/roll estimates for one map")
    fit.add_argument("--map", required=True, help="path to <name>.disp.png")
    fit.add_argument("--roll", action="store_true")
    fit.add_argument("--band", type=float, nargs=2, default=(0.030, 0.031))
    fit.add_argument("--repeats", type=int, default=5)
    fit.set_defaults(func=_cmd_fit)

    oracle = sub.add_parser("oracle", help="render synthetic scenes + oracle maps")
    oracle.add_argument("--count", type=int, default=5)
    oracle.add_argument("--obstacles", type=int, default=2)
    oracle.add_argument("--noise-sd", type=float, default=0.0)
    oracle.add_argument("--seed", type=int, default=0)
    oracle.add_argument("--out", required=True)
    oracle.set_defaults(func=_cmd_oracle)

    rep = sub.add_parser("report", help="re-emit report files from trials.csv")
    rep.add_argument("--trials", required=True)
    rep.add_argument("--out", required=True)
    rep.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DepthProbeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
