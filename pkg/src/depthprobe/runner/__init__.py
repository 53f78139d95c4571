"""Experiment orchestration: dataset ingestion, the preset probe
experiments, trial bookkeeping, statistics and report emission."""

from .report import (  # noqa: F401
    Curve,
    CurvePoint,
    ExperimentReport,
    Panel,
    TrialRecord,
    aggregate_curve,
    emit_report,
    trials_from_csv,
)
from .dataset import DatasetLayout, load_dataset_scenes  # noqa: F401
from .experiments import (  # noqa: F401
    ContextFlipParams,
    ExperimentKind,
    ExperimentSpec,
    ObstacleDisparityParams,
    PhotometricParams,
    PitchCropParams,
    PitchHorizonParams,
    PositionScaleParams,
    RecognitionParams,
    RollCropParams,
    oracle_bracket_flags,
    rebuild_report,
    run_context_and_flip,
    run_experiment,
    run_photometric_suite,
    run_pitch_crop,
    run_pitch_horizon_natural,
    run_pitch_vs_obstacle_disparity,
    run_position_vs_scale,
    run_recognition_probes,
    run_roll_crop,
)
