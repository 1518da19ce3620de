"""isacsense: monostatic OFDM-radar sensing under TDD with NLOS detection."""

from isacsense.clutter import (
    ClutterModel,
    extract_environment,
    fit_clutter,
    load_clutter_model,
    remove_clutter,
    save_clutter_model,
)
from isacsense.detection import (
    Detection,
    DetectionConfig,
    DetectionRateReport,
    SceneGeometry,
    cfar_threshold,
    detect_peaks,
    expected_nlos,
    mask_zero_speed,
    match_and_rate,
    moving_average,
    range_adjusted_threshold,
    split_regions,
)
from isacsense.model import (
    SPEED_OF_LIGHT,
    CsiFrame,
    PerformanceBounds,
    Scatterer,
    SystemParams,
    TddConfig,
    default_params,
    default_tdd,
    doppler_steering,
    performance_bounds,
    range_steering,
    synthesize_csi,
)
from isacsense.periodogram import (
    Periodogram,
    compute_periodogram,
    estimate_noise_floor,
    periodogram_snr,
    read_periodogram_file,
    write_periodogram,
)
from isacsense.scenario import (
    GroundTruthSample,
    ScatterAmplitudes,
    Trajectory,
    TrajectorySegment,
    compose_scene,
    read_capture,
    run_measurement,
    sample_truth,
    write_capture,
)
from isacsense.tdd import (
    DecimationPlan,
    ObservationWindow,
    apply_tdd_mask,
    build_decimation_plan,
    concatenate_window,
    replica_spacing,
    sliding_windows,
    tdd_psf,
)

__version__ = "0.1.0"

__all__ = [
    "SPEED_OF_LIGHT",
    "ClutterModel",
    "CsiFrame",
    "DecimationPlan",
    "Detection",
    "DetectionConfig",
    "DetectionRateReport",
    "GroundTruthSample",
    "ObservationWindow",
    "PerformanceBounds",
    "Periodogram",
    "ScatterAmplitudes",
    "Scatterer",
    "SceneGeometry",
    "SystemParams",
    "TddConfig",
    "Trajectory",
    "TrajectorySegment",
    "apply_tdd_mask",
    "build_decimation_plan",
    "cfar_threshold",
    "compose_scene",
    "compute_periodogram",
    "concatenate_window",
    "default_params",
    "default_tdd",
    "detect_peaks",
    "doppler_steering",
    "estimate_noise_floor",
    "expected_nlos",
    "extract_environment",
    "fit_clutter",
    "load_clutter_model",
    "mask_zero_speed",
    "match_and_rate",
    "moving_average",
    "performance_bounds",
    "periodogram_snr",
    "range_adjusted_threshold",
    "range_steering",
    "read_capture",
    "read_periodogram_file",
    "remove_clutter",
    "replica_spacing",
    "run_measurement",
    "sample_truth",
    "save_clutter_model",
    "sliding_windows",
    "split_regions",
    "synthesize_csi",
    "tdd_psf",
    "write_capture",
    "write_periodogram",
    "__version__",
]
