"""Command-line front end and experiment orchestration.

Subcommands:
    simulate     synthesize a capture (CSI frames + ground truth)
    fit-clutter  fit a clutter model from the start of a capture
    process      periodograms and an SNR table for configured (K, J) pairs
    detect       full NLOS detection chain with rate report
    psf          TDD point-spread function along the speed axis

Exit codes: 0 on success, 2 on configuration errors, 3 on data errors.
All outputs are deterministic for a fixed (config, seed) pair.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from isacsense import clutter as clutter_mod
from isacsense import detection as det_mod
from isacsense import model, periodogram as pgm_mod, scenario as scn_mod, tdd as tdd_mod


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


# -- configuration -----------------------------------------------------------


@dataclass
class RadioSection:
    carrier_hz: float = 27.4e9
    subcarrier_spacing_hz: float = 120e3
    n_subcarriers: int = 1584
    symbols_per_frame: int = 1120
    symbol_s: float = 8.33e-6
    cyclic_prefix_s: float = 0.59e-6
    frame_s: float = 10e-3

    def to_params(self) -> model.SystemParams:
        return model.SystemParams(
            f_c=self.carrier_hz,
            delta_f=self.subcarrier_spacing_hz,
            n_subcarriers=self.n_subcarriers,
            n_symbols=self.symbols_per_frame,
            t_symbol=self.symbol_s,
            t_cp=self.cyclic_prefix_s,
            t_symbol_cp=self.symbol_s + self.cyclic_prefix_s,
            t_frame=self.frame_s,
        )


@dataclass
class TddSection:
    pattern_s: float = 1.25e-3
    dl_symbols: int = 104
    ul_symbols: int = 36

    def to_tdd(self, params: model.SystemParams) -> model.TddConfig:
        patterns = params.n_symbols // (self.dl_symbols + self.ul_symbols)
        cfg = model.TddConfig(
            t_pattern=self.pattern_s,
            n_dl=self.dl_symbols,
            n_ul=self.ul_symbols,
            patterns_per_frame=max(patterns, 1),
        )
        cfg.validate_against(params)
        return cfg


@dataclass
class ProcessingSection:
    decimation: int = 70
    frames_per_window: int = 8
    window_stride: int = 2
    taper: str = "chebyshev"
    taper_attenuation_db: float = 80.0
    snr_table: list = field(default_factory=lambda: [[1, 1], [1, 47], [6, 70], [10, 70]])


@dataclass
class DetectionSection:
    p_fa: float = 1e-4
    range_adjusted: bool = True
    zero_speed_halfwidth_mps: float | None = None
    match_tol_range_m: float | None = None
    match_tol_speed_mps: float | None = None
    top_k_nlos: int = 10
    rate_window_s: float = 0.5

    def to_config(self) -> det_mod.DetectionConfig:
        return det_mod.DetectionConfig(
            p_fa=self.p_fa,
            range_adjusted=self.range_adjusted,
            zero_speed_halfwidth=self.zero_speed_halfwidth_mps,
            match_tol_range=self.match_tol_range_m,
            match_tol_speed=self.match_tol_speed_mps,
            top_k_nlos=self.top_k_nlos,
            rate_window=self.rate_window_s,
        )


@dataclass
class TrajectorySection:
    x_from_m: float = 17.0
    x_to_m: float = 6.5
    speed_mps: float = 1.5
    dwell_s: float = 1.0


@dataclass
class AmplitudeSection:
    gain: float = 100.0
    los_reflectivity: float = 1.0
    wall_reflectivity: float = 10.0
    nlos_reflectivity: float = 1.0
    nlos_bounce_loss_db: float = 10.0
    los_amp: float | None = None
    wall_amp: float | None = None
    nlos_amp: float | None = None

    def to_amplitudes(self) -> scn_mod.ScatterAmplitudes:
        return scn_mod.ScatterAmplitudes(
            gain=self.gain,
            los_reflectivity=self.los_reflectivity,
            wall_reflectivity=self.wall_reflectivity,
            nlos_reflectivity=self.nlos_reflectivity,
            nlos_bounce_loss_db=self.nlos_bounce_loss_db,
            los_amp=self.los_amp,
            wall_amp=self.wall_amp,
            nlos_amp=self.nlos_amp,
        )


@dataclass
class ScenarioSection:
    gnb_height_m: float = 5.12
    wall_distance_m: float = 23.0
    noise_var: float = 1.0
    duration_s: float = 10.0
    phase_mode: str = "coherent"
    trajectory: TrajectorySection = field(default_factory=TrajectorySection)
    amplitudes: AmplitudeSection = field(default_factory=AmplitudeSection)

    def geometry(self) -> det_mod.SceneGeometry:
        return det_mod.SceneGeometry(h_gnb=self.gnb_height_m, d_wall=self.wall_distance_m)

    def to_trajectory(self) -> scn_mod.Trajectory:
        t = self.trajectory
        leg = abs(t.x_to_m - t.x_from_m) / t.speed_mps + t.dwell_s
        legs = max(1, math.ceil(self.duration_s / leg) + 1)
        return scn_mod.Trajectory.back_and_forth(
            t.x_from_m, t.x_to_m, t.speed_mps, t.dwell_s, legs
        )


@dataclass
class ClutterSection:
    energy_threshold: float = 0.99
    calibration_windows: int = 10


@dataclass
class RunConfig:
    seed: int = 20260817
    radio: RadioSection = field(default_factory=RadioSection)
    tdd: TddSection = field(default_factory=TddSection)
    processing: ProcessingSection = field(default_factory=ProcessingSection)
    detection: DetectionSection = field(default_factory=DetectionSection)
    clutter: ClutterSection = field(default_factory=ClutterSection)
    scenario: ScenarioSection = field(default_factory=ScenarioSection)


_SECTION_TYPES = {
    "radio": RadioSection,
    "tdd": TddSection,
    "processing": ProcessingSection,
    "detection": DetectionSection,
    "clutter": ClutterSection,
    "scenario": ScenarioSection,
    "trajectory": TrajectorySection,
    "amplitudes": AmplitudeSection,
}


def _fill(obj, data: dict, path: str) -> None:
    for key, value in data.items():
        if not hasattr(obj, key):
            raise ConfigError(f"{path}{key}: unknown setting")
        current = getattr(obj, key)
        if key in _SECTION_TYPES:
            if not isinstance(value, dict):
                raise ConfigError(f"{path}{key}: expected an object")
            _fill(current, value, f"{path}{key}.")
        else:
            if isinstance(current, bool) and not isinstance(value, bool):
                raise ConfigError(f"{path}{key}: expected true/false")
            setattr(obj, key, value)


def load_config(path: str | Path | None) -> RunConfig:
    """Load a JSON config; missing settings keep their defaults."""
    cfg = RunConfig()
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            data = json.loads(p.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{p}: invalid JSON ({e})") from e
        if not isinstance(data, dict):
            raise ConfigError(f"{p}: top level must be an object")
        _fill(cfg, data, "")
    return cfg


def _domain_objects(cfg: RunConfig):
    """Validated (params, tdd) pair; domain errors become config errors."""
    try:
        params = cfg.radio.to_params()
        tdd = cfg.tdd.to_tdd(params)
        return params, tdd
    except ValueError as e:
        raise ConfigError(str(e)) from e


# -- detection pipeline ------------------------------------------------------


def detect_window(
    window: tdd_mod.ObservationWindow,
    params: model.SystemParams,
    proc: ProcessingSection,
    det_cfg: det_mod.DetectionConfig,
    geometry: det_mod.SceneGeometry,
    clutter_model: clutter_mod.ClutterModel | None = None,
    time: float = 0.0,
) -> list[det_mod.Detection]:
    """One window through the detection chain.

    Clutter projection, periodogram, noise floor, zero-speed discard,
    range-adjusted CFAR peaks with region labels.
    """
    taper = None if proc.taper in (None, "none") else proc.taper
    if clutter_model is not None:
        window = clutter_mod.remove_clutter(window, clutter_model)
    pg = pgm_mod.compute_periodogram(
        window, params, taper=taper, attenuation_db=proc.taper_attenuation_db
    )
    floor = pgm_mod.estimate_noise_floor(pg)
    masked = det_mod.mask_zero_speed(pg, det_cfg.zero_speed_halfwidth)
    return det_mod.detect_peaks(
        masked,
        det_cfg,
        floor,
        geometry=geometry,
        window_idx=window.window_idx,
        time=time,
    )


def run_detection(
    frames,
    frame_truths: list[scn_mod.GroundTruthSample],
    params: model.SystemParams,
    tdd: model.TddConfig,
    proc: ProcessingSection,
    det_cfg: det_mod.DetectionConfig,
    geometry: det_mod.SceneGeometry,
    clutter_model: clutter_mod.ClutterModel | None = None,
):
    """Detection chain over a frame stream.

    Returns (report, detections_per_window, window_truths, ma, ma_times).
    Each window's truth is the ground truth of its middle frame.
    """
    plan = tdd_mod.build_decimation_plan(params, tdd, proc.decimation)
    detections_per_window: list[list[det_mod.Detection]] = []
    window_truths: list[scn_mod.GroundTruthSample] = []
    tol_d = tol_v = None
    for window in tdd_mod.sliding_windows(
        frames, plan, params, proc.frames_per_window, proc.window_stride
    ):
        mid_frame = window.frame_indices[len(window.frame_indices) // 2]
        if mid_frame >= len(frame_truths):
            raise DataError("ground truth shorter than the capture")
        truth = frame_truths[mid_frame]
        dets = detect_window(
            window, params, proc, det_cfg, geometry, clutter_model, time=truth.t
        )
        if tol_d is None:
            ref = pgm_mod.Periodogram(
                power=np.zeros((1, 1)),
                params=params,
                sample_interval=window.sample_interval,
                n_symbols=window.n_symbols,
            )
            tol_d, tol_v = det_mod.matched_tolerances(ref, det_cfg)
        detections_per_window.append(dets)
        window_truths.append(truth)
    if not window_truths:
        raise DataError("capture too short for one observation window")
    report = det_mod.match_and_rate(
        detections_per_window, window_truths, det_cfg, tol_d, tol_v
    )
    flags = np.array([o.nlos_matched for o in report.outcomes], dtype=float)
    update = proc.window_stride * params.t_frame
    length = int(round(det_cfg.rate_window / update))
    if 1 <= length <= flags.size:
        ma = det_mod.moving_average(flags, det_cfg.rate_window, update)
        ma_times = np.array([t.t for t in window_truths[length - 1 :]])
    else:
        ma = np.array([])
        ma_times = np.array([])
    return report, detections_per_window, window_truths, ma, ma_times


def fit_clutter_from_frames(
    frames,
    params: model.SystemParams,
    tdd: model.TddConfig,
    proc: ProcessingSection,
    clutter_cfg: ClutterSection,
) -> clutter_mod.ClutterModel:
    plan = tdd_mod.build_decimation_plan(params, tdd, proc.decimation)
    windows = []
    for window in tdd_mod.sliding_windows(
        frames, plan, params, proc.frames_per_window, proc.window_stride
    ):
        windows.append(window)
        if len(windows) >= clutter_cfg.calibration_windows:
            break
    if len(windows) < clutter_cfg.calibration_windows:
        raise DataError(
            f"capture provides {len(windows)} calibration windows, "
            f"{clutter_cfg.calibration_windows} requested"
        )
    return clutter_mod.fit_clutter(windows, clutter_cfg.energy_threshold)


# -- subcommands --------------------------------------------------------------


def cmd_simulate(cfg: RunConfig, out_dir: Path) -> dict:
    params, tdd = _domain_objects(cfg)
    scn = cfg.scenario
    try:
        geometry = scn.geometry()
        trajectory = scn.to_trajectory()
        amplitudes = scn.amplitudes.to_amplitudes()
    except ValueError as e:
        raise ConfigError(str(e)) from e
    n_frames = int(round(scn.duration_s / params.t_frame))
    if n_frames < 1:
        raise ConfigError("scenario.duration_s shorter than one frame")
    stream = scn_mod.run_measurement(
        params,
        geometry,
        trajectory,
        amplitudes,
        noise_var=scn.noise_var,
        seed=cfg.seed,
        duration=scn.duration_s,
        phase_mode=scn.phase_mode,
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    capture = out_dir / "capture.bin"
    truth = out_dir / "capture.truth.csv"
    written = scn_mod.write_capture(capture, params, tdd, stream, n_frames, truth)
    print(f"wrote {written} frames to {capture}")
    return {"capture": capture, "truth": truth, "frames": written}


def _read_capture(path: str | Path):
    p = Path(path)
    if not p.exists():
        raise DataError(f"capture not found: {p}")
    try:
        return scn_mod.read_capture(p)
    except ValueError as e:
        raise DataError(str(e)) from e


def cmd_fit_clutter(cfg: RunConfig, capture_path: Path, model_path: Path) -> dict:
    params, tdd, frames = _read_capture(capture_path)
    try:
        clutter_model = fit_clutter_from_frames(frames, params, tdd, cfg.processing, cfg.clutter)
    except ValueError as e:
        raise DataError(str(e)) from e
    model_path.parent.mkdir(parents=True, exist_ok=True)
    clutter_mod.save_clutter_model(model_path, clutter_model)
    print(f"clutter model rank {clutter_model.rank} -> {model_path}")
    return {"model": model_path, "rank": clutter_model.rank}


def cmd_process(cfg: RunConfig, capture_path: Path, out_dir: Path) -> dict:
    params, tdd, frames = _read_capture(capture_path)
    if not frames:
        raise DataError("capture holds no frames")
    proc = cfg.processing
    taper = None if proc.taper in (None, "none") else proc.taper
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = ["K,J,M_symbols,SNR_dB"]
    written = []
    for pair in proc.snr_table:
        try:
            k, j = int(pair[0]), int(pair[1])
        except (TypeError, ValueError, IndexError):
            raise ConfigError(f"processing.snr_table: bad entry {pair!r}")
        if k < 1 or j < 1:
            raise ConfigError("processing.snr_table: K and J must be >= 1")
        if len(frames) < k:
            raise DataError(f"capture has {len(frames)} frames, K={k} requested")
        if j == 1:
            # undecimated reference: the full frame, all symbols
            if k != 1:
                raise ConfigError("processing.snr_table: J=1 rows require K=1")
            source = frames[0]
            m_symbols = params.n_symbols
        else:
            try:
                plan = tdd_mod.build_decimation_plan(params, tdd, j)
                source = tdd_mod.concatenate_window(frames[:k], plan, params)
            except ValueError as e:
                raise ConfigError(f"processing.snr_table (K={k}, J={j}): {e}") from e
            m_symbols = source.n_symbols
        pg = pgm_mod.compute_periodogram(
            source, params, taper=taper, attenuation_db=proc.taper_attenuation_db
        )
        snr = pgm_mod.periodogram_snr(pg, pgm_mod.estimate_noise_floor(pg))
        rows.append(f"{k},{j},{m_symbols},{snr:.9g}")
        stem = out_dir / f"periodogram_K{k}_J{j}"
        pgm_mod.write_periodogram(stem.with_suffix(".bin"), pg)
        pgm_mod.write_peak_csv(stem.with_suffix(".peaks.csv"), pg)
        written.append(stem.with_suffix(".bin"))
    table = out_dir / "snr_table.csv"
    table.write_text("\n".join(rows) + "\n")
    print(f"wrote {table}")
    return {"snr_table": table, "periodograms": written}


def cmd_detect(
    cfg: RunConfig, capture_path: Path, out_dir: Path, clutter_path: Path | None
) -> dict:
    params, tdd, frames = _read_capture(capture_path)
    truth_path = capture_path.with_suffix(".truth.csv")
    if not truth_path.exists():
        raise DataError(f"ground truth not found next to capture: {truth_path}")
    truths = scn_mod.read_truth_csv(truth_path)
    if len(truths) < len(frames):
        raise DataError("ground truth shorter than the capture")
    clutter_model = None
    if clutter_path is not None:
        if not clutter_path.exists():
            raise DataError(f"clutter model not found: {clutter_path}")
        try:
            clutter_model = clutter_mod.load_clutter_model(clutter_path)
        except ValueError as e:
            raise DataError(str(e)) from e
    geometry = cfg.scenario.geometry()
    det_cfg = cfg.detection.to_config()
    try:
        report, dets, wtruths, ma, ma_times = run_detection(
            frames, truths, params, tdd, cfg.processing, det_cfg, geometry, clutter_model
        )
    except ValueError as e:
        raise DataError(str(e)) from e

    out_dir.mkdir(parents=True, exist_ok=True)
    det_csv = out_dir / "detections.csv"
    lines = ["window_idx,time_s,range_m,speed_mps,power_db,region,matched"]
    for dlist in dets:
        for d in dlist:
            db = 10.0 * math.log10(d.power) if d.power > 0 else float("-inf")
            lines.append(
                f"{d.window_idx},{d.time:.9g},{d.distance:.9g},{d.speed:.9g},"
                f"{db:.9g},{d.region},{int(d.matched)}"
            )
    det_csv.write_text("\n".join(lines) + "\n")

    ma_csv = out_dir / "moving_average.csv"
    ma_lines = ["t,rate"]
    for t, r in zip(ma_times, ma):
        ma_lines.append(f"{t:.9g},{r:.9g}")
    ma_csv.write_text("\n".join(ma_lines) + "\n")

    report_path = out_dir / "report.txt"
    update = cfg.processing.window_stride * params.t_frame
    text = [
        "# NLOS detection-rate report",
        "# reference hardware rates (not asserted): K=4: 0.61, K=6: 0.60, K=8: 0.67",
        f"clutter_removal={'applied' if clutter_model is not None else 'none'}",
        f"overall_rate={report.nlos_rate:.9g}",
        f"windows_total={report.n_windows}",
        f"windows_los_present={report.n_los_present}",
        f"windows_moving={report.n_moving}",
        f"nlos_matched_total={report.n_nlos_matched}",
        f"nlos_matched_moving={report.n_nlos_matched_moving}",
        f"los_detected_moving={report.n_los_detected_moving}",
        f"nlos_rate={report.nlos_rate:.9g}",
        f"nlos_rate_moving={report.nlos_rate_moving:.9g}",
        f"los_rate_moving={report.los_rate_moving:.9g}",
        f"update_period_s={update:.9g}",
        f"ma_window_s={det_cfg.rate_window:.9g}",
        f"ma_samples={ma.size}",
    ]
    if ma.size:
        text.append(f"ma_min={ma.min():.9g}")
        text.append(f"ma_max={ma.max():.9g}")
    report_path.write_text("\n".join(text) + "\n")
    print(f"nlos_rate={report.nlos_rate:.3f} nlos_rate_moving={report.nlos_rate_moving:.3f}")
    return {
        "report": report_path,
        "detections": det_csv,
        "moving_average": ma_csv,
        "rate": report.nlos_rate,
    }


def cmd_psf(cfg: RunConfig, out_dir: Path) -> dict:
    params, tdd = _domain_objects(cfg)
    bounds = model.performance_bounds(params, params.n_symbols, params.t_symbol_cp)
    grid = np.linspace(
        -bounds.v_unambiguous / 2.0, bounds.v_unambiguous / 2.0, 4096, endpoint=False
    )
    psf = tdd_mod.tdd_psf(params, tdd, grid)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "psf.csv"
    lines = ["speed_mps,psf"]
    for v, val in zip(grid, psf):
        lines.append(f"{v:.9g},{val:.9g}")
    path.write_text("\n".join(lines) + "\n")
    if tdd.n_ul == 0:
        print("replica spacing: none (continuous)")
    else:
        print(f"replica spacing: {tdd_mod.replica_spacing(params, tdd):.6g} m/s")
    print(f"wrote {path}")
    return {"psf": path}


# -- argument parsing ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="isacsense",
        description="Monostatic OFDM-radar sensing under TDD with NLOS detection",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, capture: bool = False, clutter: bool = False):
        p.add_argument("--config", type=Path, default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        if capture:
            p.add_argument("--capture", type=Path, required=True, help="capture file")
        if clutter:
            p.add_argument("--clutter", type=Path, default=None, help="clutter model file")

    common(sub.add_parser("simulate", help="synthesize a capture"))
    common(sub.add_parser("fit-clutter", help="fit a clutter model"), capture=True, clutter=True)
    common(sub.add_parser("process", help="periodograms and SNR table"), capture=True)
    common(sub.add_parser("detect", help="NLOS detection chain"), capture=True, clutter=True)
    common(sub.add_parser("psf", help="TDD point-spread function"))
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.command == "simulate":
            cmd_simulate(cfg, args.out)
        elif args.command == "fit-clutter":
            model_path = args.clutter if args.clutter is not None else args.out / "clutter.bin"
            cmd_fit_clutter(cfg, args.capture, model_path)
        elif args.command == "process":
            cmd_process(cfg, args.capture, args.out)
        elif args.command == "detect":
            cmd_detect(cfg, args.capture, args.out, args.clutter)
        elif args.command == "psf":
            cmd_psf(cfg, args.out)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
