"""Constant-false-alarm-rate detection and NLOS geometry mapping.

Detection uses a whole-image CFAR threshold derived from the estimated
noise floor,

    eta_cfar = -sigma_N^2 * ln(1 - (1 - p_fa)^(1 / n_bins)),

optionally stiffened near the sensor by a range-dependent term

    eta(d) = eta_cfar + alpha / d^2,   alpha = sqrt(max S),

which compensates the d^-2 spread of close-in sidelobe energy.  Bins
beyond the known front-wall distance are attributed to single-bounce
propagation via that wall: a specular reflection of the true target,
approaching when the target recedes.  Its apparent position folds back
to the true one through

    v_hat = -v_los
    d_hat = 2 * d_wall - d_los * sin(arccos(h_gnb / d_los)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from isacsense.periodogram import Periodogram, local_maxima


@dataclass(frozen=True)
class SceneGeometry:
    """Monostatic deployment geometry: sensor height and front-wall distance [m]."""

    h_gnb: float
    d_wall: float

    def __post_init__(self) -> None:
        if self.h_gnb <= 0.0:
            raise ValueError("h_gnb must be positive")
        if self.d_wall <= 0.0:
            raise ValueError("d_wall must be positive")
        if self.h_gnb >= self.d_wall:
            raise ValueError("h_gnb must be smaller than d_wall")


@dataclass
class DetectionConfig:
    """Detector settings.

    Tolerances are absolute; ``matched_tolerances`` derives them from a
    periodogram's effective resolution when they are left as None.
    """

    p_fa: float = 1e-4
    range_adjusted: bool = True
    zero_speed_halfwidth: float | None = None  # m/s; None = one speed resolution cell
    match_tol_range: float | None = None  # m; None = 2 range resolution cells
    match_tol_speed: float | None = None  # m/s; None = 2 speed resolution cells
    top_k_nlos: int = 10
    rate_window: float = 0.5  # s, trailing moving-average span

    def __post_init__(self) -> None:
        if not 0.0 < self.p_fa < 1.0:
            raise ValueError("p_fa must be in (0, 1)")
        if self.top_k_nlos < 1:
            raise ValueError("top_k_nlos must be >= 1")
        if self.rate_window <= 0.0:
            raise ValueError("rate_window must be positive")


@dataclass
class Detection:
    """One detected peak."""

    distance: float
    speed: float
    power: float
    region: str = "LOS"
    matched: bool = False
    window_idx: int = 0
    time: float = 0.0


def cfar_threshold(noise_floor: float, p_fa: float, n_bins: int) -> float:
    """Whole-image CFAR threshold for exponentially distributed noise bins."""
    if noise_floor <= 0.0:
        raise ValueError("noise_floor must be positive")
    if not 0.0 < p_fa < 1.0:
        raise ValueError("p_fa must be in (0, 1)")
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    return -noise_floor * math.log(1.0 - (1.0 - p_fa) ** (1.0 / n_bins))


def range_adjusted_threshold(
    p: Periodogram, eta_cfar: float, alpha: float | None = None
) -> np.ndarray:
    """Per-range-bin threshold eta_cfar + alpha / d^2.

    ``alpha`` defaults to sqrt of the strongest periodogram bin, recomputed
    per periodogram.  The zero-range bin borrows the first positive bin
    center to keep the term finite.
    """
    if alpha is None:
        alpha = math.sqrt(float(p.power.max()))
    if alpha < 0.0:
        raise ValueError("alpha must be nonnegative")
    d = p.range_axis.copy()
    if d.size > 1:
        d[0] = d[1]
    elif d[0] == 0.0:
        raise ValueError("single-bin periodogram at zero range")
    return eta_cfar + alpha / d**2


def mask_zero_speed(p: Periodogram, halfwidth: float | None = None) -> Periodogram:
    """Zero all bins with |speed| <= halfwidth (static-scene discard).

    ``halfwidth`` defaults to one effective speed resolution cell,
    v_unambiguous / n_symbols.
    """
    if halfwidth is None:
        halfwidth = p.v_unambiguous / p.n_symbols
    if halfwidth < 0.0:
        raise ValueError("halfwidth must be nonnegative")
    keep = np.abs(p.speed_axis) > halfwidth
    power = p.power * keep[np.newaxis, :]
    return Periodogram(
        power=power,
        params=p.params,
        sample_interval=p.sample_interval,
        n_symbols=p.n_symbols,
    )


@dataclass(frozen=True)
class RegionMask:
    """LOS/NLOS split of the range axis at the front-wall distance."""

    d_wall: float
    nlos_range_bins: np.ndarray  # bool per range bin, True beyond the wall

    def label(self, distance: float) -> str:
        return "NLOS" if distance > self.d_wall else "LOS"


def split_regions(p: Periodogram, geometry: SceneGeometry) -> RegionMask:
    """Label range bins beyond the wall as NLOS (closed LOS boundary at d_wall)."""
    if geometry.d_wall >= p.d_unambiguous:
        raise ValueError("d_wall beyond the unambiguous range")
    return RegionMask(
        d_wall=geometry.d_wall, nlos_range_bins=p.range_axis > geometry.d_wall
    )


def detect_peaks(
    p: Periodogram,
    cfg: DetectionConfig,
    noise_floor: float,
    geometry: SceneGeometry | None = None,
    window_idx: int = 0,
    time: float = 0.0,
) -> list[Detection]:
    """Peaks above the (range-adjusted) CFAR threshold, strongest first.

    Above-threshold bins are grouped into 8-neighborhood local maxima; one
    detection per local maximum.  Regions are labeled when a geometry is
    given, else everything is LOS.
    """
    n_bins = p.power.size
    eta = cfar_threshold(noise_floor, cfg.p_fa, n_bins)
    if cfg.range_adjusted:
        thr = range_adjusted_threshold(p, eta)[:, np.newaxis]
    else:
        thr = np.full((p.n_range_bins, 1), eta)
    above = p.power > thr
    peaks = above & local_maxima(p.power)
    rows, cols = np.nonzero(peaks)
    order = np.argsort(p.power[rows, cols])[::-1]
    region = split_regions(p, geometry) if geometry is not None else None
    out = []
    for i in order:
        r, c = int(rows[i]), int(cols[i])
        d = p.bin_to_range(r)
        out.append(
            Detection(
                distance=d,
                speed=p.bin_to_speed(c),
                power=float(p.power[r, c]),
                region=region.label(d) if region is not None else "LOS",
                window_idx=window_idx,
                time=time,
            )
        )
    return out


def expected_nlos(
    geometry: SceneGeometry, d_los: float, v_los: float
) -> tuple[float, float]:
    """Apparent (range, speed) of the wall-bounce return of a LOS target.

    The bounce path runs from the wall back to the target's ground
    position, so its range is 2*d_wall minus the ground distance
    d_los * sin(theta), theta = arccos(h_gnb / d_los); its radial speed
    mirrors the LOS one.
    """
    if d_los < geometry.h_gnb:
        raise ValueError("d_los cannot be shorter than the sensor height")
    theta = math.acos(min(1.0, geometry.h_gnb / d_los))
    d_hat = 2.0 * geometry.d_wall - d_los * math.sin(theta)
    return d_hat, -v_los


def matched_tolerances(
    p: Periodogram, cfg: DetectionConfig
) -> tuple[float, float]:
    """Absolute (range, speed) matching tolerances, defaulting to 2 cells."""
    d_res = p.d_unambiguous / p.params.n_subcarriers
    v_res = p.v_unambiguous / p.n_symbols
    tol_d = cfg.match_tol_range if cfg.match_tol_range is not None else 2.0 * d_res
    tol_v = cfg.match_tol_speed if cfg.match_tol_speed is not None else 2.0 * v_res
    return tol_d, tol_v


@dataclass
class WindowOutcome:
    """Per-window matching summary."""

    window_idx: int
    time: float
    moving: bool
    los_present: bool
    los_detected: bool
    nlos_matched: bool


@dataclass
class DetectionRateReport:
    """NLOS detection-rate evaluation over a run.

    ``nlos_rate`` counts every LOS-present window in the denominator
    (stationary dwells depress it); ``nlos_rate_moving`` restricts the
    denominator to windows where the target was moving.
    """

    n_windows: int
    n_los_present: int
    n_moving: int
    n_nlos_matched: int
    n_nlos_matched_moving: int
    n_los_detected_moving: int
    outcomes: list[WindowOutcome] = field(default_factory=list)

    @property
    def nlos_rate(self) -> float:
        return self.n_nlos_matched / self.n_los_present if self.n_los_present else 0.0

    @property
    def nlos_rate_moving(self) -> float:
        return self.n_nlos_matched_moving / self.n_moving if self.n_moving else 0.0

    @property
    def los_rate_moving(self) -> float:
        return self.n_los_detected_moving / self.n_moving if self.n_moving else 0.0


def match_window(
    detections: list[Detection],
    truth,
    tol_range: float,
    tol_speed: float,
    top_k_nlos: int,
) -> tuple[bool, bool]:
    """Match one window's detections against its ground truth.

    Returns (los_detected, nlos_matched) and sets the ``matched`` flag on
    the matching detections.  Only the ``top_k_nlos`` strongest NLOS-region
    detections are considered for the NLOS match.
    """
    los_detected = False
    nlos_matched = False
    nlos_seen = 0
    for det in detections:  # already strongest-first
        if det.region == "NLOS":
            nlos_seen += 1
            if nlos_seen > top_k_nlos:
                continue
            if (
                abs(det.distance - truth.d_nlos) <= tol_range
                and abs(det.speed - truth.v_nlos) <= tol_speed
            ):
                det.matched = True
                nlos_matched = True
        else:
            if (
                abs(det.distance - truth.d_los) <= tol_range
                and abs(det.speed - truth.v_los) <= tol_speed
            ):
                det.matched = True
                los_detected = True
    return los_detected, nlos_matched


def match_and_rate(
    detections_per_window: list[list[Detection]],
    truths: list,
    cfg: DetectionConfig,
    tol_range: float,
    tol_speed: float,
) -> DetectionRateReport:
    """Fold per-window matches into a detection-rate report.

    ``truths`` must align one-to-one with ``detections_per_window``
    (ground truth sampled at each window's reference time).
    """
    if not truths:
        raise ValueError("empty truth stream")
    if len(truths) != len(detections_per_window):
        raise ValueError("detections and truth streams differ in length")
    report = DetectionRateReport(
        n_windows=len(truths),
        n_los_present=0,
        n_moving=0,
        n_nlos_matched=0,
        n_nlos_matched_moving=0,
        n_los_detected_moving=0,
    )
    for widx, (dets, truth) in enumerate(zip(detections_per_window, truths)):
        los_present = getattr(truth, "los_present", True)
        los_det, nlos_m = match_window(dets, truth, tol_range, tol_speed, cfg.top_k_nlos)
        if los_present:
            report.n_los_present += 1
            if nlos_m:
                report.n_nlos_matched += 1
        if truth.moving:
            report.n_moving += 1
            if nlos_m:
                report.n_nlos_matched_moving += 1
            if los_det:
                report.n_los_detected_moving += 1
        t = dets[0].time if dets else getattr(truth, "t", 0.0)
        report.outcomes.append(
            WindowOutcome(
                window_idx=widx,
                time=getattr(truth, "t", t),
                moving=bool(truth.moving),
                los_present=bool(los_present),
                los_detected=los_det,
                nlos_matched=nlos_m,
            )
        )
    return report


def moving_average(
    flags: np.ndarray, window_duration: float, update_period: float
) -> np.ndarray:
    """Trailing moving average of a boolean detection series.

    The window holds round(window_duration / update_period) updates; the
    first output is emitted once a full window is available, so the result
    has len(flags) - window + 1 samples.
    """
    if update_period <= 0.0:
        raise ValueError("update_period must be positive")
    length = int(round(window_duration / update_period))
    if length < 1:
        raise ValueError("moving-average window shorter than one update")
    x = np.asarray(flags, dtype=float)
    if x.size < length:
        raise ValueError("series shorter than the moving-average window")
    kernel = np.ones(length)
    return np.convolve(x, kernel, mode="valid") / length
