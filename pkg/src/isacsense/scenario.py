"""Factory-floor measurement simulation.

A worker walks back and forth on the line between the sensor pole and a
large metal wall, pausing at the turn points.  Every radio frame the
scene is sampled at the frame midpoint and synthesized as three point
scatterers: the direct (LOS) return, the static wall and the wall-bounce
(NLOS) image of the worker, which approaches whenever the worker recedes.

Per-frame carrier phase: each scatterer coefficient carries the phase
4*pi*f_c*d/c0 of its current path length, so the frame-to-frame phase
progression of a moving target matches its intra-frame Doppler and
multi-frame concatenations stay coherent.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from isacsense.detection import SceneGeometry, expected_nlos
from isacsense.model import (
    CsiFrame,
    Scatterer,
    SystemParams,
    TddConfig,
    synthesize_csi,
)

MAGIC_CAPTURE = b"ISACCSI1"


@dataclass(frozen=True)
class TrajectorySegment:
    """One leg of motion: walk from x_start to x_end, then pause."""

    x_start: float
    x_end: float
    speed: float
    dwell_after: float = 0.0

    def __post_init__(self) -> None:
        if self.x_start != self.x_end and self.speed <= 0.0:
            raise ValueError("moving segment needs a positive speed")
        if self.speed < 0.0:
            raise ValueError("speed must be nonnegative")
        if self.dwell_after < 0.0:
            raise ValueError("dwell_after must be nonnegative")

    @property
    def walk_time(self) -> float:
        return abs(self.x_end - self.x_start) / self.speed if self.speed > 0 else 0.0

    @property
    def duration(self) -> float:
        return self.walk_time + self.dwell_after


@dataclass(frozen=True)
class Trajectory:
    """Piecewise-constant-speed ground track along the line of motion."""

    segments: tuple[TrajectorySegment, ...]

    def __post_init__(self) -> None:
        if not self.segments:
            raise ValueError("trajectory needs at least one segment")
        for a, b in zip(self.segments, self.segments[1:]):
            if a.x_end != b.x_start:
                raise ValueError("segments must be contiguous")

    @property
    def duration(self) -> float:
        return sum(s.duration for s in self.segments)

    def sample(self, t: float) -> tuple[float, float]:
        """Ground position and signed ground speed at time t."""
        if t < 0.0 or t > self.duration:
            raise ValueError(f"t={t} outside trajectory duration {self.duration}")
        for seg in self.segments:
            if t <= seg.duration:
                if t < seg.walk_time:
                    direction = math.copysign(1.0, seg.x_end - seg.x_start)
                    return seg.x_start + direction * seg.speed * t, direction * seg.speed
                return seg.x_end, 0.0
            t -= seg.duration
        last = self.segments[-1]
        return last.x_end, 0.0

    @staticmethod
    def back_and_forth(
        x_a: float, x_b: float, speed: float, dwell: float, legs: int
    ) -> "Trajectory":
        """Alternate between x_a and x_b with a pause after each leg."""
        if legs < 1:
            raise ValueError("legs must be >= 1")
        pts = [x_a, x_b]
        segs = [
            TrajectorySegment(pts[i % 2], pts[(i + 1) % 2], speed, dwell)
            for i in range(legs)
        ]
        return Trajectory(segments=tuple(segs))


@dataclass(frozen=True)
class GroundTruthSample:
    """Scene truth at one instant."""

    t: float
    d_los: float
    v_los: float
    d_nlos: float
    v_nlos: float
    moving: bool


def sample_truth(
    geometry: SceneGeometry, trajectory: Trajectory, t: float
) -> GroundTruthSample:
    """Ground truth at time t: slant range/speed of the LOS path and its NLOS image."""
    x, vx = trajectory.sample(t)
    d_los = math.hypot(geometry.h_gnb, x)
    v_los = vx * x / d_los if d_los > 0 else 0.0
    d_nlos, v_nlos = expected_nlos(geometry, d_los, v_los)
    return GroundTruthSample(
        t=t,
        d_los=d_los,
        v_los=v_los,
        d_nlos=d_nlos,
        v_nlos=v_nlos,
        moving=vx != 0.0,
    )


@dataclass(frozen=True)
class ScatterAmplitudes:
    """Reflection amplitude policy: |b| = gain * reflectivity / d_path^2.

    The wall-bounce path additionally loses ``nlos_bounce_loss_db``.  A
    fixed per-path amplitude can be pinned explicitly, bypassing the
    policy (used for controlled test scenes).  A zero amplitude drops the
    scatterer from the scene.
    """

    gain: float = 1.0
    los_reflectivity: float = 1.0
    wall_reflectivity: float = 1.0
    nlos_reflectivity: float = 1.0
    nlos_bounce_loss_db: float = 10.0
    los_amp: float | None = None
    wall_amp: float | None = None
    nlos_amp: float | None = None

    def __post_init__(self) -> None:
        for name in ("gain", "los_reflectivity", "wall_reflectivity", "nlos_reflectivity"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be nonnegative")


def _labeled_scene(
    geometry: SceneGeometry,
    truth: GroundTruthSample,
    amplitudes: ScatterAmplitudes,
) -> list[tuple[str, Scatterer]]:
    """("los"|"wall"|"nlos", Scatterer) pairs with zero-amplitude paths dropped."""
    d_wall_slant = math.hypot(geometry.d_wall, geometry.h_gnb)
    a = amplitudes
    amp_los = a.los_amp if a.los_amp is not None else a.gain * a.los_reflectivity / truth.d_los**2
    amp_wall = a.wall_amp if a.wall_amp is not None else a.gain * a.wall_reflectivity / d_wall_slant**2
    bounce = 10.0 ** (-a.nlos_bounce_loss_db / 20.0)
    amp_nlos = (
        a.nlos_amp
        if a.nlos_amp is not None
        else a.gain * a.nlos_reflectivity * bounce / truth.d_nlos**2
    )
    scene = []
    if amp_los > 0.0:
        scene.append(("los", Scatterer(truth.d_los, truth.v_los, complex(amp_los))))
    if amp_wall > 0.0:
        scene.append(("wall", Scatterer(d_wall_slant, 0.0, complex(amp_wall))))
    if amp_nlos > 0.0:
        scene.append(("nlos", Scatterer(truth.d_nlos, truth.v_nlos, complex(amp_nlos))))
    return scene


def compose_scene(
    geometry: SceneGeometry,
    truth: GroundTruthSample,
    amplitudes: ScatterAmplitudes,
) -> list[Scatterer]:
    """Three-scatterer scene for one truth sample (zero-amplitude paths dropped).

    Coefficients are real amplitudes; the carrier phase of each path is
    applied by ``run_measurement``, which owns the time axis.
    """
    return [s for _, s in _labeled_scene(geometry, truth, amplitudes)]


def run_measurement(
    params: SystemParams,
    geometry: SceneGeometry,
    trajectory: Trajectory,
    amplitudes: ScatterAmplitudes,
    noise_var: float,
    seed: int | None,
    duration: float,
    phase_mode: str = "coherent",
) -> Iterator[tuple[CsiFrame, GroundTruthSample]]:
    """Stream (frame, truth) pairs, one per radio frame.

    The scene is sampled at each frame midpoint.  In ``coherent`` mode a
    single global phase is drawn for the whole run (phase-locked
    acquisition); ``incoherent`` draws a fresh phase per frame.
    Deterministic for a fixed seed.
    """
    if phase_mode not in ("coherent", "incoherent"):
        raise ValueError("phase_mode must be 'coherent' or 'incoherent'")
    n_frames = int(round(duration / params.t_frame))
    if n_frames < 1:
        raise ValueError("duration shorter than one frame")
    if trajectory.duration < (n_frames - 0.5) * params.t_frame:
        raise ValueError("trajectory shorter than the requested duration")
    for seg in trajectory.segments:
        for x in (seg.x_start, seg.x_end):
            if not 0.0 < x < geometry.d_wall:
                raise ValueError(
                    f"trajectory position {x} outside the corridor (0, {geometry.d_wall})"
                )
    ss = np.random.SeedSequence(seed)
    master = np.random.default_rng(ss)
    global_phase = master.uniform(0.0, 2.0 * math.pi)
    frame_rngs = [np.random.default_rng(s) for s in ss.spawn(n_frames)]
    phase_factor = 4.0 * math.pi * params.f_c / params.c0
    truth_first = sample_truth(geometry, trajectory, 0.5 * params.t_frame)
    for f in range(n_frames):
        t_mid = (f + 0.5) * params.t_frame
        truth = sample_truth(geometry, trajectory, t_mid)
        # Carrier phase advances with the integral of each path's radial
        # speed so cross-frame progression matches the declared Doppler.
        # For the direct path and the wall that integral is the range
        # itself; the wall-image mapping is not the integral of its speed
        # (its range folds the ground track while its speed mirrors the
        # LOS radial), so its phase track is anchored at the first frame.
        phase_range = {
            "los": truth.d_los,
            "wall": math.hypot(geometry.d_wall, geometry.h_gnb),
            "nlos": truth_first.d_nlos + truth_first.d_los - truth.d_los,
        }
        scene = [
            Scatterer(
                s.distance,
                s.speed,
                s.coeff * np.exp(1j * phase_factor * phase_range[name]),
            )
            for name, s in _labeled_scene(geometry, truth, amplitudes)
        ]
        rng = frame_rngs[f]
        phi = global_phase if phase_mode == "coherent" else rng.uniform(0.0, 2.0 * math.pi)
        frame = synthesize_csi(
            params,
            scene,
            phase=phi,
            noise_var=noise_var,
            seed=rng,
            frame_idx=f,
            t0=f * params.t_frame,
        )
        yield frame, truth


# -- capture files -----------------------------------------------------------

_PARAMS_FMT = "<ddIIddddd"
_TDD_FMT = "<dIII"


def write_capture(
    path: str | Path,
    params: SystemParams,
    tdd: TddConfig,
    stream: Iterable[tuple[CsiFrame, GroundTruthSample]],
    n_frames: int,
    truth_path: str | Path | None = None,
) -> int:
    """Write a frame stream to a binary capture plus a ground-truth CSV.

    Frames are stored as interleaved float32 complex, subcarrier-major.
    Returns the number of frames written.
    """
    path = Path(path)
    truths: list[GroundTruthSample] = []
    written = 0
    with open(path, "wb") as f:
        f.write(MAGIC_CAPTURE)
        f.write(
            struct.pack(
                _PARAMS_FMT,
                params.f_c,
                params.delta_f,
                params.n_subcarriers,
                params.n_symbols,
                params.t_symbol,
                params.t_cp,
                params.t_symbol_cp,
                params.t_frame,
                params.c0,
            )
        )
        f.write(
            struct.pack(_TDD_FMT, tdd.t_pattern, tdd.n_dl, tdd.n_ul, tdd.patterns_per_frame)
        )
        f.write(struct.pack("<I", n_frames))
        for frame, truth in stream:
            if written >= n_frames:
                break
            f.write(struct.pack("<Id", frame.frame_idx, frame.t0))
            f.write(np.ascontiguousarray(frame.data, dtype=np.complex64).tobytes())
            truths.append(truth)
            written += 1
    if written != n_frames:
        raise ValueError(f"stream ended after {written} of {n_frames} frames")
    if truth_path is not None:
        write_truth_csv(truth_path, truths)
    return written


def write_truth_csv(path: str | Path, truths: list[GroundTruthSample]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["t", "d_los_m", "v_los_mps", "d_nlos_m", "v_nlos_mps", "moving"])
        for s in truths:
            writer.writerow(
                [
                    f"{s.t:.9g}",
                    f"{s.d_los:.9g}",
                    f"{s.v_los:.9g}",
                    f"{s.d_nlos:.9g}",
                    f"{s.v_nlos:.9g}",
                    int(s.moving),
                ]
            )


def read_truth_csv(path: str | Path) -> list[GroundTruthSample]:
    out = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            out.append(
                GroundTruthSample(
                    t=float(row["t"]),
                    d_los=float(row["d_los_m"]),
                    v_los=float(row["v_los_mps"]),
                    d_nlos=float(row["d_nlos_m"]),
                    v_nlos=float(row["v_nlos_mps"]),
                    moving=bool(int(row["moving"])),
                )
            )
    return out


def read_capture(path: str | Path) -> tuple[SystemParams, TddConfig, list[CsiFrame]]:
    """Read a capture file written by :func:`write_capture`."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC_CAPTURE:
        raise ValueError(f"{path}: not a capture file")
    off = 8
    vals = struct.unpack_from(_PARAMS_FMT, raw, off)
    off += struct.calcsize(_PARAMS_FMT)
    params = SystemParams(
        f_c=vals[0],
        delta_f=vals[1],
        n_subcarriers=int(vals[2]),
        n_symbols=int(vals[3]),
        t_symbol=vals[4],
        t_cp=vals[5],
        t_symbol_cp=vals[6],
        t_frame=vals[7],
        c0=vals[8],
    )
    tvals = struct.unpack_from(_TDD_FMT, raw, off)
    off += struct.calcsize(_TDD_FMT)
    tdd = TddConfig(
        t_pattern=tvals[0],
        n_dl=int(tvals[1]),
        n_ul=int(tvals[2]),
        patterns_per_frame=int(tvals[3]),
    )
    (n_frames,) = struct.unpack_from("<I", raw, off)
    off += 4
    n, m = params.n_subcarriers, params.n_symbols
    frames = []
    for _ in range(n_frames):
        frame_idx, t0 = struct.unpack_from("<Id", raw, off)
        off += struct.calcsize("<Id")
        data = np.frombuffer(raw, dtype=np.complex64, count=n * m, offset=off)
        if data.size != n * m:
            raise ValueError(f"{path}: truncated frame data")
        off += n * m * 8
        frames.append(
            CsiFrame(data=data.reshape(n, m).astype(np.complex128), frame_idx=frame_idx, t0=t0)
        )
    return params, tdd, frames
