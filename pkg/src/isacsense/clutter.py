"""Subspace clutter removal from calibration acquisitions.

Static environment returns (walls, racks, fixed machinery) are near
identical across observation windows up to a complex scale.  A handful
of target-free calibration windows therefore span a low-rank subspace;
projecting live windows onto its orthogonal complement removes the
static contribution while leaving moving-target energy essentially
untouched.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from isacsense.detection import DetectionConfig, cfar_threshold
from isacsense.periodogram import Periodogram, estimate_noise_floor
from isacsense.tdd import ObservationWindow

MAGIC_CLUTTER = b"ISACCLT1"


@dataclass
class ClutterModel:
    """Orthonormal clutter basis over vectorized observation windows.

    ``basis`` has shape (n_subcarriers * n_columns, rank); ``shape`` is
    the (rows, columns) layout of the windows it applies to.
    """

    basis: np.ndarray
    shape: tuple[int, int]
    energy_threshold: float
    calib_count: int

    def __post_init__(self) -> None:
        if self.basis.ndim != 2:
            raise ValueError("basis must be 2-D")
        if self.basis.shape[0] != self.shape[0] * self.shape[1]:
            raise ValueError("basis row count must match the window size")

    @property
    def rank(self) -> int:
        return self.basis.shape[1]


def _window_matrix(w) -> np.ndarray:
    return w.data if isinstance(w, ObservationWindow) else np.asarray(w)


def fit_clutter(
    calib_windows: list, energy_threshold: float = 0.99
) -> ClutterModel:
    """Fit the clutter subspace from target-free calibration windows.

    Columns of the SVD input are the vectorized windows; the basis keeps
    the smallest number of leading left singular vectors whose squared
    singular values reach ``energy_threshold`` of the total.
    """
    if not 0.0 < energy_threshold <= 1.0:
        raise ValueError("energy_threshold must be in (0, 1]")
    if len(calib_windows) < 2:
        raise ValueError("need at least 2 calibration windows")
    mats = [_window_matrix(w) for w in calib_windows]
    shape = mats[0].shape
    if any(m.shape != shape for m in mats):
        raise ValueError("calibration windows must share one shape")
    stack = np.stack([m.reshape(-1) for m in mats], axis=1)
    u, s, _ = np.linalg.svd(stack, full_matrices=False)
    energy = s**2
    total = energy.sum()
    if total == 0.0:
        raise ValueError("calibration windows are identically zero")
    frac = np.cumsum(energy) / total
    rank = int(np.searchsorted(frac, energy_threshold - 1e-15) + 1)
    return ClutterModel(
        basis=np.ascontiguousarray(u[:, :rank]),
        shape=shape,
        energy_threshold=energy_threshold,
        calib_count=len(calib_windows),
    )


def remove_clutter(window, model: ClutterModel):
    """Subtract the projection of a window onto the clutter subspace.

    Idempotent and never energy-increasing.  Accepts an ObservationWindow
    (returns one) or a raw matrix (returns a matrix).
    """
    mat = _window_matrix(window)
    if mat.shape != model.shape:
        raise ValueError(
            f"window shape {mat.shape} does not match clutter model {model.shape}"
        )
    vec = mat.reshape(-1)
    cleaned = (vec - model.basis @ (model.basis.conj().T @ vec)).reshape(model.shape)
    if isinstance(window, ObservationWindow):
        return ObservationWindow(
            data=cleaned,
            symbol_times=window.symbol_times,
            sample_interval=window.sample_interval,
            n_frames=window.n_frames,
            stride=window.stride,
            frame_indices=window.frame_indices,
            window_idx=window.window_idx,
        )
    return cleaned


def extract_environment(
    p: Periodogram, cfg: DetectionConfig, min_range: float = 2.0
) -> float:
    """Front-wall distance estimate from a calibration periodogram.

    Range of the strongest zero-speed return beyond ``min_range`` that
    clears the CFAR threshold.  The periodogram must be computed without
    zero-speed masking.
    """
    col = int(np.argmin(np.abs(p.speed_axis)))
    profile = p.power[:, col].copy()
    profile[p.range_axis < min_range] = 0.0
    eta = cfar_threshold(estimate_noise_floor(p), cfg.p_fa, p.power.size)
    if profile.max() <= eta:
        raise ValueError("no static return above the detection threshold")
    return float(p.range_axis[int(np.argmax(profile))])


def save_clutter_model(path: str | Path, model: ClutterModel) -> None:
    """Binary model file: magic, dims, rank, f32 interleaved complex basis."""
    with open(path, "wb") as f:
        f.write(MAGIC_CLUTTER)
        f.write(
            struct.pack(
                "<IIIId",
                model.shape[0],
                model.shape[1],
                model.rank,
                model.calib_count,
                model.energy_threshold,
            )
        )
        f.write(np.ascontiguousarray(model.basis, dtype=np.complex64).tobytes())


def load_clutter_model(path: str | Path) -> ClutterModel:
    """Load a clutter model; the basis is re-orthonormalized after the f32 round trip."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC_CLUTTER:
        raise ValueError(f"{path}: not a clutter model file")
    rows, cols, rank, calib_count, threshold = struct.unpack_from("<IIIId", raw, 8)
    count = rows * cols * rank
    basis = np.frombuffer(raw, dtype=np.complex64, count=count, offset=8 + 24)
    if basis.size != count:
        raise ValueError(f"{path}: truncated basis data")
    basis = basis.reshape(rows * cols, rank).astype(np.complex128)
    # QR restores orthonormality lost to the f32 storage (span is preserved)
    q, _ = np.linalg.qr(basis)
    return ClutterModel(
        basis=np.ascontiguousarray(q),
        shape=(int(rows), int(cols)),
        energy_threshold=float(threshold),
        calib_count=int(calib_count),
    )
