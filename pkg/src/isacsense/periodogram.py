"""Range-Doppler periodogram of OFDM channel estimates.

For a CSI matrix H of shape (N, M_cols) the periodogram is

    S[n, m] = 1/(N' M') * | sum_k sum_l H[k, l] W[k, l]
                            * exp(-2j*pi*l*m/M') * exp(+2j*pi*k*n/N') |^2

with W an optional separable taper, N' and M' the next powers of two of
the input dimensions (zero padding).  The symbol axis uses a forward DFT
(speed), the subcarrier axis an inverse DFT (range), so a receding
target (positive speed, positive-phase Doppler progression) lands at a
positive speed bin and range grows with the row index.  The speed axis
is rotated so v = 0 maps to bin M'/2.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
import struct

import numpy as np
from scipy.signal.windows import chebwin

from isacsense.model import CsiFrame, SystemParams
from isacsense.tdd import ObservationWindow

MAGIC_PERIODOGRAM = b"ISACPGM1"


def _next_pow2(n: int) -> int:
    return 1 << (int(n) - 1).bit_length()


def _taper(n: int, kind: str | None, attenuation_db: float) -> np.ndarray:
    if kind is None or kind == "none":
        return np.ones(n)
    if kind == "chebyshev":
        if n < 2:
            return np.ones(n)
        return chebwin(n, at=attenuation_db)
    raise ValueError(f"unknown taper {kind!r}")


@dataclass
class Periodogram:
    """Power matrix with axis metadata.

    ``power`` has shape (n_range_bins, n_speed_bins); ``range_axis`` and
    ``speed_axis`` give the physical bin centers.  ``sample_interval`` is
    the Doppler sampling spacing and ``n_symbols`` the pre-padding symbol
    count of the source, from which the effective bounds derive.
    """

    power: np.ndarray
    params: SystemParams
    sample_interval: float
    n_symbols: int

    def __post_init__(self) -> None:
        if self.power.ndim != 2:
            raise ValueError("power must be 2-D")
        if np.any(self.power < 0.0):
            raise ValueError("power must be nonnegative")

    @property
    def n_range_bins(self) -> int:
        return self.power.shape[0]

    @property
    def n_speed_bins(self) -> int:
        return self.power.shape[1]

    @property
    def d_unambiguous(self) -> float:
        return self.params.c0 / (2.0 * self.params.delta_f)

    @property
    def v_unambiguous(self) -> float:
        return self.params.c0 / (2.0 * self.params.f_c * self.sample_interval)

    @property
    def range_bin(self) -> float:
        return self.d_unambiguous / self.n_range_bins

    @property
    def speed_bin(self) -> float:
        return self.v_unambiguous / self.n_speed_bins

    @property
    def range_axis(self) -> np.ndarray:
        return np.arange(self.n_range_bins) * self.range_bin

    @property
    def speed_axis(self) -> np.ndarray:
        return (np.arange(self.n_speed_bins) - self.n_speed_bins // 2) * self.speed_bin

    def bin_to_range(self, n: int) -> float:
        """Range [m] of row n."""
        if not 0 <= n < self.n_range_bins:
            raise ValueError("range bin out of bounds")
        return n * self.range_bin

    def bin_to_speed(self, m: int) -> float:
        """Speed [m/s] of column m (zero speed at column M'/2)."""
        if not 0 <= m < self.n_speed_bins:
            raise ValueError("speed bin out of bounds")
        return (m - self.n_speed_bins // 2) * self.speed_bin


def compute_periodogram(
    source: CsiFrame | ObservationWindow | np.ndarray,
    params: SystemParams,
    taper: str | None = "chebyshev",
    attenuation_db: float = 80.0,
    sample_interval: float | None = None,
) -> Periodogram:
    """Range-Doppler periodogram of a frame, observation window or raw matrix.

    The taper is applied before zero padding.  For a raw matrix,
    ``sample_interval`` must be given explicitly.
    """
    if isinstance(source, ObservationWindow):
        data = source.data
        interval = source.sample_interval
    elif isinstance(source, CsiFrame):
        data = source.data
        interval = params.t_symbol_cp
    else:
        data = np.asarray(source)
        if sample_interval is None:
            raise ValueError("sample_interval required for raw matrices")
        interval = sample_interval
    if data.ndim != 2:
        raise ValueError("CSI data must be 2-D")
    n, m_cols = data.shape
    if m_cols < 2:
        raise ValueError("need at least 2 symbols")
    if not np.all(np.isfinite(data)):
        raise ValueError("CSI data must be finite")

    w = _taper(n, taper, attenuation_db)[:, None] * _taper(m_cols, taper, attenuation_db)[None, :]
    tapered = data * w

    n_fft = _next_pow2(n)
    m_fft = _next_pow2(m_cols)
    padded = np.zeros((n_fft, m_fft), dtype=np.complex128)
    padded[:n, :m_cols] = tapered

    # forward DFT over symbols (speed), inverse DFT over subcarriers (range);
    # numpy's ifft carries 1/N', so the double sum is N' * ifft(fft(.)).
    spec = np.fft.ifft(np.fft.fft(padded, axis=1), axis=0) * n_fft
    power = np.abs(spec) ** 2 / (n_fft * m_fft)
    power = np.fft.fftshift(power, axes=1)

    return Periodogram(
        power=power,
        params=params,
        sample_interval=interval,
        n_symbols=m_cols,
    )


def estimate_noise_floor(p: Periodogram) -> float:
    """Noise level per periodogram bin.

    Median of the power bins divided by ln 2: for exponentially
    distributed noise power the median is mean * ln 2, and the median is
    robust to a sparse population of target peaks.
    """
    med = float(np.median(p.power))
    if med <= 0.0:
        raise ValueError("periodogram has no positive noise content")
    return med / np.log(2.0)


def periodogram_snr(p: Periodogram, noise_floor: float) -> float:
    """Peak-to-noise-floor ratio in dB: 10*log10(max(S) / noise_floor)."""
    if noise_floor <= 0.0:
        raise ValueError("noise_floor must be positive")
    peak = float(p.power.max())
    if peak <= 0.0:
        raise ValueError("periodogram is identically zero")
    return 10.0 * np.log10(peak / noise_floor)


def local_maxima(power: np.ndarray) -> np.ndarray:
    """Boolean mask of 8-neighborhood local maxima (edges padded with -inf)."""
    pad = np.pad(power, 1, mode="constant", constant_values=-np.inf)
    h, w = power.shape
    neighbors = [
        pad[i : i + h, j : j + w]
        for i in range(3)
        for j in range(3)
        if not (i == 1 and j == 1)
    ]
    return power >= np.maximum.reduce(neighbors)


def write_periodogram(path: str | Path, p: Periodogram) -> None:
    """Binary export: magic, u32 dims, f64 bin sizes, f32 power row-major."""
    path = Path(path)
    with open(path, "wb") as f:
        f.write(MAGIC_PERIODOGRAM)
        f.write(struct.pack("<II", p.n_range_bins, p.n_speed_bins))
        f.write(struct.pack("<dddd", p.range_bin, p.speed_bin, p.sample_interval, float(p.n_symbols)))
        f.write(np.ascontiguousarray(p.power, dtype=np.float32).tobytes())


def read_periodogram_file(path: str | Path) -> dict:
    """Read the binary export back into a plain dict (power + axis metadata)."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:8] != MAGIC_PERIODOGRAM:
        raise ValueError(f"{path}: not a periodogram file")
    n_r, n_s = struct.unpack_from("<II", raw, 8)
    range_bin, speed_bin, sample_interval, n_symbols = struct.unpack_from("<dddd", raw, 16)
    power = np.frombuffer(raw, dtype=np.float32, count=n_r * n_s, offset=48)
    if power.size != n_r * n_s:
        raise ValueError(f"{path}: truncated power data")
    return {
        "power": power.reshape(n_r, n_s).astype(np.float64),
        "range_bin": range_bin,
        "speed_bin": speed_bin,
        "sample_interval": sample_interval,
        "n_symbols": int(n_symbols),
    }


def write_peak_csv(path: str | Path, p: Periodogram, max_peaks: int = 20) -> None:
    """CSV summary of the strongest local maxima."""
    mask = local_maxima(p.power)
    rows, cols = np.nonzero(mask)
    if rows.size:
        order = np.argsort(p.power[rows, cols])[::-1][:max_peaks]
        rows, cols = rows[order], cols[order]
    lines = ["range_m,speed_mps,power,power_db"]
    floor = p.power.max() * 1e-300
    for r, c in zip(rows, cols):
        val = p.power[r, c]
        db = 10.0 * np.log10(max(val, floor)) if val > 0 else -np.inf
        lines.append(
            f"{p.bin_to_range(int(r)):.9g},{p.bin_to_speed(int(c)):.9g},{val:.9g},{db:.9g}"
        )
    Path(path).write_text("\n".join(lines) + "\n")
