"""Core OFDM-radar signal model.

Radio numerology, TDD pattern description, steering vectors and channel
state information (CSI) synthesis for a monostatic OFDM sensing node.

The CSI of a scene with H point scatterers is modelled per subcarrier k
and symbol l as

    F[k, l] = exp(j*phi) * sum_h b_h * a_k(d_h) * b_l(v_h) + Z[k, l]

where a(d) is the range steering vector over subcarriers, b(v) the
Doppler steering vector over symbol times and Z circularly symmetric
complex Gaussian noise.  Positive speed means increasing range
(receding target) and pairs with a positive-phase Doppler progression.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s


@dataclass(frozen=True)
class SystemParams:
    """OFDM numerology of the sensing radio.

    Attributes:
        f_c: carrier frequency [Hz]
        delta_f: subcarrier spacing [Hz]
        n_subcarriers: subcarriers per OFDM symbol
        n_symbols: OFDM symbols per radio frame
        t_symbol: OFDM symbol duration without cyclic prefix [s]
        t_cp: cyclic prefix duration [s]
        t_symbol_cp: total symbol duration including cyclic prefix [s]
        t_frame: radio frame duration [s]
        c0: propagation speed [m/s]
    """

    f_c: float
    delta_f: float
    n_subcarriers: int
    n_symbols: int
    t_symbol: float
    t_cp: float
    t_symbol_cp: float
    t_frame: float
    c0: float = SPEED_OF_LIGHT

    def __post_init__(self) -> None:
        for name in ("f_c", "delta_f", "t_symbol", "t_symbol_cp", "t_frame", "c0"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.t_cp < 0.0:
            raise ValueError("t_cp must be nonnegative")
        if self.n_subcarriers < 1 or self.n_symbols < 1:
            raise ValueError("n_subcarriers and n_symbols must be >= 1")
        if abs(self.t_symbol + self.t_cp - self.t_symbol_cp) > 1e-12:
            raise ValueError("t_symbol_cp must equal t_symbol + t_cp")
        # symbols of one frame must fit the frame duration (small numerology
        # rounding tolerated)
        if self.n_symbols * self.t_symbol_cp > self.t_frame * (1.0 + 1e-3):
            raise ValueError("n_symbols * t_symbol_cp exceeds t_frame")

    @property
    def bandwidth(self) -> float:
        return self.n_subcarriers * self.delta_f


@dataclass(frozen=True)
class TddConfig:
    """Downlink/uplink split of the repeating TDD pattern.

    A frame holds ``patterns_per_frame`` repetitions of a pattern of
    ``n_dl`` downlink symbols followed by ``n_ul`` uplink symbols.
    Only downlink symbols carry usable sensing CSI.
    """

    t_pattern: float
    n_dl: int
    n_ul: int
    patterns_per_frame: int

    def __post_init__(self) -> None:
        if self.t_pattern <= 0.0:
            raise ValueError("t_pattern must be positive")
        if self.n_dl < 1:
            raise ValueError("n_dl must be >= 1")
        if self.n_ul < 0:
            raise ValueError("n_ul must be >= 0")
        if self.patterns_per_frame < 1:
            raise ValueError("patterns_per_frame must be >= 1")

    @property
    def pattern_symbols(self) -> int:
        return self.n_dl + self.n_ul

    def validate_against(self, params: SystemParams) -> None:
        """Check consistency with a numerology; raises ValueError on mismatch."""
        if self.pattern_symbols != round(self.t_pattern / params.t_symbol_cp):
            raise ValueError(
                "n_dl + n_ul does not match t_pattern / t_symbol_cp "
                f"({self.pattern_symbols} vs {self.t_pattern / params.t_symbol_cp:.3f})"
            )
        if self.patterns_per_frame * self.pattern_symbols != params.n_symbols:
            raise ValueError("TDD patterns do not tile the frame symbol count")
        ratio = params.t_frame / self.t_pattern
        if abs(ratio - self.patterns_per_frame) > 1e-6:
            raise ValueError(
                f"patterns_per_frame {self.patterns_per_frame} does not match "
                f"t_frame / t_pattern = {ratio:.6f}"
            )


def default_params() -> SystemParams:
    """Reference mmWave numerology (27.4 GHz, 120 kHz spacing, 10 ms frames)."""
    return SystemParams(
        f_c=27.4e9,
        delta_f=120e3,
        n_subcarriers=1584,
        n_symbols=1120,
        t_symbol=8.33e-6,
        t_cp=0.59e-6,
        t_symbol_cp=8.92e-6,
        t_frame=10e-3,
    )


def default_tdd() -> TddConfig:
    """Reference TDD pattern: 104 DL + 36 UL symbols, 8 patterns per frame."""
    return TddConfig(t_pattern=1.25e-3, n_dl=104, n_ul=36, patterns_per_frame=8)


@dataclass(frozen=True)
class PerformanceBounds:
    """Unambiguous ranges and resolutions of a periodogram estimate [m, m/s]."""

    v_unambiguous: float
    d_unambiguous: float
    v_resolution: float
    d_resolution: float

    def __post_init__(self) -> None:
        for name in ("v_unambiguous", "d_unambiguous", "v_resolution", "d_resolution"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")


def performance_bounds(
    params: SystemParams, m_effective: int, sample_interval: float
) -> PerformanceBounds:
    """Periodogram performance bounds for a given Doppler sampling.

    ``sample_interval`` is the spacing of the processed symbols (the full
    symbol duration for undecimated frames, J times that after decimation
    by J) and ``m_effective`` the number of processed symbols.

        v_unamb = c0 / (2 * f_c * sample_interval)
        d_unamb = c0 / (2 * delta_f)
        v_res   = v_unamb / m_effective
        d_res   = d_unamb / n_subcarriers
    """
    if m_effective < 2:
        raise ValueError("m_effective must be >= 2")
    if sample_interval <= 0.0:
        raise ValueError("sample_interval must be positive")
    v_unamb = params.c0 / (2.0 * params.f_c * sample_interval)
    d_unamb = params.c0 / (2.0 * params.delta_f)
    return PerformanceBounds(
        v_unambiguous=v_unamb,
        d_unambiguous=d_unamb,
        v_resolution=v_unamb / m_effective,
        d_resolution=d_unamb / params.n_subcarriers,
    )


@dataclass
class Scatterer:
    """Point scatterer: range [m], radial speed [m/s] and complex coefficient.

    Positive speed is a receding target.  The coefficient carries both the
    reflection amplitude and the carrier phase of the path.
    """

    distance: float
    speed: float
    coeff: complex

    def __post_init__(self) -> None:
        if self.distance < 0.0:
            raise ValueError("distance must be nonnegative")


@dataclass
class CsiFrame:
    """One radio frame of CSI: complex matrix of shape (n_subcarriers, n_symbols).

    ``t0`` is the absolute start time of the frame; symbol l is taken at
    ``t0 + l * t_symbol_cp``.
    """

    data: np.ndarray
    frame_idx: int = 0
    t0: float = 0.0

    def __post_init__(self) -> None:
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise ValueError("CSI data must be a 2-D matrix")
        if data.dtype != np.complex128:
            data = data.astype(np.complex128)
        if not np.all(np.isfinite(data)):
            raise ValueError("CSI data must be finite")
        self.data = data

    @property
    def n_subcarriers(self) -> int:
        return self.data.shape[0]

    @property
    def n_symbols(self) -> int:
        return self.data.shape[1]


def range_steering(params: SystemParams, distance: float) -> np.ndarray:
    """Range steering vector over subcarriers.

    Element k is exp(-j * 4*pi * k * delta_f * d / c0): a round-trip delay
    shows up as a linear phase ramp across subcarriers.
    """
    if distance < 0.0:
        raise ValueError("distance must be nonnegative")
    if not np.isfinite(distance):
        raise ValueError("distance must be finite")
    k = np.arange(params.n_subcarriers)
    phase = -4.0 * np.pi * params.delta_f * distance / params.c0
    return np.exp(1j * phase * k)


def doppler_steering(
    params: SystemParams, speed: float, symbol_times: np.ndarray
) -> np.ndarray:
    """Doppler steering vector over (possibly nonuniform) symbol times.

    Element l is exp(+j * 4*pi * f_c * v * t_l / c0) with t_l measured
    relative to the first symbol, so element 0 is always 1.  Accepting
    arbitrary absolute times keeps decimated and concatenated acquisitions
    phase-correct.
    """
    t = np.asarray(symbol_times, dtype=float)
    if t.ndim != 1 or t.size < 1:
        raise ValueError("symbol_times must be a nonempty 1-D array")
    if not np.all(np.isfinite(t)):
        raise ValueError("symbol_times must be finite")
    if np.any(np.diff(t) < 0.0):
        raise ValueError("symbol_times must be nondecreasing")
    if not np.isfinite(speed):
        raise ValueError("speed must be finite")
    rel = t - t[0]
    return np.exp(1j * (4.0 * np.pi * params.f_c * speed / params.c0) * rel)


def frame_symbol_times(params: SystemParams, t0: float = 0.0) -> np.ndarray:
    """Absolute times of the symbols of one frame starting at ``t0``."""
    return t0 + np.arange(params.n_symbols) * params.t_symbol_cp


def synthesize_csi(
    params: SystemParams,
    scatterers: list[Scatterer],
    phase: float = 0.0,
    noise_var: float = 0.0,
    seed: int | np.random.Generator | None = None,
    frame_idx: int = 0,
    t0: float = 0.0,
) -> CsiFrame:
    """Synthesize one frame of CSI for a list of point scatterers.

    Entry (k, l) is exp(j*phase) * sum_h coeff_h * a_k(d_h) * b_l(v_h)
    plus circular complex Gaussian noise of variance ``noise_var`` per
    entry.  Deterministic for a fixed seed.
    """
    if noise_var < 0.0:
        raise ValueError("noise_var must be nonnegative")
    n, m = params.n_subcarriers, params.n_symbols
    data = np.zeros((n, m), dtype=np.complex128)
    if scatterers:
        times = np.arange(m) * params.t_symbol_cp
        a = np.stack([range_steering(params, s.distance) for s in scatterers])
        b = np.stack(
            [s.coeff * doppler_steering(params, s.speed, times) for s in scatterers]
        )
        data = np.einsum("hk,hl->kl", a, b)
    data *= np.exp(1j * phase)
    if noise_var > 0.0:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        scale = np.sqrt(noise_var / 2.0)
        noise = rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))
        data = data + scale * noise
    return CsiFrame(data=data, frame_idx=frame_idx, t0=t0)
