"""End-to-end acceptance checks at the reference numerology.

Each test pins one contract-level behavior of the toolkit: axis bounds,
TDD replica structure and its removal, processing gain, transform
fidelity, CFAR calibration, clutter suppression, NLOS geometry, the full
intrusion-detection chain, and CLI determinism.  These run the full-size
system (1584 subcarriers, 1120 symbols) and are slower than the unit
suites; every test also asserts its own wall-clock budget.
"""

import json
import math
import time

import numpy as np
import pytest
from scipy import stats

from isacsense import (
    DetectionConfig,
    Scatterer,
    SceneGeometry,
    SystemParams,
    apply_tdd_mask,
    build_decimation_plan,
    cfar_threshold,
    compute_periodogram,
    concatenate_window,
    default_params,
    default_tdd,
    estimate_noise_floor,
    expected_nlos,
    fit_clutter,
    performance_bounds,
    periodogram_snr,
    remove_clutter,
    replica_spacing,
    sliding_windows,
    synthesize_csi,
)
from isacsense.cli import ProcessingSection, main, run_detection
from isacsense.scenario import (
    ScatterAmplitudes,
    Trajectory,
    TrajectorySegment,
    run_measurement,
    sample_truth,
)

GEOM = SceneGeometry(h_gnb=5.12, d_wall=23.0)


def snr_db(pg):
    return periodogram_snr(pg, estimate_noise_floor(pg))


def test_reference_numerology_bounds():
    t0 = time.monotonic()
    p = default_params()
    full = performance_bounds(p, p.n_symbols, p.t_symbol_cp)
    assert full.v_unambiguous == pytest.approx(613.5, rel=5e-3)
    assert full.d_unambiguous == pytest.approx(1250.0, rel=5e-3)
    assert full.v_resolution == pytest.approx(0.55, rel=5e-3)
    assert full.d_resolution == pytest.approx(0.79, rel=5e-3)
    dec47 = performance_bounds(p, 24, 47 * p.t_symbol_cp)
    assert dec47.v_unambiguous == pytest.approx(13.05, rel=5e-3)
    dec70 = performance_bounds(p, 16, 70 * p.t_symbol_cp)
    assert dec70.v_unambiguous == pytest.approx(8.76, rel=5e-3)
    assert time.monotonic() - t0 < 1.0


def test_tdd_mask_creates_replica_peaks():
    """Uplink gaps turn a single target into a mainlobe plus replica peaks.

    A noiseless 10 m / 2 m/s target observed through the masked full frame
    must show secondary peaks at the target speed plus and minus one and
    two replica spacings, each within one speed bin of the prediction.
    """
    t0 = time.monotonic()
    p, tdd = default_params(), default_tdd()
    frame = synthesize_csi(p, [Scatterer(10.0, 2.0, 1.0)])
    pg = compute_periodogram(apply_tdd_mask(frame, tdd), p)
    r, c = np.unravel_index(np.argmax(pg.power), pg.power.shape)
    assert pg.bin_to_range(r) == pytest.approx(10.0, abs=pg.d_unambiguous / pg.n_range_bins)
    assert pg.bin_to_speed(c) == pytest.approx(2.0, abs=pg.v_unambiguous / pg.n_speed_bins)
    mainlobe = pg.power[r, c]
    spacing = replica_spacing(p, tdd)
    assert spacing == pytest.approx(4.4, rel=0.02)
    v_bin = pg.v_unambiguous / pg.n_speed_bins
    for n in (1, 2):
        for sign in (1, -1):
            v_pred = 2.0 + sign * n * spacing
            band = np.flatnonzero(np.abs(pg.speed_axis - v_pred) <= 0.5)
            j = band[np.argmax(pg.power[r, band])]
            v_hat = pg.bin_to_speed(j)
            assert abs(v_hat - v_pred) <= v_bin * 1.001, (
                f"replica n={sign * n}: peak at {v_hat:.3f}, predicted {v_pred:.3f}"
            )
            # a genuine secondary peak: locally maximal and well above the
            # taper sidelobe floor
            assert pg.power[r, j] > pg.power[r, j - 1]
            assert pg.power[r, j] > pg.power[r, j + 1]
            assert pg.power[r, j] > mainlobe * 10 ** (-2.0)
    assert time.monotonic() - t0 < 30.0


def test_decimation_suppresses_former_replicas():
    """Downlink-aligned decimation leaves no residue at old replica speeds.

    Replica positions that fold back onto the mainlobe itself are skipped;
    every other one must sit at least 25 dB below the mainlobe.
    """
    t0 = time.monotonic()
    p, tdd = default_params(), default_tdd()
    plan = build_decimation_plan(p, tdd, 70)
    spacing = replica_spacing(p, tdd)
    phase_factor = 4.0 * math.pi * p.f_c / p.c0
    for k_frames in (6, 10):
        frames = []
        for f in range(k_frames):
            d_f = 10.0 + 2.0 * (f + 0.5) * p.t_frame
            coeff = np.exp(1j * phase_factor * d_f)
            frames.append(
                synthesize_csi(p, [Scatterer(d_f, 2.0, coeff)], t0=f * p.t_frame, frame_idx=f)
            )
        pg = compute_periodogram(concatenate_window(frames, plan, p), p)
        v_eff = pg.v_unambiguous

        def fold(v):
            return (v + v_eff / 2.0) % v_eff - v_eff / 2.0

        r, c = np.unravel_index(np.argmax(pg.power), pg.power.shape)
        mainlobe = pg.power[r, c]
        assert pg.bin_to_speed(c) == pytest.approx(fold(2.0), abs=2 * v_eff / pg.n_speed_bins)
        tested = 0
        for n in (1, 2):
            for sign in (1, -1):
                v_f = fold(2.0 + sign * n * spacing)
                if abs(v_f - fold(2.0)) < 0.5:
                    continue  # folded back onto the mainlobe
                band = np.abs(pg.speed_axis - v_f) <= 0.5
                residue = pg.power[r, band].max()
                assert residue <= mainlobe * 10 ** (-2.5), (
                    f"K={k_frames}: {10 * math.log10(residue / mainlobe):.1f} dB "
                    f"residue at former replica speed {v_f:.2f}"
                )
                tested += 1
        assert tested >= 1
    assert time.monotonic() - t0 < 30.0


def test_processing_gain_from_symbol_count():
    """SNR differences across (frames, decimation) pairs follow symbol counts.

    Averaged over 20 noise seeds: the undecimated full frame gains
    10*log10(1120/24) ~ 16.7 dB over the 24-symbol decimated window, and
    ten 16-symbol windows gain 10*log10(160/24) ~ 8.2 dB over it.
    """
    t0 = time.monotonic()
    p, tdd = default_params(), default_tdd()
    plan47 = build_decimation_plan(p, tdd, 47)
    plan70 = build_decimation_plan(p, tdd, 70)
    # grid-aligned static target so scalloping is identical everywhere
    d_t = 200.0 * (p.c0 / (2.0 * p.delta_f)) / 2048.0
    gain_full, gain_multi = [], []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        scene = [Scatterer(d_t, 0.0, 1.0)]
        frames = [
            synthesize_csi(p, scene, noise_var=1.0, seed=rng, t0=f * p.t_frame, frame_idx=f)
            for f in range(10)
        ]
        snr_1_1 = snr_db(compute_periodogram(frames[0], p, taper=None))
        snr_1_47 = snr_db(compute_periodogram(concatenate_window(frames[:1], plan47, p), p, taper=None))
        snr_10_70 = snr_db(compute_periodogram(concatenate_window(frames, plan70, p), p, taper=None))
        gain_full.append(snr_1_1 - snr_1_47)
        gain_multi.append(snr_10_70 - snr_1_47)
    mean_full = float(np.mean(gain_full))
    mean_multi = float(np.mean(gain_multi))
    assert mean_full == pytest.approx(16.7, abs=1.0), f"full-frame gain {mean_full:.2f} dB"
    assert mean_multi == pytest.approx(10 * math.log10(160 / 24), abs=1.0), (
        f"multi-frame gain {mean_multi:.2f} dB"
    )
    assert time.monotonic() - t0 < 300.0


def test_periodogram_equals_direct_transform():
    """FFT path reproduces the literal double-sum definition to 1e-9."""
    t0 = time.monotonic()

    def direct(data):
        n, m = data.shape
        n2 = 1 << (n - 1).bit_length()
        m2 = 1 << (m - 1).bit_length()
        out = np.zeros((n2, m2))
        ks = np.arange(n)[:, None]
        ls = np.arange(m)[None, :]
        for i in range(n2):
            for j in range(m2):
                basis = np.exp(2j * np.pi * ks * i / n2) * np.exp(-2j * np.pi * ls * j / m2)
                out[i, j] = abs(np.sum(data * basis)) ** 2 / (n2 * m2)
        return np.fft.fftshift(out, axes=1)

    rng = np.random.default_rng(123)
    for n, m in ((2, 2), (3, 5), (4, 7), (8, 8)):
        p = SystemParams(
            f_c=27.4e9,
            delta_f=120e3,
            n_subcarriers=n,
            n_symbols=m,
            t_symbol=8.33e-6,
            t_cp=0.59e-6,
            t_symbol_cp=8.92e-6,
            t_frame=10e-3,
        )
        for _ in range(5):
            data = rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))
            pg = compute_periodogram(data, p, taper=None, sample_interval=p.t_symbol_cp)
            want = direct(data)
            err = np.max(np.abs(pg.power - want)) / want.max()
            assert err <= 1e-9, f"{n}x{m}: relative error {err:.2e}"
    assert time.monotonic() - t0 < 10.0


def test_cfar_false_alarm_rate_calibrated():
    """Whole-image false-alarm frequency matches the configured probability.

    500 noise-only trials per operating point; the observed count of
    images with any bin above threshold must lie inside the central 99%
    binomial interval.
    """
    t0 = time.monotonic()
    p = SystemParams(
        f_c=27.4e9,
        delta_f=120e3,
        n_subcarriers=256,
        n_symbols=256,
        t_symbol=8.33e-6,
        t_cp=0.59e-6,
        t_symbol_cp=8.92e-6,
        t_frame=10e-3,
    )
    rng = np.random.default_rng(20260817)
    n_trials = 500
    for p_fa in (1e-3, 1e-4):
        fires = 0
        for _ in range(n_trials):
            data = (
                rng.standard_normal((256, 256)) + 1j * rng.standard_normal((256, 256))
            ) / math.sqrt(2.0)
            pg = compute_periodogram(data, p, taper=None, sample_interval=p.t_symbol_cp)
            eta = cfar_threshold(estimate_noise_floor(pg), p_fa, pg.power.size)
            fires += bool(np.any(pg.power > eta))
        lo, hi = stats.binom.interval(0.99, n_trials, p_fa)
        assert lo <= fires <= hi, f"p_fa={p_fa}: {fires} firing images, expected [{lo}, {hi}]"
    assert time.monotonic() - t0 < 600.0


def test_clutter_projection_suppresses_wall():
    """Wall-only calibration kills the wall but spares the walker.

    Decimated single-frame windows; the static wall return must drop by at
    least 20 dB while the moving target loses at most 3 dB, and applying
    the projection twice changes nothing.
    """
    t0 = time.monotonic()
    p, tdd = default_params(), default_tdd()
    plan = build_decimation_plan(p, tdd, 70)
    wall_only = ScatterAmplitudes(los_amp=0.0, wall_amp=5.0, nlos_amp=0.0)
    calib_frames = [
        f
        for f, _ in run_measurement(
            p, GEOM, Trajectory((TrajectorySegment(10.0, 10.0, 0.0, 1.0),)),
            wall_only, noise_var=0.0, seed=3, duration=0.1,
        )
    ]
    calib = list(sliding_windows(iter(calib_frames), plan, p, n_frames=1, stride=1))
    model = fit_clutter(calib)
    assert model.rank == 1  # identical wall-only windows span one direction

    walker = ScatterAmplitudes(los_amp=0.3, wall_amp=5.0, nlos_amp=0.0)
    traj = Trajectory((TrajectorySegment(17.0, 6.5, 1.5, 1.0),))
    live_frames = [
        f
        for f, _ in run_measurement(
            p, GEOM, traj, walker, noise_var=1e-2, seed=7, duration=0.01
        )
    ]
    live = next(iter(sliding_windows(iter(live_frames), plan, p, n_frames=1, stride=1)))
    truth = sample_truth(GEOM, traj, 0.5 * p.t_frame)

    before = compute_periodogram(live, p)
    after = compute_periodogram(remove_clutter(live, model), p)

    def peak_near(pg, d, v):
        rows = np.abs(pg.range_axis - d) <= 1.2
        cols = np.abs(pg.speed_axis - v) <= 0.6
        return float(pg.power[np.ix_(rows, cols)].max())

    d_wall_slant = math.hypot(GEOM.d_wall, GEOM.h_gnb)
    suppression = 10 * math.log10(
        peak_near(before, d_wall_slant, 0.0) / peak_near(after, d_wall_slant, 0.0)
    )
    target_loss = 10 * math.log10(
        peak_near(before, truth.d_los, truth.v_los)
        / peak_near(after, truth.d_los, truth.v_los)
    )
    assert suppression >= 20.0, f"wall suppressed by only {suppression:.1f} dB"
    assert target_loss <= 3.0, f"target lost {target_loss:.1f} dB"

    once = remove_clutter(live, model)
    twice = remove_clutter(once, model)
    scale = np.max(np.abs(once.data))
    assert np.max(np.abs(twice.data - once.data)) <= 1e-9 * scale
    assert time.monotonic() - t0 < 60.0


def test_nlos_mapping_properties():
    """Wall-image mapping: exact speed flip, exact fold about the wall."""
    t0 = time.monotonic()
    rng = np.random.default_rng(8)
    for _ in range(10_000):
        h = rng.uniform(0.5, 10.0)
        d_wall = rng.uniform(h + 0.5, 100.0)
        d_los = rng.uniform(h, h + 50.0)
        v_los = rng.uniform(-3.0, 3.0)
        d_hat, v_hat = expected_nlos(SceneGeometry(h, d_wall), d_los, v_los)
        assert v_hat == -v_los
        ground = math.sqrt(max(d_los**2 - h**2, 0.0))  # independent route
        assert abs(d_hat + ground - 2.0 * d_wall) <= 1e-12 * (2.0 * d_wall)
    d_hat, _ = expected_nlos(SceneGeometry(5.12, 23.0), 10.0, 1.0)
    independent = 2.0 * 23.0 - 10.0 * math.sin(math.acos(5.12 / 10.0))
    assert d_hat == pytest.approx(independent, abs=1e-12)
    assert d_hat == pytest.approx(37.41, abs=1e-2)
    assert time.monotonic() - t0 < 5.0


def test_end_to_end_intrusion_detection():
    """Back-and-forth walk through the full chain reproduces the expected rates.

    20 s at 1.5 m/s with 1 s turnaround dwells, wall-bounce return 10 dB
    below the direct one, 8-frame windows of 70-fold decimated symbols
    advanced by 2 frames: the wall-image must be matched in at least 60%
    of moving windows, the direct return in at least 95%, and the
    moving-average match rate must be exactly zero throughout each dwell.
    """
    t0 = time.monotonic()
    p, tdd = default_params(), default_tdd()
    traj = Trajectory.back_and_forth(17.0, 6.5, 1.5, 1.0, legs=3)  # 24 s track
    los_amp = 0.4
    amps = ScatterAmplitudes(
        los_amp=los_amp, wall_amp=5.0 * los_amp, nlos_amp=los_amp * 10 ** (-0.5)
    )
    duration = 20.0
    n_frames = int(round(duration / p.t_frame))
    truths = [sample_truth(GEOM, traj, (f + 0.5) * p.t_frame) for f in range(n_frames)]
    stream = run_measurement(
        p, GEOM, traj, amps, noise_var=1.0, seed=20260817, duration=duration
    )
    frames = (frame for frame, _ in stream)  # streamed; never materialized
    proc = ProcessingSection(decimation=70, frames_per_window=8, window_stride=2)
    v_res_eff = p.c0 / (2.0 * p.f_c * 70 * p.t_symbol_cp) / (8 * 16)
    det_cfg = DetectionConfig(zero_speed_halfwidth=2.5 * v_res_eff)
    report, _, _, ma, ma_times = run_detection(
        frames, truths, p, tdd, proc, det_cfg, GEOM
    )
    assert report.n_windows == (n_frames - 8) // 2 + 1
    assert report.n_moving >= 300  # walking dominates the track

    assert report.nlos_rate_moving >= 0.6, (
        f"wall-image matched in {report.nlos_rate_moving:.2f} of moving windows"
    )
    assert report.los_rate_moving >= 0.95, (
        f"direct return detected in {report.los_rate_moving:.2f} of moving windows"
    )

    # dwells inside the first 20 s: the walk takes 7 s each way, then 1 s rest
    assert ma.size == report.n_windows - 25 + 1
    for dwell_start, dwell_end in ((7.0, 8.0), (15.0, 16.0)):
        # the averaging window plus the observation window reach back about
        # half a second, so test where the whole dependency cone is at rest
        cone = (ma_times >= dwell_start + 0.58) & (ma_times <= dwell_end - 0.06)
        assert int(cone.sum()) >= 10
        assert np.all(ma[cone] == 0.0), (
            f"dwell [{dwell_start}, {dwell_end}]: max MA {ma[cone].max():.2f}"
        )
    assert time.monotonic() - t0 < 600.0


def test_cli_outputs_are_deterministic(tmp_path):
    """Every CLI command rewrites byte-identical artifacts for a fixed seed."""
    t0 = time.monotonic()
    config = tmp_path / "config.json"
    config.write_text(
        json.dumps(
            {
                "seed": 7,
                "radio": {
                    "n_subcarriers": 64,
                    "symbols_per_frame": 140,
                    "frame_s": 1.25e-3,
                },
                "processing": {
                    "decimation": 70,
                    "frames_per_window": 8,
                    "window_stride": 2,
                    "snr_table": [[1, 1], [1, 47], [2, 70]],
                },
                "scenario": {"duration_s": 0.1},
            }
        )
    )
    outs = []
    for name in ("run_a", "run_b"):
        out = tmp_path / name
        cfg = ["--config", str(config)]
        assert main(["simulate", *cfg, "--out", str(out)]) == 0
        capture = ["--capture", str(out / "capture.bin")]
        clutter = ["--clutter", str(out / "clutter.bin")]
        assert main(["fit-clutter", *cfg, *capture, *clutter]) == 0
        assert main(["process", *cfg, *capture, "--out", str(out)]) == 0
        assert main(["detect", *cfg, *capture, *clutter, "--out", str(out)]) == 0
        assert main(["psf", *cfg, "--out", str(out)]) == 0
        outs.append(out)
    names_a = sorted(f.name for f in outs[0].iterdir())
    names_b = sorted(f.name for f in outs[1].iterdir())
    assert names_a == names_b and len(names_a) >= 13
    for name in names_a:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), (
            f"{name} differs between identical runs"
        )
    assert time.monotonic() - t0 < 120.0
