import numpy as np
import pytest

from isacsense import (
    SPEED_OF_LIGHT,
    CsiFrame,
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


def small_params(n=4, m=8):
    return SystemParams(
        f_c=27.4e9,
        delta_f=120e3,
        n_subcarriers=n,
        n_symbols=m,
        t_symbol=8.33e-6,
        t_cp=0.59e-6,
        t_symbol_cp=8.92e-6,
        t_frame=10e-3,
    )


# -- parameter validation -----------------------------------------------------


def test_default_params_match_reference_numerology():
    p = default_params()
    assert p.f_c == 27.4e9
    assert p.delta_f == 120e3
    assert p.n_subcarriers == 1584
    assert p.n_symbols == 1120
    assert p.t_symbol_cp == pytest.approx(8.92e-6)
    assert p.bandwidth == pytest.approx(1584 * 120e3)


def test_params_reject_inconsistent_symbol_duration():
    with pytest.raises(ValueError):
        SystemParams(
            f_c=27.4e9,
            delta_f=120e3,
            n_subcarriers=4,
            n_symbols=8,
            t_symbol=8.33e-6,
            t_cp=0.59e-6,
            t_symbol_cp=9.5e-6,
            t_frame=10e-3,
        )


def test_params_reject_frame_overflow():
    # 2000 symbols of 8.92 us exceed a 10 ms frame
    with pytest.raises(ValueError):
        SystemParams(
            f_c=27.4e9,
            delta_f=120e3,
            n_subcarriers=4,
            n_symbols=2000,
            t_symbol=8.33e-6,
            t_cp=0.59e-6,
            t_symbol_cp=8.92e-6,
            t_frame=10e-3,
        )


def test_tdd_config_consistency():
    tdd = default_tdd()
    assert tdd.pattern_symbols == 140
    tdd.validate_against(default_params())


def test_tdd_config_rejects_bad_tiling():
    bad = TddConfig(t_pattern=1.25e-3, n_dl=104, n_ul=36, patterns_per_frame=7)
    with pytest.raises(ValueError):
        bad.validate_against(default_params())


def test_tdd_rejects_mismatched_pattern_duration():
    bad = TddConfig(t_pattern=1e-3, n_dl=104, n_ul=36, patterns_per_frame=8)
    with pytest.raises(ValueError):
        bad.validate_against(default_params())


# -- steering vectors ---------------------------------------------------------


def test_range_steering_zero_distance_is_all_ones():
    a = range_steering(small_params(), 0.0)
    np.testing.assert_allclose(a, np.ones(4))


def test_range_steering_rejects_negative_distance():
    with pytest.raises(ValueError):
        range_steering(small_params(), -1.0)


def test_range_steering_aliases_at_unambiguous_range():
    """One full unambiguous range of delay wraps each element back to 1."""
    p = small_params(n=2)
    d_unamb = p.c0 / (2.0 * p.delta_f)
    a = range_steering(p, d_unamb)
    np.testing.assert_allclose(a, np.ones(2), atol=1e-9)


def test_range_steering_alternates_at_half_unambiguous_range():
    p = small_params(n=4)
    a = range_steering(p, p.c0 / (4.0 * p.delta_f))
    np.testing.assert_allclose(a, [1, -1, 1, -1], atol=1e-9)
    # the rounded 625 m figure differs only through the exact c0
    a_round = range_steering(p, 625.0)
    np.testing.assert_allclose(a_round, [1, -1, 1, -1], atol=1e-2)


def test_range_steering_periodicity():
    p = small_params(n=16)
    d_unamb = p.c0 / (2.0 * p.delta_f)
    rng = np.random.default_rng(5)
    for d in rng.uniform(0.0, 1000.0, size=8):
        np.testing.assert_allclose(
            range_steering(p, d + d_unamb), range_steering(p, d), atol=1e-9
        )


def test_doppler_steering_static_target_is_all_ones():
    p = small_params()
    times = np.arange(6) * p.t_symbol_cp
    np.testing.assert_allclose(doppler_steering(p, 0.0, times), np.ones(6))


def test_doppler_steering_aliases_at_unambiguous_speed():
    p = small_params()
    v_unamb = p.c0 / (2.0 * p.f_c * p.t_symbol_cp)
    times = np.arange(8) * p.t_symbol_cp
    np.testing.assert_allclose(
        doppler_steering(p, v_unamb, times), np.ones(8), atol=1e-9
    )


def test_doppler_steering_decimated_alias():
    """At v_unamb/J, a J-decimated sampling sees exactly one cycle per step."""
    p = small_params()
    times = np.array([0.0, 70 * p.t_symbol_cp])
    v = p.c0 / (2.0 * p.f_c * 70 * p.t_symbol_cp)
    b = doppler_steering(p, v, times)
    np.testing.assert_allclose(b[1], 1.0 + 0j, atol=1e-9)


def test_doppler_steering_relative_to_first_time():
    p = small_params()
    times = 0.123 + np.arange(4) * p.t_symbol_cp
    b = doppler_steering(p, 3.0, times)
    assert b[0] == pytest.approx(1.0 + 0j)


def test_doppler_steering_periodic_in_speed():
    p = small_params()
    j = 5
    times = np.arange(7) * j * p.t_symbol_cp
    period = p.c0 / (2.0 * p.f_c * p.t_symbol_cp) / j
    rng = np.random.default_rng(6)
    for v in rng.uniform(-20.0, 20.0, size=8):
        np.testing.assert_allclose(
            doppler_steering(p, v + period, times),
            doppler_steering(p, v, times),
            atol=1e-9,
        )


def test_doppler_steering_rejects_decreasing_times():
    with pytest.raises(ValueError):
        doppler_steering(small_params(), 1.0, np.array([0.0, 2.0, 1.0]))


def test_receding_target_has_positive_phase_progression():
    p = small_params()
    times = np.arange(4) * p.t_symbol_cp
    b = doppler_steering(p, 5.0, times)  # positive speed = receding
    assert np.angle(b[1]) > 0.0


# -- CSI synthesis ------------------------------------------------------------


def test_synthesize_identity_scatterer_gives_all_ones():
    p = small_params()
    frame = synthesize_csi(p, [Scatterer(0.0, 0.0, 1.0 + 0j)])
    np.testing.assert_allclose(frame.data, np.ones((4, 8)))


def test_synthesize_empty_scene_gives_zero_frame():
    frame = synthesize_csi(small_params(), [])
    np.testing.assert_allclose(frame.data, 0.0)


def test_synthesize_matches_direct_formula():
    """Entrywise oracle: e^{j phi} * sum_h b_h a_k(d_h) b_l(v_h)."""
    p = small_params(n=6, m=10)
    scat = [Scatterer(12.0, 2.5, 0.8 - 0.3j), Scatterer(40.0, -1.0, 0.1 + 0.9j)]
    phi = 0.7
    frame = synthesize_csi(p, scat, phase=phi)
    k = np.arange(p.n_subcarriers)
    expected = np.zeros((p.n_subcarriers, p.n_symbols), dtype=complex)
    for s in scat:
        for l in range(p.n_symbols):
            t = l * p.t_symbol_cp
            b_l = np.exp(1j * 4 * np.pi * p.f_c * s.speed * t / p.c0)
            expected[:, l] += (
                s.coeff * np.exp(-1j * 4 * np.pi * k * p.delta_f * s.distance / p.c0) * b_l
            )
    expected *= np.exp(1j * phi)
    np.testing.assert_allclose(frame.data, expected, atol=1e-12)


def test_synthesize_linear_in_scatterers():
    p = small_params(n=8, m=16)
    a = [Scatterer(10.0, 1.0, 1.0 + 0j)]
    b = [Scatterer(33.0, -2.0, 0.5j)]
    both = synthesize_csi(p, a + b, phase=0.3)
    np.testing.assert_allclose(
        both.data,
        synthesize_csi(p, a, phase=0.3).data + synthesize_csi(p, b, phase=0.3).data,
        atol=1e-12,
    )


def test_synthesize_deterministic_for_fixed_seed():
    p = small_params()
    f1 = synthesize_csi(p, [Scatterer(5.0, 0.0, 1.0)], noise_var=1.0, seed=9)
    f2 = synthesize_csi(p, [Scatterer(5.0, 0.0, 1.0)], noise_var=1.0, seed=9)
    np.testing.assert_array_equal(f1.data, f2.data)


def test_synthesize_noise_variance():
    p = SystemParams(
        f_c=27.4e9,
        delta_f=120e3,
        n_subcarriers=1024,
        n_symbols=1024,
        t_symbol=8.33e-6,
        t_cp=0.59e-6,
        t_symbol_cp=8.92e-6,
        t_frame=10e-3,
    )
    sigma2 = 2.5
    frame = synthesize_csi(p, [], noise_var=sigma2, seed=0)
    measured = np.mean(np.abs(frame.data) ** 2)
    assert measured == pytest.approx(sigma2, rel=0.05)


def test_synthesize_rejects_negative_noise():
    with pytest.raises(ValueError):
        synthesize_csi(small_params(), [], noise_var=-1.0)


def test_csi_frame_rejects_nonfinite_entries():
    data = np.ones((2, 2), dtype=complex)
    data[0, 0] = np.nan
    with pytest.raises(ValueError):
        CsiFrame(data=data, frame_idx=0, t0=0.0)


def test_scatterer_rejects_negative_range():
    with pytest.raises(ValueError):
        Scatterer(-1.0, 0.0, 1.0)


# -- performance bounds -------------------------------------------------------


def test_performance_bounds_reference_numerology():
    """Full-frame bounds land on the rounded headline figures within 0.5%."""
    p = default_params()
    b = performance_bounds(p, p.n_symbols, p.t_symbol_cp)
    assert b.v_unambiguous == pytest.approx(613.5, rel=5e-3)
    assert b.d_unambiguous == pytest.approx(1250.0, rel=5e-3)
    assert b.v_resolution == pytest.approx(0.55, rel=5e-3)
    assert b.d_resolution == pytest.approx(0.79, rel=5e-3)


def test_performance_bounds_decimated_intervals():
    p = default_params()
    assert performance_bounds(
        p, 24, 47 * p.t_symbol_cp
    ).v_unambiguous == pytest.approx(13.05, rel=5e-3)
    assert performance_bounds(
        p, 16, 70 * p.t_symbol_cp
    ).v_unambiguous == pytest.approx(8.76, rel=5e-3)


def test_performance_bounds_resolution_scaling():
    p = default_params()
    b = performance_bounds(p, p.n_symbols, p.t_symbol_cp)
    assert b.v_resolution == pytest.approx(b.v_unambiguous / p.n_symbols)
    assert b.d_resolution * p.n_subcarriers == pytest.approx(b.d_unambiguous)


def test_performance_bounds_halving_spacing_doubles_range():
    p = default_params()
    half = SystemParams(
        f_c=p.f_c,
        delta_f=p.delta_f / 2.0,
        n_subcarriers=p.n_subcarriers,
        n_symbols=p.n_symbols,
        t_symbol=p.t_symbol,
        t_cp=p.t_cp,
        t_symbol_cp=p.t_symbol_cp,
        t_frame=p.t_frame,
    )
    b0 = performance_bounds(p, p.n_symbols, p.t_symbol_cp)
    b1 = performance_bounds(half, p.n_symbols, p.t_symbol_cp)
    assert b1.d_unambiguous == pytest.approx(2.0 * b0.d_unambiguous)
    assert b1.d_resolution * half.n_subcarriers == pytest.approx(b1.d_unambiguous)


def test_performance_bounds_needs_two_symbols():
    p = default_params()
    with pytest.raises(ValueError):
        performance_bounds(p, 1, p.t_symbol_cp)


def test_speed_of_light_is_exact():
    assert SPEED_OF_LIGHT == 299_792_458.0
    assert default_params().c0 == SPEED_OF_LIGHT
