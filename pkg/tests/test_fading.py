import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import j0

from cyclogps.fading import (AnalysisError, SosChannel, check_separation, eigen_roots, exact_frequency_bias,
                             frequency_bias, frequency_gaps, lagrangian_hessian, max_feasible_L, mse_model,
                             mse_monte_carlo, optimize_wordlength, quant_analysis, quantization_floor, quantize,
                             sos_frequencies, sos_generate, stationary_periods, write_trace_csv)


def _single(omega_T=0.3, n=10_000, **kw):
    """One sinusoid with phi = 0 by construction: reset the seed phases."""
    ch = SosChannel(L=1, f_D=omega_T / (2 * np.pi), update_period_T=1.0, **kw)
    w = ch.omega[0]
    ch.state_i = np.array([[np.cos(w), 1.0]])
    return ch, w


def test_single_sinusoid_is_cosine():
    ch, w = _single()
    i, _ = ch.advance_components(10_000)
    np.testing.assert_allclose(i[0], np.cos(w * np.arange(10_000)), atol=1e-9)


def test_chunked_equals_one_shot():
    a = SosChannel(L=4, f_D=50.0, update_period_T=1e-3, rng_seed=7)
    b = SosChannel(L=4, f_D=50.0, update_period_T=1e-3, rng_seed=7)
    whole = a.advance_components(500)[0]
    parts = np.concatenate([b.advance_components(k)[0] for k in (1, 1, 3, 95, 400)], axis=1)
    np.testing.assert_allclose(parts, whole, atol=1e-12)


def test_conserved_quantity():
    ch = SosChannel(L=6, f_D=20.0, update_period_T=1e-3, rng_seed=3)
    i, _ = ch.advance_components(1_000_000)
    c = np.cos(ch.omega)[:, None]
    q = i[:, 1:] ** 2 + i[:, :-1] ** 2 - 2 * c * i[:, 1:] * i[:, :-1]
    assert np.max(np.abs(q - q[:, :1])) < 1e-9


def test_no_growth():
    ch = SosChannel(L=1, f_D=7.0, update_period_T=1e-3, rng_seed=1)
    i, q = ch.advance_components(10_000_000)
    assert max(np.abs(i).max(), np.abs(q).max()) <= 1 + 1e-6


def test_quantized_coefficient_keeps_amplitude():
    ch = SosChannel(L=4, f_D=100.0, update_period_T=1e-3, P=12, rng_seed=2)
    i, _ = ch.advance_components(200_000)
    assert np.abs(i).max() < 1.5
    assert np.all(np.abs(ch.coeff / 2 - np.cos(ch.omega)) <= 2.0 ** -13)


def test_degenerate_quantized_coefficient_rejected():
    # lowest w is 0.012 rad, and cos(w) rounds to 1 at 12 bits
    with pytest.raises(ValueError):
        SosChannel(L=4, f_D=10.0, update_period_T=1e-3, P=12)


def test_state_quantization_mode_runs():
    ch = SosChannel(L=2, f_D=10.0, update_period_T=1e-3, P=16, state_bits=16, rng_seed=2)
    i, _ = ch.advance_components(100)
    assert np.all(np.round(i[:, 2:] * 2 ** 16) == i[:, 2:] * 2 ** 16)


def test_frequencies_and_validation():
    w = sos_frequencies(16, 100.0, 1e-3)
    assert np.all(np.diff(w) > 0) and w[0] > 0 and w[-1] < np.pi
    with pytest.raises(ValueError):
        SosChannel(L=0, f_D=1.0, update_period_T=1.0)
    with pytest.raises(ValueError):
        SosChannel(L=2, f_D=600.0, update_period_T=1e-3)
    with pytest.raises(ValueError):
        SosChannel(L=2, f_D=6.0, update_period_T=1e-3).advance(0)


def test_bessel_autocorrelation():
    ch = SosChannel(L=16, f_D=10.0, update_period_T=1e-3, rng_seed=5)
    i, q = ch.advance(100_000)
    z = (i + 1j * q) / np.sqrt(ch.L)
    lags = np.arange(0, 201)  # 2 / f_D = 200 samples
    n = z.size
    r = np.array([np.vdot(z[: n - k], z[k:]) / (n - k) for k in lags])
    r = (r / r[0]).real
    rmse = np.sqrt(np.mean((r - j0(2 * np.pi * 10.0 * lags * 1e-3)) ** 2))
    assert rmse < 0.05


def test_envelope_and_csv(tmp_path):
    ch = SosChannel(L=8, f_D=10.0, update_period_T=1e-3, rng_seed=1)
    env = sos_generate(ch, 1000)
    assert env.shape == (1000,) and np.all(env >= 0) and np.all(env <= 1 + 1e-12 * 8)
    ch2 = SosChannel(L=8, f_D=10.0, update_period_T=1e-3, rng_seed=1)
    i, q = ch2.advance(1000)
    write_trace_csv(tmp_path / "t.csv", i, q, 8)
    table = np.loadtxt(tmp_path / "t.csv", delimiter=",", skiprows=1)
    np.testing.assert_allclose(table[:, 3], env, rtol=1e-15)


def test_eigen_roots_examples():
    mag, ang = eigen_roots(0.0)
    assert mag == pytest.approx(1.0, abs=1e-15) and ang == pytest.approx(np.pi / 2)
    assert eigen_roots(np.cos(0.3))[1] == pytest.approx(0.3, abs=1e-12)
    assert eigen_roots(float(quantize(np.cos(np.pi / 64), 12)))[0] == pytest.approx(1.0, abs=1e-15)
    for bad in (1.0, -1.0, 1.2):
        with pytest.raises(ValueError):
            eigen_roots(bad)


@given(st.floats(-0.999999, 0.999999))
def test_eigen_root_unit_modulus(b):
    mag, ang = eigen_roots(b)
    assert abs(mag - 1) < 1e-12 and abs(np.cos(ang) - b) < 1e-12


def test_frequency_bias_examples():
    assert frequency_bias(np.pi / 8, 0.0) == 0.0
    w, db = np.pi / 8, 2.0 ** -13
    assert frequency_bias(w, db) == pytest.approx(exact_frequency_bias(w, db), rel=0.05)
    with pytest.raises(ValueError):
        frequency_bias(np.pi / 64, 2.0 ** -8)
    with pytest.raises(ValueError):
        frequency_bias(0.0, 1e-6)


@given(st.floats(np.pi / 64, np.pi / 4), st.integers(9, 16), st.sampled_from([-1, 1]))
def test_bias_sign_rule(w, k, sign):
    db = sign * 2.0 ** -k
    try:
        dw = frequency_bias(w, db)
    except ValueError:
        assert abs(np.cos(w) + db) >= 1
        return
    assert np.sign(dw) == -sign


@pytest.mark.parametrize("w", [np.pi / 32, np.pi / 8, np.pi / 4])
@pytest.mark.parametrize("sign", [-1, 1])
def test_bias_monotone_in_magnitude(w, sign):
    mags = [abs(frequency_bias(w, sign * 2.0 ** -k)) for k in range(16, 7, -1)]
    assert all(b >= a for a, b in zip(mags, mags[1:]))


def test_quant_analysis_record():
    qa = quant_analysis(np.pi / 16, 12, sign=-1)
    assert qa.delta_b == -2.0 ** -13 and qa.lambda_mag == pytest.approx(1.0, abs=1e-15)
    assert qa.delta_omega > 0


def test_separation_examples():
    assert check_separation(8, 24)
    assert not check_separation(2, 1)
    with pytest.raises(ValueError):
        check_separation(1, 8)
    hi, lo = frequency_gaps(4)
    assert hi > 0 and lo > 0


def test_max_feasible_L_frozen():
    # frozen from the contiguous scan; the scan itself is the oracle for the boundary
    got = [max_feasible_L(p) for p in (8, 12, 16, 20, 24)]
    assert got == [17, 45, 116, 293, 741]
    full = [max_feasible_L(p) for p in range(8, 25)]
    assert all(b >= a for a, b in zip(full, full[1:]))
    assert check_separation(17, 8) and not check_separation(18, 8)


def test_mse_examples():
    fd, P = 100.0, 12
    assert mse_model(P, 1e-9 / fd, fd) == pytest.approx(quantization_floor(P), abs=1e-9)
    assert quantization_floor(P) == 4.0 ** -12 / 12
    assert mse_model(P, 1e-3, fd) >= quantization_floor(P)
    with pytest.raises(ValueError):
        mse_model(P, 0.006, fd)
    with pytest.raises(ValueError):
        mse_model(0, 1e-3, fd)


@given(st.integers(1, 23), st.floats(1e-6, 4.9e-3))
def test_mse_monotone(P, T):
    fd = 100.0
    assert mse_model(P + 1, T, fd) < mse_model(P, T, fd)
    assert mse_model(P, T * 1.01, fd) > mse_model(P, T, fd)


def test_mse_interpolation_term_small_T():
    # for small fT, (1 - sinc)^2 ~ (pi^2 f^2 T^2 / 6)^2, and E[f^4] = 3 f_D^4 / 8 under Jakes
    fd, T = 100.0, 1e-5
    lead = (np.pi ** 2 * T ** 2 / 6) ** 2 * 3 * fd ** 4 / 8
    assert mse_model(24, T, fd) - quantization_floor(24) == pytest.approx(lead, rel=1e-3)


def test_monte_carlo_quantization_dominated():
    # with a hold far shorter than the coherence time the error is pure quantization
    est = mse_monte_carlo(8, 1e-6, 100.0, n_samples=200_000, rng_seed=1)
    assert est == pytest.approx(mse_model(8, 1e-6, 100.0), rel=0.1)


def test_monte_carlo_matches_exact_hold_error():
    # a hold observed at a uniform lag u in [0, T] errs by 2 (1 - J0(2 pi f_D u)) on average, plus quantization
    from scipy import integrate
    fd, T, P = 100.0, 1e-3, 12
    exact = integrate.quad(lambda u: 2 * (1 - j0(2 * np.pi * fd * u)), 0, T)[0] / T + quantization_floor(P)
    est = mse_monte_carlo(P, T, fd, n_samples=200_000, rng_seed=3)
    assert est == pytest.approx(exact, rel=0.1)


def test_optimize_unbounded_budget():
    res = optimize_wordlength(np.inf, 100.0, T_min=1e-6, n_grid=20)
    assert res.P == 24 and res.T == pytest.approx(1e-6)


def test_optimize_hull_optimal_and_hessians():
    fd, C = 100.0, 20_000.0
    res = optimize_wordlength(C, fd, T_min=1e-6, n_grid=30)
    assert res.P / res.T <= C * (1 + 1e-9)
    for P in range(8, 25):
        t = P / C
        if t <= 1 / (2 * fd):
            assert res.e_s <= mse_model(P, t, fd) * (1 + 1e-12)
    for _, det in res.stationary:
        assert det > 0
    rec = json.loads(res.to_json())
    assert {"P", "T", "e_s", "rate", "hull"} <= set(rec)


def test_hessian_structure():
    h = lagrangian_hessian(12, 1e-3, 100.0)
    assert h.shape == (2, 2) and h[0, 1] == h[1, 0] and h[0, 0] > 0


def test_stationary_periods_are_roots():
    from cyclogps.fading import hull_slope_residual
    for P in (8, 16):
        for t in stationary_periods(P, 100.0, T_min=1e-6):
            scale = abs(hull_slope_residual(P, t * 1.1, 100.0)) + 1e-300
            assert abs(hull_slope_residual(P, t, 100.0)) < 1e-6 * scale


def test_optimize_infeasible():
    with pytest.raises(ValueError):
        optimize_wordlength(1000.0, 100.0)


def test_analysis_error_is_arithmetic():
    assert issubclass(AnalysisError, ArithmeticError)
