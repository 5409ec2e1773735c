import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gridsindy.errors import ConfigError, DataError
from gridsindy.evaluate import Pipeline
from gridsindy.ingest import AngularSeries, FrequencyChunk
from gridsindy.library import LibrarySpec
from gridsindy.preprocess import (SmoothingConfig, build_trajectory, estimate_derivative,
                                  gaussian_filter, gaussian_kernel, integrate_angle,
                                  optimize_sigma)
from gridsindy.regression import STLSQConfig

import batches


def brute_force_filter(x, sigma, trunc=4.0):
    """Direct sum over a reflected index, written independently of np.pad."""
    r = int(trunc * sigma + 0.5)
    k = np.arange(-r, r + 1)
    w = np.exp(-0.5 * (k / sigma) ** 2)
    w = w / w.sum()
    n = len(x)
    out = np.zeros(n)
    for i in range(n):
        for kk, wk in zip(k, w):
            j = i + kk
            if j < 0:
                j = -j - 1
            elif j >= n:
                j = 2 * n - j - 1
            out[i] += wk * x[j]
    return out


# -- config ----------------------------------------------------------------------

@pytest.mark.parametrize("kwargs", [{"sigma": 0}, {"sigma": -1}, {"sigma": math.inf},
                                    {"truncation_radius": 0.5}, {"boundary": "wrap"}])
def test_bad_smoothing_config(kwargs):
    with pytest.raises(ConfigError):
        SmoothingConfig(**kwargs)


# -- gaussian_filter ------------------------------------------------------------------

@pytest.mark.parametrize("sigma", [0.3, 1.0, 7.5, 60.0])
def test_constant_preserved(sigma):
    x = np.full(300, 3.25)
    np.testing.assert_allclose(gaussian_filter(x, SmoothingConfig(sigma)), x, rtol=0,
                               atol=1e-14)


def test_impulse_reproduces_kernel():
    x = np.zeros(1001)
    x[500] = 1.0
    out = gaussian_filter(x, SmoothingConfig(10.0))
    r = 40
    k = np.arange(-r, r + 1)
    w = np.exp(-0.5 * (k / 10.0) ** 2)
    expected = np.zeros(1001)
    expected[500 - r:501 + r] = w / w.sum()
    assert np.max(np.abs(out - expected)) < 1e-12


def test_ramp_interior_exact():
    x = np.arange(500, dtype=float)
    cfg = SmoothingConfig(5.0)
    out = gaussian_filter(x, cfg)
    r = 20
    assert np.max(np.abs(out[r:-r] - x[r:-r])) < 1e-9


@pytest.mark.parametrize("boundary", ["reflect", "nearest"])
def test_matches_brute_force(boundary, rng):
    x = rng.standard_normal(120)
    out = gaussian_filter(x, SmoothingConfig(3.0, boundary=boundary))
    if boundary == "reflect":
        ref = brute_force_filter(x, 3.0)
    else:
        r = 12
        k = np.arange(-r, r + 1)
        w = np.exp(-0.5 * (k / 3.0) ** 2)
        w /= w.sum()
        idx = np.clip(np.arange(120)[:, None] + k[None, :], 0, 119)
        ref = (x[idx] * w).sum(axis=1)
    np.testing.assert_allclose(out, ref, rtol=0, atol=1e-13)


def test_sigma_in_seconds_uses_dt(rng):
    x = rng.standard_normal(400)
    a = gaussian_filter(x, SmoothingConfig(1.2), dt=0.02)
    b = gaussian_filter(x, SmoothingConfig(60.0), dt=1.0)
    np.testing.assert_array_equal(a, b)


def test_filter_rejects_bad_input():
    with pytest.raises(DataError):
        gaussian_filter([1.0, np.nan, 2.0], SmoothingConfig(1.0))
    with pytest.raises(DataError):
        gaussian_filter([1.0], SmoothingConfig(1.0))


@pytest.mark.parametrize("sigma", [0.2, 1.0, 3.3, 60.0, 500.0])
def test_kernel_sums_to_one(sigma):
    w = gaussian_kernel(sigma, 4.0)
    assert abs(w.sum() - 1.0) <= 1e-15
    assert len(w) == 2 * int(4.0 * sigma + 0.5) + 1
    np.testing.assert_array_equal(w, w[::-1])


finite = st.floats(-1e3, 1e3, allow_nan=False)


@given(arrays(float, 64, elements=finite), arrays(float, 64, elements=finite),
       st.floats(-5, 5), st.floats(-5, 5), st.floats(0.5, 12.0))
def test_filter_is_linear(x, y, a, b, sigma):
    cfg = SmoothingConfig(sigma)
    lhs = gaussian_filter(a * x + b * y, cfg)
    rhs = a * gaussian_filter(x, cfg) + b * gaussian_filter(y, cfg)
    scale = 1.0 + np.max(np.abs(a * x)) + np.max(np.abs(b * y))
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * scale


# -- estimate_derivative ----------------------------------------------------------------

def test_derivative_of_linear():
    x = 3.0 * np.arange(50)
    np.testing.assert_allclose(estimate_derivative(x, 1.0), 3.0, rtol=0, atol=1e-12)


def test_derivative_of_quadratic():
    i = np.arange(50, dtype=float)
    d = estimate_derivative(i * i, 1.0)
    np.testing.assert_allclose(d[1:-1], 2 * i[1:-1], rtol=0, atol=1e-10)
    # second-order one-sided ends are exact for quadratics too
    assert d[0] == pytest.approx(0.0, abs=1e-10) and d[-1] == pytest.approx(98.0, abs=1e-10)


def test_derivative_of_sine():
    i = np.arange(900, dtype=float)
    d = estimate_derivative(np.sin(0.01 * i), 1.0)
    err = np.abs(d - 0.01 * np.cos(0.01 * i))[1:-1]
    # h^2 max|f'''| / 6 = 1e-6 / 6
    assert err.max() < 2e-7


def test_derivative_needs_three_samples():
    with pytest.raises(DataError):
        estimate_derivative([1.0, 2.0], 1.0)


# -- integrate_angle -----------------------------------------------------------------------

def test_integrate_zero_and_constant():
    assert np.all(integrate_angle(np.zeros(10), 1.0) == 0.0)
    np.testing.assert_array_equal(integrate_angle(np.ones(10), 1.0), np.arange(10.0))
    assert integrate_angle(np.ones(3), 0.5, theta0=2.0).tolist() == [2.0, 2.5, 3.0]


def test_integrate_cosine():
    i = np.arange(901, dtype=float)
    theta = integrate_angle(np.cos(0.01 * i), 1.0)
    assert np.max(np.abs(theta - 100 * np.sin(0.01 * i))) < 1e-3


def test_integrate_matches_recurrence(rng):
    om = rng.standard_normal(50)
    theta = integrate_angle(om, 0.3, 1.5)
    ref = [1.5]
    for k in range(1, 50):
        ref.append(ref[-1] + 0.3 * (om[k - 1] + om[k]) / 2)
    np.testing.assert_allclose(theta, ref, rtol=0, atol=1e-12)


def test_derivative_inverts_integral():
    i = np.arange(900, dtype=float)
    om = np.cos(0.01 * i)
    back = estimate_derivative(integrate_angle(om, 1.0), 1.0)
    # central difference of the trapezoid sum is (om[i-1] + 2 om[i] + om[i+1]) / 4,
    # i.e. om + dt^2 om'' / 4 + O(dt^4): second order, with constant 1/4
    err = np.abs(back - om)[1:-1]
    bound = 0.25 * 0.01 ** 2
    assert err.max() <= bound * (1 + 1e-3)
    np.testing.assert_allclose(back[1:-1] - om[1:-1], -bound * om[1:-1], rtol=0, atol=1e-9)


# -- build_trajectory ---------------------------------------------------------------------

def test_zero_input_trajectory():
    tr = build_trajectory(AngularSeries(np.zeros(50), 1.0), SmoothingConfig(5.0))
    assert not tr.theta.any() and not tr.omega.any() and not tr.omega_dot.any()
    np.testing.assert_array_equal(tr.time, np.arange(50.0))


def damped_oscillation(t, c_omega, c_theta, omega0):
    """omega(t) for theta(0) = 0, omega(0) = omega0 (underdamped case)."""
    gamma = c_omega / 2
    wd = math.sqrt(c_theta - gamma * gamma)
    om = omega0 * np.exp(-gamma * t) * (np.cos(wd * t) - gamma / wd * np.sin(wd * t))
    dom = omega0 * np.exp(-gamma * t) * (-2 * gamma * np.cos(wd * t)
                                        + (gamma * gamma / wd - wd) * np.sin(wd * t))
    return om, dom


def test_damped_oscillator_derivative():
    t = np.arange(900, dtype=float)
    om, dom = damped_oscillation(t, 0.05, 0.002, 0.1)
    tr = build_trajectory(AngularSeries(om, 1.0), SmoothingConfig(1.0))
    assert tr.time[-1] == 899.0
    # the reflected boundary bends the first and last radius samples
    r = 4
    assert np.max(np.abs(tr.omega_dot - dom)[r:-r]) < 1e-4


def test_white_noise_variance_reduction(rng):
    x = rng.standard_normal(20000)
    tr = build_trajectory(AngularSeries(x, 1.0), SmoothingConfig(60.0))
    # theory: 1 / (2 sqrt(pi) sigma) = 0.0047
    assert tr.omega.var() < 0.02 * x.var()


def test_no_smoothing_passthrough(rng):
    x = rng.standard_normal(30)
    tr = build_trajectory(AngularSeries(x, 0.5), None)
    np.testing.assert_array_equal(tr.omega, x)
    assert tr.dt == 0.5


# -- optimize_sigma -------------------------------------------------------------------------

def small_pipeline():
    return Pipeline(SmoothingConfig(1.0), LibrarySpec.from_name("p2"), STLSQConfig(1e-3, 1e-6))


def test_single_candidate_returned():
    chunks = list(batches.noisy_batch()[:3])
    sweep = optimize_sigma(chunks, [batches.samples(60)], small_pipeline())
    assert sweep.best_sigma == batches.samples(60)
    assert len(sweep.rows) == 1 and sweep.rows[0]["n_total"] == 3


def test_sweep_is_deterministic_and_tabular():
    chunks = list(batches.noisy_batch()[:4])
    cands = [batches.samples(s) for s in (1, 20, 60)]
    a = optimize_sigma(chunks, cands, small_pipeline())
    b = optimize_sigma(chunks, cands, small_pipeline(), jobs=2)
    assert a == b
    table = a.to_csv_rows()
    assert table[0] == ["sigma", "mean_rmse", "n_stable", "n_total"]
    assert len(table) == 4
    best = min(a.rows, key=lambda r: r["mean_rmse"])
    assert a.best_sigma == best["sigma"]


def test_ties_go_to_smaller_sigma():
    # a zero signal fits perfectly at every sigma
    chunk = FrequencyChunk("flat", 0.0, np.full(200, 50.0), 50.0)
    sweep = optimize_sigma([chunk], [5.0, 2.0, 9.0], small_pipeline())
    assert sweep.best_sigma == 2.0


def test_all_divergent_is_an_error():
    chunks = list(batches.noisy_batch()[:2])
    pipe = Pipeline(SmoothingConfig(1.0), LibrarySpec.from_name("p2"), STLSQConfig(1e-3, 1e-6),
                    divergence_factor=1e-12, divergence_floor=1e-12)
    with pytest.raises(DataError):
        optimize_sigma(chunks, [0.02, 0.4], pipe)
    single = optimize_sigma(chunks, [0.4], pipe)
    assert math.isinf(single.rows[0]["mean_rmse"])
    assert single.to_csv_rows()[1][1] == ""


def test_sweep_input_validation():
    with pytest.raises(DataError):
        optimize_sigma([], [1.0], small_pipeline())
    with pytest.raises(ConfigError):
        optimize_sigma(list(batches.noisy_batch()[:1]), [], small_pipeline())
