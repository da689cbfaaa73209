"""Sampler-versus-density checks for the conditioned and absorbed processes."""

import math

import numpy as np
import pytest
from numpy.random import SeedSequence, default_rng
from scipy.stats import norm

from slecap import bessel
from slecap.noise import dyadic_increments
from slecap.params import Params

P4 = Params.from_kappa(4.0)


def ks_against_cdf(samples, cdf_vals_sorted):
    n = len(cdf_vals_sorted)
    hi = np.max(np.abs(cdf_vals_sorted - np.arange(1, n + 1) / n))
    lo = np.max(np.abs(cdf_vals_sorted - np.arange(0, n) / n))
    return max(hi, lo)


def bridge_marginal_cdf(p, t, x0, t0, ys):
    grid = np.linspace(1e-8, ys.max() + 1.0, 4001)
    pdf = bessel.bridge_density(p, t, x0, grid, t0)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(grid))])
    cdf /= cdf[-1]
    return np.interp(ys, grid, cdf)


def test_noise_tree_refinement_consistent():
    ss = SeedSequence(42, spawn_key=(3,))
    coarse = dyadic_increments(ss, 8, 4, 0.7)
    fine = dyadic_increments(ss, 8, 7, 0.7)
    assert np.allclose(coarse, fine.reshape(8, 16, 8).sum(axis=2), atol=1e-12)


def test_batch_size_does_not_perturb_early_samples():
    small = bessel.bridge_functionals(P4, 1.0, 1.0, 1e-2, SeedSequence(3), 40,
                                      marginal_times=[0.5])
    large = bessel.bridge_functionals(P4, 1.0, 1.0, 1e-2, SeedSequence(3), 900,
                                      marginal_times=[0.5])
    assert np.array_equal(small["marginals"], large["marginals"][:40])
    assert np.array_equal(small["X_end"], large["X_end"][:40])


def test_bridge_path_shape_and_invariants():
    path = bessel.sample_bridge(P4, 1.0, 1.0, 1e-3, default_rng(7))
    assert path.values[0] == 1.0
    assert path.values[-1] == 0.0
    assert path.times[-1] == 1.0
    assert np.all(path.values[1:-1] > 0)
    assert np.all(np.diff(path.drift_integral) >= 0)
    assert path.guard_violations <= bessel.GUARD_LIMIT


def test_bridge_rejects_bad_arguments():
    rng = default_rng(0)
    with pytest.raises(ValueError):
        bessel.sample_bridge(P4, -1.0, 1.0, 1e-3, rng)
    with pytest.raises(ValueError):
        bessel.sample_bridge(P4, 1.0, 0.0, 1e-3, rng)


def test_bridge_marginal_matches_density():
    out = bessel.bridge_functionals(P4, 1.0, 1.0, 2.5e-4, SeedSequence(5), 20000,
                                    marginal_times=[0.5])
    m = np.sort(out["marginals"][:, 0])
    ks = ks_against_cdf(m, bridge_marginal_cdf(P4, 0.5, 1.0, 1.0, m))
    assert ks < 0.02


def test_bridge_terminal_values_small():
    # |X(t0 - delta)| <= sqrt(delta) log(1/delta) for all but a tiny fraction
    dt = 2.5e-4
    out = bessel.bridge_functionals(P4, 1.0, 1.0, dt, SeedSequence(8), 20000)
    delta = out["h"]
    bound = math.sqrt(delta) * math.log(1.0 / delta)
    frac = np.mean(out["X_end"] > bound)
    assert frac < 5e-3


def test_absorption_law_matches_levy_at_a_half():
    horizon = 2.0
    T = bessel.absorption_times(P4, 1.0, 2.5e-4, horizon, SeedSequence(9), 20000)
    Ts = np.sort(T[np.isfinite(T)])
    F = lambda t: 2.0 * norm.sf(1.0 / np.sqrt(t))
    ks = ks_against_cdf(Ts, F(Ts) / F(horizon))
    assert ks < 0.02


def test_absorption_scaling_in_x0():
    # X/x0 at time t*x0^2 has the law of a unit-start path at time t
    p = Params.from_kappa(3.0)
    x0 = 2.0
    t = 0.5
    a_unit = bessel.absorption_marginals(p, 1.0, 5e-4, [t], SeedSequence(21), 8000)[:, 0]
    a_scaled = bessel.absorption_marginals(p, x0, 5e-4 * x0 ** 2, [t * x0 ** 2],
                                           SeedSequence(22), 8000)[:, 0] / x0
    u = np.sort(a_unit[np.isfinite(a_unit)])
    v = np.sort(a_scaled[np.isfinite(a_scaled)])
    from scipy.stats import ks_2samp
    res = ks_2samp(u, v)
    assert res.pvalue > 0.001
    # survival probabilities agree too
    assert abs(len(u) / 8000 - len(v) / 8000) < 0.02


def test_single_path_absorption_records_time_and_integral():
    path = bessel.sample_bessel(P4, 0.6, 1e-3, default_rng(3))
    assert path.absorption_time is not None
    assert path.values[-1] == 0.0
    assert np.all(np.diff(path.drift_integral) >= 0)


def test_martingale_mean_one_at_bounded_stopping_times():
    p = P4
    obs = bessel.observation_checks(p, 1.0, 1e-3, [0.25, 0.5, 0.75], 0.5, 2.0,
                                    SeedSequence(11), 20000)
    for j in range(3):
        M = obs["X"][:, j] ** (1 - 3 * p.a) * np.exp(-p.a * p.b * obs["I2"][:, j])
        se = M.std() / math.sqrt(len(M))
        assert abs(M.mean() - 1.0) < 3 * se


def test_product_martingale_mean_constant():
    p = P4
    t0 = 1.0
    obs = bessel.observation_checks(p, 1.0, 1e-3, [0.25, 0.5, 0.75], 0.5, 2.0,
                                    SeedSequence(12), 20000)
    M0 = bessel.first_passage_density(p, 1.0, t0)
    for j in range(3):
        M = obs["X"][:, j] ** (1 - 3 * p.a) * np.exp(-p.a * p.b * obs["I2"][:, j])
        Mt = M * bessel.first_passage_density(p, obs["X"][:, j], t0 - obs["t_stop"][:, j]) / M0
        se = Mt.std() / math.sqrt(len(Mt))
        assert abs(Mt.mean() - 1.0) < 3 * se


def test_weight_trace_formulas():
    p = Params.from_kappa(4.0)  # a = 1/2: exponents 1-3a = -1/2, b = 1/4
    path = bessel.BesselPath(x0=1.0, t0=math.inf,
                             times=np.array([0.0, 0.1, 0.2]),
                             values=np.array([1.0, 1.21, 0.81]),
                             drift_integral=np.array([0.0, 0.05, 0.1]))
    gp = np.array([1.0, 0.9, 0.8])
    tr = bessel.weight_trace(p, path, gp, t0=1.0)
    assert tr.M[0] == 1.0
    assert tr.M[1] == pytest.approx((1.21) ** (-0.5) * 0.9 ** 0.25, rel=1e-12)
    assert np.allclose(tr.M_tilde, tr.M * tr.N)
    want_N = bessel.first_passage_density(p, path.values, 1.0 - path.times)
    assert np.allclose(tr.N, want_N)


def test_weight_trace_domain_checks():
    p = P4
    path = bessel.BesselPath(x0=1.0, t0=math.inf,
                             times=np.array([0.0, 0.1]),
                             values=np.array([1.0, -0.2]),
                             drift_integral=np.array([0.0, 0.1]))
    with pytest.raises(ValueError):
        bessel.weight_trace(p, path, np.array([1.0, 0.9]), t0=1.0)
    ok_path = bessel.BesselPath(x0=1.0, t0=math.inf,
                                times=np.array([0.0, 0.1]),
                                values=np.array([1.0, 0.9]),
                                drift_integral=np.array([0.0, 0.1]))
    with pytest.raises(ValueError):
        bessel.weight_trace(p, ok_path, np.array([0.5, 0.9]), t0=1.0)
