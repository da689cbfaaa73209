"""Acceptance suite: every quantitative exit criterion at its stated tolerance.

Each test prints one PASS/FAIL line (run with -s to stream them).  The
statistical experiments run at their full declared scale, so this module
takes tens of minutes; everything is deterministic given the seeds fixed
here.
"""

import cmath
import math

import numpy as np
import pytest
from numpy.random import SeedSequence, default_rng
from scipy.integrate import quad
from scipy.stats import norm

from slecap import bessel
from slecap.experiments import (bessel_tail_experiments, commutation_experiment,
                                coupling_rate_experiment, density_check,
                                discretization_robustness,
                                mu_r_constancy_experiment,
                                reversibility_experiment)
from slecap.loewner import (DrivingPath, atlas_from_driving,
                            capacity_from_asymptotics, evaluate_g,
                            evaluate_g_prime)
from slecap.params import Params
from slecap.sampler import sle_to_infinity_driving

P4 = Params.from_kappa(4.0)
DT = 1.22e-4          # levels_for(1, 1e-4) -> 2^13 steps per unit time
ACCEPT_SEED = 20260809


def _line(name, ok, detail=""):
    print(f"{'PASS' if ok else 'FAIL'}: {name}" + (f"  [{detail}]" if detail else ""))
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------------------
# exact-map suite (seconds)
# ---------------------------------------------------------------------------

def test_exact_map_suite():
    # slit closed form to 1e-10 relative
    d = DrivingPath(times=np.linspace(0, 1, 65), U=np.zeros(65), a=P4.a)
    m = atlas_from_driving(d)
    worst = 0.0
    for z in (2j, 1 + 1j, -2 + 0.7j, 0.3 + 3j):
        want = cmath.sqrt(z * z + 1.0)
        if want.imag < 0:
            want = -want
        worst = max(worst, abs(evaluate_g(m, z) - want) / abs(want))
    _line("exact maps: slit closed form (rel 1e-10)", worst < 1e-10, f"worst={worst:.2e}")

    # capacity from asymptotics at |z| = 1e3 to 1e-3 relative
    rng = default_rng(3)
    worst = 0.0
    for t in (0.25, 1.0):
        dd = sle_to_infinity_driving(P4, t, 1e-3, rng)
        est = capacity_from_asymptotics(atlas_from_driving(dd), radius=1e3)
        worst = max(worst, abs(est - P4.a * t) / (P4.a * t))
    _line("exact maps: capacity asymptotics at |z|=1e3 (rel 1e-3)", worst < 1e-3,
          f"worst={worst:.2e}")

    # derivative vs centered finite differences to 1e-6
    dd = sle_to_infinity_driving(P4, 0.5, 1e-3, default_rng(4))
    mm = atlas_from_driving(dd)
    eps = 1e-5
    worst = 0.0
    pts = default_rng(5).uniform(-2, 2, 10) + 1j * default_rng(6).uniform(1.5, 3, 10)
    for z in pts:
        fd = (evaluate_g(mm, z + eps) - evaluate_g(mm, z - eps)) / (2 * eps)
        worst = max(worst, abs(evaluate_g_prime(mm, z) - fd))
    _line("exact maps: derivative vs finite differences (abs 1e-6)", worst < 1e-6,
          f"worst={worst:.2e}")


# ---------------------------------------------------------------------------
# density suite (seconds)
# ---------------------------------------------------------------------------

def test_density_suite():
    worst = 0.0
    for a in (0.5, 0.6, 0.75, 1.0):
        p = Params.from_kappa(2.0 / a)
        total, _ = quad(lambda t: bessel.first_passage_density(p, 1.0, t, normalized=True),
                        0, np.inf, limit=400)
        worst = max(worst, abs(total - 1.0))
    _line("densities: hitting-time normalization (<1e-6, a in {.5,.6,.75,1})",
          worst < 1e-6, f"worst={worst:.2e}")

    worst = 0.0
    for a in (0.5, 0.6, 0.75, 1.0):
        p = Params.from_kappa(2.0 / a)
        t, x = 0.7, 1.1
        alive, _ = quad(lambda y: bessel.transition_density_killed(p, t, x, y),
                        0, np.inf, limit=400)
        dead, _ = quad(lambda s: bessel.first_passage_density(p, x, s, normalized=True),
                       0, t, limit=400)
        worst = max(worst, abs(alive + dead - 1.0))
    _line("densities: killed mass conservation (<1e-5)", worst < 1e-5,
          f"worst={worst:.2e}")

    worst = 0.0
    for (x, t) in [(1.0, 1.0), (0.5, 0.2), (2.0, 3.0)]:
        levy = x * t ** (-1.5) * math.exp(-x * x / (2 * t)) / math.sqrt(2 * math.pi)
        worst = max(worst, abs(bessel.first_passage_density(P4, x, t, normalized=True)
                               - levy))
        refl = (norm.pdf(0.0, scale=math.sqrt(t)) - norm.pdf(2 * x, scale=math.sqrt(t)))
        worst = max(worst, abs(bessel.transition_density_killed(P4, t, x, x) - refl))
    _line("densities: a=1/2 Brownian reductions (abs 1e-8)", worst < 1e-8,
          f"worst={worst:.2e}")


# ---------------------------------------------------------------------------
# bridge suite (~1 minute)
# ---------------------------------------------------------------------------

def test_bridge_suite():
    n = 100_000
    out = bessel.bridge_functionals(P4, 1.0, 1.0, DT, SeedSequence(ACCEPT_SEED, spawn_key=(1,)),
                                    n, marginal_times=[0.5])
    m = np.sort(out["marginals"][:, 0])
    top = max(float(np.quantile(m, 0.9999)) + 2.0, 6.0)
    grid = np.linspace(1e-8, top, 4001)
    pdf = bessel.bridge_density(P4, 0.5, 1.0, grid, 1.0)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(grid))])
    cdf /= cdf[-1]
    F = np.interp(m, grid, cdf, right=1.0)
    ks = max(np.max(np.abs(F - np.arange(1, n + 1) / n)),
             np.max(np.abs(F - np.arange(0, n) / n)))
    _line("bridge: marginal at t0/2 vs closed form (KS<0.02, 1e5 paths)", ks < 0.02,
          f"KS={ks:.4f}")

    obs = bessel.observation_checks(P4, 1.0, 1e-3, [0.25, 0.5, 0.75], 0.5, 2.0,
                                    SeedSequence(ACCEPT_SEED, spawn_key=(2,)), 20000)
    M0 = bessel.first_passage_density(P4, 1.0, 1.0)
    worst_z = 0.0
    for j in range(3):
        M = obs["X"][:, j] ** (1 - 3 * P4.a) * np.exp(-P4.a * P4.b * obs["I2"][:, j])
        Mt = M * bessel.first_passage_density(P4, obs["X"][:, j],
                                              1.0 - obs["t_stop"][:, j]) / M0
        z = abs(Mt.mean() - 1.0) / (Mt.std() / math.sqrt(len(Mt)))
        worst_z = max(worst_z, z)
    _line("bridge: product-martingale mean constant (3 stopping times, 3 SE)",
          worst_z < 3.0, f"worst z={worst_z:.2f}")


# ---------------------------------------------------------------------------
# the statistical experiments (minutes each)
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("kappa", [2.0, 8.0 / 3.0, 3.0, 4.0])
def test_reversibility(kappa):
    p = Params.from_kappa(kappa)
    rep = reversibility_experiment(p, 1.0, 2000, DT, ACCEPT_SEED + int(10 * kappa))
    st = rep.statistics
    detail = (f"n_pass={st['energy_p']['n_pass']}/10, "
              f"power_p={st['power_p']['value']:.4g}")
    _line(f"reversibility kappa={kappa:.4g} (>=7/10 seeds p>0.01, power<0.01)",
          rep.verdict, detail)


def test_mu_r_constancy():
    rep = mu_r_constancy_experiment(P4, 1.0, [0.0, 0.25, 0.5, 0.75, 1.0], 2000,
                                    DT, ACCEPT_SEED + 5)
    st = rep.statistics["seeds_all_pairs_pass"]
    _line("mu_r constancy at kappa=4 (pairwise p>0.01, majority of 10)",
          rep.verdict, f"seeds passing all pairs: {st['value']}/10")


def test_coupling_rates():
    rep = coupling_rate_experiment(P4, 1.0, [0.2, 0.1, 0.05, 0.025], 4000, DT,
                                   ACCEPT_SEED + 6)
    st = rep.statistics
    detail = (f"c={st['c_fitted']['value']:.3f}, "
              f"stability={st['c_stability_ratio']['value']:.2f}, "
              f"slope={st['exceed_slope']['value']:.2f}, "
              f"raw exceedances={max(r['exceed_raw'] for r in st['per_eps']['values'])}")
    _line("coupling rates (c stable, exceedance decay slope < -1)", rep.verdict, detail)


def test_tail_bounds():
    rep = bessel_tail_experiments(P4, 1.0, 20000, DT, ACCEPT_SEED + 7)
    st = rep.statistics
    detail = (f"max r^2-slope={st['max_slope_vs_r2']['value']:.3f}, "
              f"integral slope={st['integral_slope']['value']:.3f}, "
              f"driving slope={st['driving_slope']['value']:.3f}, "
              f"terminal superlinear={st['terminal']['superlinear']}")
    _line("tail bounds (negative slopes, CIs exclude 0, terminal superpolynomial)",
          rep.verdict, detail)


def test_commutation():
    p = Params.from_kappa(8.0 / 3.0)
    rep = commutation_experiment(p, 1.0, 0.25, 0.25, 2000, 1e-3, ACCEPT_SEED + 8)
    st = rep.statistics
    detail = (f"n_pass={st['energy_p']['n_pass']}/10, "
              f"weight mass={st['weight_mass']['value']:.3f}, "
              f"gap agreement={st['gap_route_agreement']['value']:.3f}")
    _line("commutation at kappa=8/3 (order exchange p>0.01, majority of 10)",
          rep.verdict, detail)


def test_discretization_robustness():
    rep = discretization_robustness(P4, 1.0, 1000, DT, ACCEPT_SEED + 9)
    st = rep.statistics
    detail = (f"p-flips={st['p_value_flips']['value']}, "
              f"max const shift={st['constant_shifts']['max_over_se']:.2f} SE")
    _line("discretization robustness (no p-value verdict flips, constants < 1 SE)",
          rep.verdict, detail)


def test_density_check_cli_contract():
    rep = density_check(Params.from_kappa(3.0))
    _line("density-check residuals (phi<1e-6, mass<1e-5)", rep.verdict,
          f"norm={rep.statistics['normalization_residual']['value']:.2e}")
