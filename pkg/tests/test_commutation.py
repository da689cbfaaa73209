"""Growth-order exchange and the pair-reweighting factor at zero central charge."""

import numpy as np
import pytest
from numpy.random import SeedSequence, default_rng

from slecap.commutation import (CommutationWeight, grow_order,
                                independent_pair_weights, order_features,
                                weight_from_row)
from slecap.energy import energy_two_sample_test
from slecap.params import Params

P83 = Params.from_kappa(8.0 / 3.0)


def test_grow_order_reaches_target_and_is_deterministic():
    res = grow_order(P83, 0.0, 1.0, 0.25, 0.25, 2e-3, SeedSequence(5), 64)
    assert res["valid"].all()
    again = grow_order(P83, 0.0, 1.0, 0.25, 0.25, 2e-3, SeedSequence(5), 64)
    assert np.array_equal(res["g_pts"], again["g_pts"])
    assert np.array_equal(res["g_tip_second"], again["g_tip_second"])
    # tip images are real numbers inside a sane window
    assert np.all(np.isfinite(res["g_tip_first"]))
    assert np.all(np.isfinite(res["g_tip_second"]))


def test_grow_order_argument_validation():
    with pytest.raises(ValueError):
        grow_order(P83, 0.0, 1.0, 0.0, 0.25, 1e-3, SeedSequence(0), 4)
    with pytest.raises(ValueError):
        grow_order(P83, 0.0, 1.0, 0.6, 0.5, 1e-3, SeedSequence(0), 4)


def test_order_exchange_energy_test_passes():
    n = 384
    f1 = order_features(P83, 0.0, 1.0, 0.25, 0.25, 2e-3, SeedSequence(100, spawn_key=(1,)), n, 1)
    f2 = order_features(P83, 0.0, 1.0, 0.25, 0.25, 2e-3, SeedSequence(100, spawn_key=(2,)), n, 2)
    res = energy_two_sample_test(f1["features"], f2["features"], 300, default_rng(0))
    assert res["p_value"] > 0.01


def test_same_order_null_calibration():
    n = 256
    f1 = order_features(P83, 0.0, 1.0, 0.25, 0.25, 2e-3, SeedSequence(7, spawn_key=(1,)), n, 1)
    f2 = order_features(P83, 0.0, 1.0, 0.25, 0.25, 2e-3, SeedSequence(7, spawn_key=(2,)), n, 1)
    res = energy_two_sample_test(f1["features"], f2["features"], 300, default_rng(1))
    assert res["p_value"] > 0.01


def test_pair_weights_positive_and_routes_agree():
    res = independent_pair_weights(P83, 0.0, 1.0, 0.25, 0.25, 2e-3, SeedSequence(7), 512)
    v = res["valid"]
    assert v.mean() > 0.8
    assert np.all(res["weight"][v] > 0)
    assert np.all(res["weight_norm"][v] > 0)
    rel = np.abs(res["gap1"][v] - res["gap2"][v]) / res["gap1"][v]
    assert np.median(rel) < 0.03


def test_normalized_weight_mass_is_one_at_zero_charge():
    # E[W 1{valid}] = P*(clean pairs) ~ 1; the loop factor is exactly 1 here
    res = independent_pair_weights(P83, 0.0, 1.0, 0.2, 0.2, 2e-3, SeedSequence(13), 2048)
    w = np.where(res["valid"], res["weight_norm"], 0.0)
    se = w.std() / np.sqrt(len(w))
    assert abs(w.mean() - 1.0) < max(4 * se, 0.03)


def test_weight_requires_zero_central_charge():
    with pytest.raises(ValueError):
        independent_pair_weights(Params.from_kappa(4.0), 0.0, 1.0, 0.25, 0.25,
                                 1e-2, SeedSequence(0), 8)


def test_weight_row_assembly_identity():
    res = independent_pair_weights(P83, 0.0, 1.0, 0.25, 0.25, 5e-3, SeedSequence(3), 64)
    i = int(np.nonzero(res["valid"])[0][0])
    cw = weight_from_row(res, i, P83, 1.0)
    assert isinstance(cw, CommutationWeight)
    assert cw.h1_prime_at_U2 > 0 and cw.h2_prime_at_U1 > 0
    assert cw.endpoint_gap > 0 and cw.phi_ratio > 0 and cw.loop_term == 1.0
    want = (cw.h1_prime_at_U2 ** P83.b * cw.h2_prime_at_U1 ** P83.b * cw.loop_term
            * (cw.endpoint_gap / 1.0) ** (2 * P83.b) * cw.phi_ratio)
    assert cw.assembled(P83.b, 1.0) == pytest.approx(want, rel=1e-12)
    assert res["weight"][i] == pytest.approx(want, rel=1e-9)
