"""Calibration and power of the energy two-sample test."""

import numpy as np
import pytest
from numpy.random import default_rng

from slecap.energy import (energy_statistic, energy_two_sample_test,
                           map_values_to_features)


def test_identical_batches_degenerate():
    A = np.ones((40, 3))
    with pytest.warns(UserWarning):
        res = energy_two_sample_test(A, A.copy(), 100, default_rng(0))
    assert res["statistic"] == 0.0
    assert res["p_value"] == 1.0


def test_matches_direct_statistic():
    rng = default_rng(1)
    A = rng.normal(size=(60, 4))
    B = rng.normal(size=(50, 4)) + 0.2
    res = energy_two_sample_test(A, B, 50, default_rng(2))
    # the matrix-product route must agree with the naive double sum
    assert res["statistic"] == pytest.approx(energy_statistic(A, B), rel=1e-5)


def test_null_calibration():
    # same distribution twice: at most 3 of 20 p-values below 0.1
    rng = default_rng(3)
    low = 0
    for rep in range(20):
        A = rng.normal(size=(150, 5))
        B = rng.normal(size=(150, 5))
        res = energy_two_sample_test(A, B, 200, default_rng(100 + rep))
        if res["p_value"] < 0.1:
            low += 1
    assert low <= 3


def test_power_against_mean_shift():
    rng = default_rng(4)
    A = rng.normal(size=(400, 5))
    B = rng.normal(size=(400, 5)) + 0.35
    res = energy_two_sample_test(A, B, 300, default_rng(5))
    assert res["p_value"] < 0.01


def test_complex_feature_flattening():
    vals = np.array([[1 + 2j, 3 - 1j]])
    feats = map_values_to_features(vals)
    assert feats.shape == (1, 4)
    assert np.array_equal(feats[0], [1.0, 3.0, 2.0, -1.0])


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        energy_two_sample_test(np.empty((0, 3)), np.ones((5, 3)), 10, default_rng(0))
    with pytest.raises(ValueError):
        energy_two_sample_test(np.ones((5, 3)), np.ones((5, 4)), 10, default_rng(0))
