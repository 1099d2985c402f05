import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pulsedistill.diffcore import Tensor
from pulsedistill.diffcore.gradcheck import check_gradients
from pulsedistill.errors import ParameterError
from pulsedistill.losses import (
    AlignmentCost,
    brute_force_soft_dtw,
    brute_force_temporal,
    cost_matrix,
    delannoy,
    dilate,
    dilate_terms,
    enumerate_paths,
    hard_dtw,
    is_valid_path,
    mse,
    omega_matrix,
    soft_dtw,
    temporal_term,
)
from pulsedistill.types import PpgSignal

# -log(2 e^-1 + e^-2): the three 2x2 paths cost {1, 2, 1}
SOFT_DTW_2X2 = 0.13800519594174887


def rand_pair(rng, k):
    return rng.normal(size=k), rng.normal(size=k)


# -- cost matrix -------------------------------------------------------------
def test_identical_sequences_zero_diagonal():
    c = cost_matrix([0.3, -1.0, 2.0], [0.3, -1.0, 2.0])
    np.testing.assert_array_equal(np.diag(c.delta.data), 0.0)


def test_omega_entries():
    om = omega_matrix(4)
    assert om[0, 2] == 0.25
    np.testing.assert_array_equal(om, om.T)
    np.testing.assert_array_equal(np.diag(om), 0.0)


def test_delta_small_example():
    c = cost_matrix([0.0, 0.0], [1.0, 0.0])
    np.testing.assert_array_equal(c.delta.data, [[1.0, 0.0], [1.0, 0.0]])


def test_delta_rows_index_prediction():
    # delta[h, j] = (pred_h - truth_j)^2
    c = cost_matrix([0.0, 2.0], [1.0, 0.0])
    np.testing.assert_array_equal(c.delta.data, [[1.0, 0.0], [1.0, 4.0]])


def test_length_mismatch():
    with pytest.raises(ParameterError):
        cost_matrix([0.0, 1.0], [0.0, 1.0, 2.0])


def test_accepts_ppg_signals():
    a = PpgSignal([0.0, 1.0, 0.5], 30.0)
    assert cost_matrix(a, a).k == 3


# -- paths -------------------------------------------------------------------
@pytest.mark.parametrize("k", [2, 3, 4, 5, 6])
def test_path_count_is_delannoy(k):
    paths = enumerate_paths(k)
    assert len(paths) == delannoy(k - 1, k - 1)
    assert all(is_valid_path(a) for a in paths)


def test_invalid_paths():
    assert not is_valid_path(np.array([[1, 0], [0, 0]]))
    assert not is_valid_path(np.array([[1, 0, 0], [0, 0, 1], [0, 0, 1]]))


# -- soft-DTW ----------------------------------------------------------------
def test_two_by_two_example():
    c = cost_matrix([0.0, 0.0], [1.0, 0.0], gamma=1.0)
    assert soft_dtw(c).item() == pytest.approx(SOFT_DTW_2X2, rel=1e-14)
    assert -math.log(2 * math.exp(-1) + math.exp(-2)) == pytest.approx(SOFT_DTW_2X2, rel=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.floats(1e-3, 10.0), st.integers(0, 2**31))
def test_identical_sequences_non_positive(k, gamma, seed):
    x = np.random.default_rng(seed).normal(size=k)
    assert soft_dtw(cost_matrix(x, x, gamma)).item() <= 1e-12


def test_gamma_must_be_positive():
    with pytest.raises(ParameterError):
        cost_matrix([0.0, 1.0], [1.0, 0.0], gamma=0.0)


@pytest.mark.parametrize("seed", range(5))
def test_hard_limit(seed):
    rng = np.random.default_rng(seed)
    a, b = rand_pair(rng, 5)
    c = cost_matrix(a, b, 1e-4)
    hard, _ = hard_dtw(c.delta.data)
    assert abs(soft_dtw(c).item() - hard) < 1e-3


@pytest.mark.parametrize("seed", range(5))
def test_soft_below_hard_for_every_gamma(seed):
    rng = np.random.default_rng(100 + seed)
    a, b = rand_pair(rng, 4)
    hard, _ = hard_dtw(cost_matrix(a, b).delta.data)
    values = [soft_dtw(cost_matrix(a, b, g)).item() for g in (1.0, 0.1, 0.01, 1e-4)]
    assert all(v <= hard + 1e-12 for v in values)
    # approaching the hard value monotonically as gamma shrinks
    assert all(x <= y + 1e-12 for x, y in zip(values, values[1:]))


@pytest.mark.parametrize("seed", range(10))
def test_dp_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 7))
    a, b = rand_pair(rng, k)
    for gamma in (1.0, 0.1, 0.01):
        c = cost_matrix(a, b, gamma)
        assert soft_dtw(c).item() == pytest.approx(brute_force_soft_dtw(c.delta.data, gamma), rel=1e-9)
        assert temporal_term(c).item() == pytest.approx(
            brute_force_temporal(c.delta.data, c.omega, gamma), rel=1e-7, abs=1e-12
        )


def test_symmetry():
    rng = np.random.default_rng(11)
    a, b = rand_pair(rng, 7)
    assert soft_dtw(cost_matrix(a, b, 0.1)).item() == pytest.approx(soft_dtw(cost_matrix(b, a, 0.1)).item(), rel=1e-12)


# -- temporal term -----------------------------------------------------------
def test_uniform_weights_two_by_two():
    c = AlignmentCost(Tensor(np.zeros((2, 2))), omega_matrix(2), 1.0)
    assert temporal_term(c).item() == pytest.approx(1 / 6, rel=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_temporal_hard_limit(seed):
    rng = np.random.default_rng(200 + seed)
    a, b = rand_pair(rng, 5)
    c = cost_matrix(a, b, 1e-4)
    _, path = hard_dtw(c.delta.data)
    assert temporal_term(c).item() == pytest.approx(float(np.sum(path * c.omega)), abs=1e-6)


def test_identical_sequences_temporal_vanishes():
    x = np.random.default_rng(3).normal(size=6)
    assert temporal_term(cost_matrix(x, x, 1e-4)).item() < 1e-9


def test_expected_alignment_is_gradient_of_value():
    rng = np.random.default_rng(12)
    a, b = rand_pair(rng, 4)
    delta = Tensor(cost_matrix(a, b).delta.data, requires_grad=True)
    c = AlignmentCost(delta, omega_matrix(4), 0.5)
    err, _ = check_gradients(lambda: soft_dtw(AlignmentCost(delta, c.omega, 0.5)), [delta])
    assert err < 1e-6
    err, _ = check_gradients(lambda: temporal_term(AlignmentCost(delta, c.omega, 0.5)), [delta])
    assert err < 1e-4


# -- dilate -----------------------------------------------------------------
@pytest.mark.parametrize("gamma", [1.0, 0.1, 0.01])
def test_gradients_wrt_prediction(gamma):
    rng = np.random.default_rng(13)
    pred = Tensor(rng.normal(size=8), requires_grad=True)
    truth = rng.normal(size=8)
    for fn in (lambda: soft_dtw(cost_matrix(pred, truth, gamma)),
               lambda: temporal_term(cost_matrix(pred, truth, gamma)),
               lambda: dilate(pred, truth, 0.3, gamma),
               lambda: dilate(pred, truth, 0.5, gamma, normalize=True)):
        err, _ = check_gradients(fn, [pred])
        assert err < 1e-4


def test_alpha_linearity():
    rng = np.random.default_rng(14)
    a, b = rand_pair(rng, 10)
    shape, temporal = (t.item() for t in dilate_terms(a, b, 0.1))
    assert dilate(a, b, 1.0, 0.1).item() == shape
    assert dilate(a, b, 0.0, 0.1).item() == temporal
    for alpha in (0.25, 0.5, 0.75):
        assert dilate(a, b, alpha, 0.1).item() == pytest.approx(alpha * shape + (1 - alpha) * temporal, rel=1e-15)


@pytest.mark.parametrize("alpha", [-0.1, 1.5])
def test_alpha_range(alpha):
    with pytest.raises(ParameterError):
        dilate([0.0, 1.0], [1.0, 0.0], alpha)


def test_normalize_flag_is_explicit():
    a, b = np.array([0.0, 1.0, 3.0]), np.array([0.0, 2.0, 6.0])
    assert dilate(a, b).item() != dilate(a, b, normalize=True).item()
    assert dilate(a, b, normalize=True).item() == pytest.approx(dilate(a, a, normalize=True).item(), abs=1e-9)


def test_mse_is_mean():
    assert mse([1.0, 2.0], [0.0, 0.0]).item() == 2.5
    p = Tensor(np.array([1.0, -2.0, 0.5]), requires_grad=True)
    err, _ = check_gradients(lambda: mse(p, [0.0, 1.0, 2.0]), [p])
    assert err < 1e-6
