import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from realftrl import oracle
from realftrl.contexts import DiscreteContextModel, SphereContextModel
from realftrl.mgr import MgrConfig, estimate_all, estimate_loss, estimate_theta, mgr
from realftrl.policy import PolicySnapshot
from realftrl.verify import mgr_test_instance

POINT = DiscreteContextModel([[1.0]])
ALWAYS = PolicySnapshot(np.zeros((1, 1)), 1.0, 1.0)


def test_config_validation():
    with pytest.raises(ValueError):
        MgrConfig(0.0, 3)
    with pytest.raises(ValueError):
        MgrConfig(0.5, -1)
    with pytest.raises(ValueError):
        MgrConfig(0.5, 3, tail_tol=-1.0)
    assert MgrConfig.from_bounds(1.0, 1.0, 5).delta == 0.5


def test_zero_iterations_is_delta_identity():
    model, snap, arm, _ = mgr_test_instance()
    res = mgr(model, snap, arm, MgrConfig(0.5, 0), np.random.default_rng(0))
    np.testing.assert_array_equal(res.sigma_dagger, 0.5 * np.eye(2))
    assert res.iterations == 0


def test_scalar_point_mass_is_deterministic():
    res = mgr(POINT, ALWAYS, 0, MgrConfig(0.5, 3), np.random.default_rng(0))
    assert float(res.sigma_dagger[0, 0]) == 0.9375
    want = oracle.mgr_expectation_closed_form([[1.0]], 0.5, 3)
    assert float(res.sigma_dagger[0, 0]) == pytest.approx(float(want[0, 0]), abs=1e-15)


def test_expectation_matches_truncated_series():
    model, snap, arm, cfg = mgr_test_instance()
    rng = np.random.default_rng(5)
    table = snap.probs(model.support)[:, arm]
    draws = np.array([mgr(model, snap, arm, cfg, rng, table=table).sigma_dagger for _ in range(20_000)])
    sigma_ta = oracle.exact_sigma_ta(model, snap, arm)
    want = oracle.mgr_expectation_closed_form(sigma_ta, cfg.delta, cfg.M)
    se = draws.std(axis=0, ddof=1) / math.sqrt(len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - want) <= 4 * se + 1e-12)


def test_continuous_path_expectation():
    model = SphereContextModel(2)
    snap = PolicySnapshot(np.array([[0.5, 0.0], [-0.5, 0.0]]), 1.0, 0.3)
    cfg = MgrConfig(0.5, 6)
    rng = np.random.default_rng(9)
    draws = np.array([mgr(model, snap, 0, cfg, rng).sigma_dagger for _ in range(4000)])
    # design matrix estimated on a fine grid of the circle
    X = model.grid(4096)
    p = snap.probs(X)[:, 0]
    sigma_ta = (X * p[:, None]).T @ X / len(X)
    want = oracle.mgr_expectation_closed_form(sigma_ta, cfg.delta, cfg.M)
    se = draws.std(axis=0, ddof=1) / math.sqrt(len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - want) <= 4 * se + 1e-6)


def test_early_exit_stays_within_tolerance():
    model, snap, arm, _ = mgr_test_instance()
    cfg_full = MgrConfig(0.5, 3000)
    cfg_tol = MgrConfig(0.5, 3000, tail_tol=1e-13)
    a = mgr(model, snap, arm, cfg_full, np.random.default_rng(1))
    b = mgr(model, snap, arm, cfg_tol, np.random.default_rng(1))
    assert b.iterations < a.iterations == 3000
    # the skipped terms have total norm at most tail_tol, scaled by delta
    assert np.abs(a.sigma_dagger - b.sigma_dagger).max() <= 0.5 * 1e-13


@settings(max_examples=60, deadline=None)
@given(
    M=st.integers(0, 200),
    gamma=st.floats(0.05, 1.0),
    beta=st.floats(0.1, 50.0),
    seed=st.integers(0, 2**32 - 1),
)
def test_operator_norm_bound(M, gamma, beta, seed):
    model, snap, arm, _ = mgr_test_instance()
    snap = PolicySnapshot(snap.L, beta, gamma)
    cfg = MgrConfig(0.5, M)
    s = mgr(model, snap, arm, cfg, np.random.default_rng(seed)).sigma_dagger
    assert np.linalg.norm(s, 2) <= cfg.delta * (M + 1) * (1 + 1e-12)


def test_same_stream_same_result():
    model, snap, arm, cfg = mgr_test_instance()
    a = mgr(model, snap, arm, cfg, np.random.default_rng(3)).sigma_dagger
    b = mgr(model, snap, arm, cfg, np.random.default_rng(3)).sigma_dagger
    np.testing.assert_array_equal(a, b)


def test_estimator_examples():
    np.testing.assert_array_equal(estimate_theta(np.eye(2), 0, 1, [1.0, 0.0], 1.0), [0.0, 0.0])
    assert estimate_theta(np.array([[0.9375]]), 0, 0, [1.0], 0.4)[0] == pytest.approx(0.375)
    np.testing.assert_array_equal(estimate_theta(np.eye(2), 1, 1, [1.0, 0.0], 1.0), [1.0, 0.0])
    full = estimate_all(np.eye(2), 1, 3, [0.5, 0.25], 2.0)
    np.testing.assert_array_equal(full, [[0, 0], [1.0, 0.5], [0, 0]])
    assert estimate_loss(np.zeros(2), [1.0, 3.0]) == 0.0
    assert estimate_loss([0.375, -2.0], [1.0, 0.0]) == pytest.approx(0.375)
    assert estimate_loss([0.3, -2.0], [0.5, 0.25]) == np.dot([0.5, 0.25], [0.3, -2.0])
