import numpy as np
import pytest

from realftrl.contexts import (
    DiscreteContextModel,
    SphereContextModel,
    context_model_from_dict,
    exact_covariance,
    min_eigenvalue,
)


def test_discrete_covariance_is_exact():
    m = DiscreteContextModel([[1.0, 0.0], [0.0, 2.0]], [0.25, 0.75])
    np.testing.assert_allclose(exact_covariance(m), [[0.25, 0.0], [0.0, 3.0]])
    assert m.lambda_min == pytest.approx(0.25)
    assert m.c_x == 2.0


def test_symmetric_support_gives_scaled_identity():
    m = DiscreteContextModel([[1, 0], [-1, 0], [0, 1], [0, -1]])
    np.testing.assert_allclose(m.covariance, 0.5 * np.eye(2))


def test_rank_deficient_support_rejected():
    with pytest.raises(ValueError, match="positive definite"):
        DiscreteContextModel([[1.0, 1.0], [2.0, 2.0]])


def test_weights_validated():
    with pytest.raises(ValueError):
        DiscreteContextModel([[1.0], [2.0]], [0.5, 0.6])
    with pytest.raises(ValueError):
        DiscreteContextModel([[1.0], [2.0]], [1.5, -0.5])


def test_scalar_and_batch_sampling_agree():
    m = DiscreteContextModel([[1.0], [2.0], [3.0]], [0.2, 0.3, 0.5])
    a, b = np.random.default_rng(3), np.random.default_rng(3)
    singles = [m.sample_index(a) for _ in range(500)]
    np.testing.assert_array_equal(singles, m.sample_indices(b, 500))


def test_discrete_sampling_frequencies():
    m = DiscreteContextModel([[1.0], [2.0], [3.0]], [0.2, 0.3, 0.5])
    idx = m.sample_indices(np.random.default_rng(0), 100_000)
    freq = np.bincount(idx, minlength=3) / idx.size
    np.testing.assert_allclose(freq, m.weights, atol=4 * np.sqrt(0.25 / idx.size))


@pytest.mark.parametrize("radial,denom", [("sphere", 3), ("ball", 5)])
def test_sphere_covariance_matches_monte_carlo(radial, denom):
    m = SphereContextModel(3, radius=0.8, radial=radial)
    np.testing.assert_allclose(m.covariance, 0.64 / denom * np.eye(3))
    X = m.sample_many(np.random.default_rng(1), 200_000)
    assert np.linalg.norm(X, axis=1).max() <= 0.8 + 1e-12
    np.testing.assert_allclose(X.T @ X / len(X), m.covariance, atol=3e-3)


def test_min_eigenvalue_checks_input():
    assert min_eigenvalue([[2.0, 1.0], [1.0, 2.0]]) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        min_eigenvalue([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(ValueError):
        min_eigenvalue([1.0, 2.0])


def test_from_dict_round_trip():
    m = DiscreteContextModel([[1.0, 0.0], [0.0, 1.0]], [0.3, 0.7])
    again = context_model_from_dict(m.to_dict())
    np.testing.assert_array_equal(again.covariance, m.covariance)
    s = SphereContextModel(2, 0.5, "ball")
    assert context_model_from_dict(s.to_dict()).to_dict() == s.to_dict()
    with pytest.raises(ValueError):
        context_model_from_dict({"kind": "lattice"})
