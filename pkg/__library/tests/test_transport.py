import math

import numpy as np
import pytest

from rskit import models
from rskit.core import transport
from rskit.errors import ShapeError

FULL = models.COST_SPEC(variant="full_l2")
FEATURE = models.COST_SPEC(variant="feature_only")


def random_distribution(rng, size, dim):
    weights = rng.random(size) + 0.1
    return models.DISCRETE_DISTRIBUTION(rng.normal(size=(size, dim)), weights / weights.sum())


# ===================================================================================================
# GROUND COST


def test_cost_examples():
    assert transport.cost(FULL, [0, 0], [3, 4]) == pytest.approx(5.0)
    assert transport.cost(FEATURE, [1, 0, 1], [0, 0, 1]) == pytest.approx(1.0)
    assert transport.cost(FEATURE, [1, 0, 1], [1, 0, 2]) == math.inf


def test_cost_shape_mismatch():
    with pytest.raises(ShapeError):
        transport.cost(FULL, [0, 0], [0, 0, 0])


def test_cost_matrix_agrees_with_cost():
    rng = np.random.default_rng(0)
    A = np.column_stack([rng.normal(size=(4, 2)), [1, 1, -1, -1]])
    B = np.column_stack([rng.normal(size=(3, 2)), [1, -1, -1]])
    for spec in (FULL, FEATURE):
        C = transport.cost_matrix(spec, A, B)
        for i in range(4):
            for j in range(3):
                assert C[i, j] == pytest.approx(transport.cost(spec, A[i], B[j]))


# ===================================================================================================
# EXACT DISTANCE


def test_identical_distributions():
    p = models.DISCRETE_DISTRIBUTION([[0.0, 1.0], [2.0, 3.0], [4.0, 4.0]], [0.2, 0.3, 0.5])
    distance, plan = transport.wasserstein(p, p, FULL)
    assert distance == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(plan.coupling, np.diag(p.weights), atol=1e-12)


def test_diracs():
    distance, _ = transport.wasserstein(models.DISCRETE_DISTRIBUTION.dirac([0, 0]), models.DISCRETE_DISTRIBUTION.dirac([3, 4]), FULL)
    assert distance == pytest.approx(5.0)


def test_two_atom_example():
    p = models.DISCRETE_DISTRIBUTION.uniform([0.0, 1.0])
    q = models.DISCRETE_DISTRIBUTION.uniform([0.5, 1.5])
    distance, plan = transport.wasserstein(p, q, FULL)
    assert distance == pytest.approx(0.5)
    assert transport.wasserstein_1d(p, q) == pytest.approx(0.5)
    rows, cols = plan.marginals()
    np.testing.assert_allclose(rows, p.weights, atol=1e-12)
    np.testing.assert_allclose(cols, q.weights, atol=1e-12)


def test_one_dimensional_examples():
    p = models.DISCRETE_DISTRIBUTION.uniform([0.0, 1.0])
    assert transport.wasserstein_1d(p, p) == 0.0
    assert transport.wasserstein_1d(models.DISCRETE_DISTRIBUTION.dirac([0.0]), models.DISCRETE_DISTRIBUTION.dirac([3.0])) == pytest.approx(3.0)
    with pytest.raises(ShapeError):
        transport.wasserstein_1d(models.DISCRETE_DISTRIBUTION.dirac([0.0, 1.0]), p)


def test_network_simplex_matches_quantile_coupling():
    rng = np.random.default_rng(1)
    for _ in range(100):
        p = random_distribution(rng, int(rng.integers(1, 8)), 1)
        q = random_distribution(rng, int(rng.integers(1, 8)), 1)
        distance, _ = transport.wasserstein(p, q, FULL)
        assert distance == pytest.approx(transport.wasserstein_1d(p, q), abs=1e-9)


def test_metric_axioms():
    rng = np.random.default_rng(2)
    for _ in range(30):
        p, q, r = (random_distribution(rng, 5, 3) for _ in range(3))
        d_pq, _ = transport.wasserstein(p, q, FULL)
        d_qp, _ = transport.wasserstein(q, p, FULL)
        d_pr, _ = transport.wasserstein(p, r, FULL)
        d_rq, _ = transport.wasserstein(r, q, FULL)
        assert d_pq >= 0
        assert d_pq == pytest.approx(d_qp, abs=1e-9)
        assert d_pq <= d_pr + d_rq + 1e-9


def test_marginals_of_plan():
    rng = np.random.default_rng(3)
    p, q = random_distribution(rng, 6, 3), random_distribution(rng, 4, 3)
    _, plan = transport.wasserstein(p, q, FULL)
    rows, cols = plan.marginals()
    np.testing.assert_allclose(rows, p.weights, atol=1e-9)
    np.testing.assert_allclose(cols, q.weights, atol=1e-9)
    assert np.all(plan.coupling >= 0)


def test_lipschitz_test_functions_bound_distance():
    rng = np.random.default_rng(4)
    for _ in range(20):
        p, q = random_distribution(rng, 6, 2), random_distribution(rng, 5, 2)
        distance, _ = transport.wasserstein(p, q, FULL)
        slopes = rng.normal(size=(4, 2))
        slopes /= np.maximum(1.0, np.linalg.norm(slopes, axis=1))[:, None]
        offsets = rng.normal(size=4)

        def f(points):
            return np.max(points @ slopes.T + offsets, axis=1)

        assert p.weights @ f(p.support) - q.weights @ f(q.support) <= distance + 1e-9


# ===================================================================================================
# LABEL-PRESERVING COST


def test_feature_only_mismatched_labels_is_infinite():
    p = models.DISCRETE_DISTRIBUTION([[0.0, 0.0, 1.0], [1.0, 0.0, -1.0]], [0.5, 0.5])
    q = models.DISCRETE_DISTRIBUTION([[0.0, 0.0, 1.0], [1.0, 0.0, -1.0]], [0.7, 0.3])
    distance, plan = transport.wasserstein(p, q, FEATURE)
    assert distance == math.inf
    assert plan.meta["feasible"] is False


def test_feature_only_matches_per_label_transport():
    p = models.DISCRETE_DISTRIBUTION([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]], [0.5, 0.5])
    q = models.DISCRETE_DISTRIBUTION([[0.0, 1.0, 1.0], [3.0, 0.0, 0.0]], [0.5, 0.5])
    distance, _ = transport.wasserstein(p, q, FEATURE)
    assert distance == pytest.approx(0.5 * 1.0 + 0.5 * 2.0)


def test_dimension_mismatch():
    with pytest.raises(ShapeError):
        transport.wasserstein(models.DISCRETE_DISTRIBUTION.dirac([0.0]), models.DISCRETE_DISTRIBUTION.dirac([0.0, 1.0]), FULL)


def test_result_model():
    p = models.DISCRETE_DISTRIBUTION.uniform([0.0, 1.0])
    q = models.DISCRETE_DISTRIBUTION.uniform([0.5, 1.5])
    result = transport.wasserstein_result(p, q, FULL, with_coupling=True)
    assert result.distance == pytest.approx(0.5)
    assert np.asarray(result.coupling).shape == (2, 2)
