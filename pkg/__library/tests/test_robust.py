import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rskit import models
from rskit.core import distributions, losses, robust, solvers, transport
from rskit.errors import InputValidationError, ParameterError

FULL = models.COST_SPEC(variant="full_l2")
FEATURE = models.COST_SPEC(variant="feature_only")
L1 = models.LOSS_SPEC(kind="l1")
REGRESSION = models.TASK_SPEC(task="regression")


def random_instance(rng, n=5, extra=5, cost=FULL, loss=L1):
    points = np.column_stack([rng.normal(size=(n, 2)), rng.normal(size=n)])
    p_hat = models.DISCRETE_DISTRIBUTION.uniform(points)
    candidates = np.column_stack([rng.normal(size=(extra, 2)), rng.normal(size=extra)])
    ctx = robust.ROBUST_EVAL_CONTEXT.around(p_hat, candidates, cost=cost, loss=loss, task=REGRESSION)
    return rng.normal(size=2), p_hat, ctx


# ===================================================================================================
# REFORMULATION


def test_zero_multiplier_ignores_cost():
    x, p_hat, ctx = random_instance(np.random.default_rng(0))
    h = losses.pointwise_losses(L1, REGRESSION, x, ctx.candidate_support)
    assert robust.reformulated_objective(x, 0.0, p_hat, ctx) == pytest.approx(h.max())


def test_large_multiplier_gives_empirical_loss():
    rng = np.random.default_rng(1)
    x, p_hat, _ = random_instance(rng)
    ctx = robust.ROBUST_EVAL_CONTEXT(p_hat.support, cost=FULL, loss=L1, task=REGRESSION)
    assert robust.reformulated_objective(x, 1e6, p_hat, ctx) == pytest.approx(losses.expected_loss(x, p_hat, L1, REGRESSION))


def test_closed_form_case_split():
    rng = np.random.default_rng(2)
    x = np.array([1.0, 2.0])
    _, p_hat, _ = random_instance(rng)
    ctx = robust.ROBUST_EVAL_CONTEXT(p_hat.support, cost=FEATURE, loss=L1, task=REGRESSION)
    nrm = np.linalg.norm(x)
    assert robust.closed_form_objective(x, 0.9 * nrm, p_hat, ctx) == math.inf
    assert robust.closed_form_objective(x, 1.1 * nrm, p_hat, ctx) == pytest.approx(losses.expected_loss(x, p_hat, L1, REGRESSION))


def test_negative_multiplier_rejected():
    x, p_hat, ctx = random_instance(np.random.default_rng(3))
    with pytest.raises(ParameterError):
        robust.reformulated_objective(x, -1.0, p_hat, ctx)


def test_candidate_support_must_cover_empirical_support():
    x, p_hat, _ = random_instance(np.random.default_rng(4))
    ctx = robust.ROBUST_EVAL_CONTEXT(p_hat.support[:-1], cost=FULL, loss=L1, task=REGRESSION)
    with pytest.raises(InputValidationError):
        robust.reformulated_objective(x, 1.0, p_hat, ctx)


def test_objective_nonincreasing_in_multiplier():
    x, p_hat, ctx = random_instance(np.random.default_rng(5), n=8, extra=12)
    values = [robust.reformulated_objective(x, k, p_hat, ctx) for k in np.linspace(0, 5, 26)]
    assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))


# ===================================================================================================
# WORST-CASE LP


@pytest.mark.parametrize("cost", [FULL, FEATURE], ids=lambda c: c.variant)
def test_lp_matches_reformulation(cost):
    rng = np.random.default_rng(6)
    loss = models.LOSS_SPEC(kind="huber", delta=0.5)
    for _ in range(100):
        x, p_hat, ctx = random_instance(rng, n=int(rng.integers(2, 8)), extra=int(rng.integers(0, 8)), cost=cost, loss=loss)
        k = float(rng.uniform(0, 3))
        value, _ = robust.worst_case_lp(x, k, p_hat, ctx)
        assert value == pytest.approx(robust.reformulated_objective(x, k, p_hat, ctx), abs=1e-7)


def test_lp_with_large_multiplier_returns_empirical():
    rng = np.random.default_rng(7)
    x, p_hat, ctx = random_instance(rng)
    value, argmax = robust.worst_case_lp(x, 1e6, p_hat, ctx)
    assert value == pytest.approx(losses.expected_loss(x, p_hat, L1, REGRESSION), abs=1e-6)
    for point, weight in zip(p_hat.support, p_hat.weights):
        assert argmax.mass_of(point) == pytest.approx(weight, abs=1e-9)


def test_lp_with_zero_multiplier_moves_all_mass_to_worst_point():
    rng = np.random.default_rng(8)
    x, p_hat, ctx = random_instance(rng)
    h = losses.pointwise_losses(L1, REGRESSION, x, ctx.candidate_support)
    value, argmax = robust.worst_case_lp(x, 0.0, p_hat, ctx)
    assert value == pytest.approx(h.max())
    assert argmax.size == 1
    np.testing.assert_array_equal(argmax.support[0], ctx.candidate_support[np.argmax(h)])


def test_lp_value_bounded_by_closed_form():
    rng = np.random.default_rng(9)
    x, p_hat, ctx = random_instance(rng, n=6, extra=30)
    k = 1.1 * robust.lipschitz_h(x, L1, REGRESSION, FULL)
    value, argmax = robust.worst_case_lp(x, k, p_hat, ctx)
    distance, _ = transport.wasserstein(argmax, p_hat, FULL)
    assert value <= robust.closed_form_objective(x, k, p_hat, ctx) + 1e-9
    assert losses.expected_loss(x, argmax, L1, REGRESSION) - k * distance == pytest.approx(value, abs=1e-7)


# ===================================================================================================
# FRAGILITY


def test_infeasible_target_has_infinite_fragility():
    x, p_hat, ctx = random_instance(np.random.default_rng(10))
    tau = losses.expected_loss(x, p_hat, L1, REGRESSION) - 0.1
    assert robust.fragility(x, p_hat, tau, ctx) == math.inf
    assert robust.fragility(x, p_hat, tau, ctx, mode="closed_form") == math.inf


def test_closed_form_fragility_is_norm():
    x, p_hat, _ = random_instance(np.random.default_rng(11))
    ctx = robust.ROBUST_EVAL_CONTEXT(p_hat.support, cost=FEATURE, loss=L1, task=REGRESSION)
    tau = losses.expected_loss(x, p_hat, L1, REGRESSION) + 0.1
    assert robust.fragility(x, p_hat, tau, ctx, mode="closed_form") == pytest.approx(np.linalg.norm(x))


def test_oracle_fragility_certificate():
    rng = np.random.default_rng(12)
    for _ in range(10):
        x, p_hat, ctx = random_instance(rng, n=6, extra=10)
        empirical = losses.expected_loss(x, p_hat, L1, REGRESSION)
        tau = 0.5 * (empirical + robust.reformulated_objective(x, 0.0, p_hat, ctx))
        k = robust.fragility(x, p_hat, tau, ctx)
        assert k > 1e-3
        assert robust.reformulated_objective(x, k, p_hat, ctx) <= tau + 1e-6
        assert robust.reformulated_objective(x, k - 1e-3, p_hat, ctx) > tau


def test_fragility_nonincreasing_in_tau():
    x, p_hat, ctx = random_instance(np.random.default_rng(13), n=6, extra=10)
    empirical = losses.expected_loss(x, p_hat, L1, REGRESSION)
    ks = [robust.fragility(x, p_hat, empirical + t, ctx) for t in (0.0, 0.1, 0.3, 0.6, 1.0)]
    assert all(b <= a + 1e-7 for a, b in zip(ks, ks[1:]))


def test_fragility_result_model():
    x, p_hat, ctx = random_instance(np.random.default_rng(14))
    result = robust.fragility_result(x, p_hat, 100.0, ctx)
    assert result.k_tau == 0.0
    assert result.mode == "oracle"


# ===================================================================================================
# RS CERTIFICATES


@pytest.mark.parametrize(
    "loss, task, cost, variant",
    [
        (L1, REGRESSION, FEATURE, "x_only"),
        (L1, REGRESSION, FULL, "augmented"),
        (models.LOSS_SPEC(kind="pinball", delta=0.25), REGRESSION, FEATURE, "x_only"),
        (models.LOSS_SPEC(kind="huber", delta=1.0), REGRESSION, FULL, "augmented"),
        (models.LOSS_SPEC(kind="hinge"), models.TASK_SPEC(task="classification"), FEATURE, "x_only"),
        (models.LOSS_SPEC(kind="logistic"), models.TASK_SPEC(task="classification"), FEATURE, "x_only"),
    ],
)
def test_fragility_bounded_by_lipschitz_constant(small_data, labelled_data, loss, task, cost, variant):
    data = labelled_data if task.task == "classification" else small_data
    solution = solvers.solve_rs(data, loss, task, 0.2, norm_variant=variant)
    assert solution.k_tau <= robust.lipschitz_h(solution.x_hat, loss, task, cost) + 1e-8


def lemma_instances():
    regression = [L1, models.LOSS_SPEC(kind="pinball", delta=0.25), models.LOSS_SPEC(kind="huber", delta=1.0),
                  models.LOSS_SPEC(kind="insensitive", delta=0.1)]
    classification = models.TASK_SPEC(task="classification")
    combos = [(loss, REGRESSION, FEATURE, "x_only") for loss in regression]
    combos += [(loss, REGRESSION, FULL, "augmented") for loss in regression]
    combos += [(models.LOSS_SPEC(kind=kind), classification, FEATURE, "x_only") for kind in ("hinge", "logistic")]
    return [(seed, *combo) for seed in range(10) for combo in combos]


@pytest.mark.slow
def test_fragility_bounded_by_lipschitz_constant_on_many_instances():
    synthetic = models.SYNTHETIC_CONFIG()
    instances = lemma_instances()
    assert len(instances) == 100

    violations = []
    for seed, loss, task, cost, variant in instances:
        if task.task == "classification":
            rng = np.random.default_rng(seed)
            features = rng.normal(size=(40, 2))
            labels = np.where(features @ np.array([1.0, -0.5]) + 0.6 * rng.normal(size=40) > 0, 1.0, -1.0)
            data = models.DATASET(features, labels)
        else:
            data = distributions.generate_synthetic(synthetic, 30, seed=seed)
        epsilon = 0.05 * (1 + seed % 5)
        solution = solvers.solve_rs(data, loss, task, epsilon, norm_variant=variant)
        bound = robust.lipschitz_h(solution.x_hat, loss, task, cost)
        if solution.k_tau > bound + 1e-8:
            violations.append((seed, loss.kind, cost.variant, solution.k_tau, bound))
    assert violations == []


def test_uniform_lipschitz_examples():
    assert robust.uniform_lipschitz(2.0, L1, REGRESSION, FEATURE) == pytest.approx(2.0)
    assert robust.uniform_lipschitz(2.0, L1, REGRESSION, FULL) == pytest.approx(math.sqrt(5.0))
    with pytest.raises(ParameterError):
        robust.uniform_lipschitz(-1.0, L1, REGRESSION, FEATURE)


@given(
    x=st.lists(st.floats(min_value=-3, max_value=3), min_size=1, max_size=4),
    radius=st.floats(min_value=0, max_value=10),
)
def test_uniform_lipschitz_covers_the_decision_ball(x, radius):
    x = np.asarray(x)
    nrm = np.linalg.norm(x)
    if nrm > radius:
        x = x * radius / nrm
    for cost in (FEATURE, FULL):
        assert robust.lipschitz_h(x, L1, REGRESSION, cost) <= robust.uniform_lipschitz(radius, L1, REGRESSION, cost) + 1e-9


def test_rs_solution_certifies_perturbed_distributions(small_data):
    solution = solvers.solve_rs(small_data, L1, REGRESSION, 0.2)
    x = np.asarray(solution.x_hat)
    p_hat = distributions.empirical_distribution(small_data)
    rng = np.random.default_rng(15)

    for _ in range(20):
        moved = p_hat.support.copy()
        moved[:, :-1] += rng.normal(scale=0.3, size=moved[:, :-1].shape)
        # split every atom between its original and moved position so label masses match
        share = rng.uniform(size=p_hat.size)
        weights = np.concatenate([share, 1.0 - share]) * np.tile(p_hat.weights, 2)
        p = models.DISCRETE_DISTRIBUTION(np.vstack([p_hat.support, moved]), weights)
        distance, _ = transport.wasserstein(p, p_hat, FEATURE)
        excess = losses.expected_loss(x, p, L1, REGRESSION) - solution.tau
        assert excess <= solution.k_tau * distance + 1e-6


def test_classification_closed_form_unavailable_under_full_cost():
    with pytest.raises(ParameterError):
        robust.lipschitz_h([1.0, 0.0], L1, models.TASK_SPEC(task="classification"), FULL)
