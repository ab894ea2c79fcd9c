import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rskit import models
from rskit.core import distributions, inference, robust, solvers
from rskit.errors import ConsistencyError, ParameterError

FULL = models.COST_SPEC(variant="full_l2")


def rs_solution(tau=1.2, epsilon=0.2, k_tau=0.4):
    return models.RS_SOLUTION(
        x_hat=[0.4, 0.0],
        k_tau=k_tau,
        lambda_hat=0.1,
        tau=tau,
        epsilon=epsilon,
        erm_min_loss=tau / (1 + epsilon),
        norm_variant="x_only",
        lipschitz=1.0,
        diagnostics=models.RS_DIAGNOSTICS(backend="conic"),
    )


# ===================================================================================================
# REMAINDER


def test_constant_schedule_example():
    schedule = models.REMAINDER_SCHEDULE(beta_kind="constant", beta=1 / math.e, c1=math.e, c2=1.0, m=2)
    rem = inference.remainder(schedule, 4)
    assert rem.r_n == pytest.approx(math.sqrt(0.5))
    assert rem.regime == "small"
    assert not rem.degenerate
    assert any("m = 2" in c for c in rem.caveats)
    assert inference.confidence_level(4, rem.r_n, math.e, 1.0, schedule.a, 2) == pytest.approx(1 / math.e)


def test_large_remainder_regime():
    schedule = models.REMAINDER_SCHEDULE(beta_kind="constant", beta=0.05, c1=2.0, c2=1.0, a=2.0, m=3)
    rem = inference.remainder(schedule, 1)
    assert rem.regime == "large"
    assert rem.r_n == pytest.approx(math.sqrt(math.log(2.0 / 0.05)))
    assert any("placeholder" in c for c in rem.caveats)


@given(
    kind=st.sampled_from(["constant", "exp_sqrt", "polynomial"]),
    beta=st.floats(1e-6, 0.5),
    gamma=st.floats(0.01, 1.0),
    alpha=st.floats(0.1, 3.0),
    c1=st.floats(1.0, 10.0),
    c2=st.floats(0.1, 5.0),
    a=st.floats(1.1, 5.0),
    m=st.integers(1, 10),
    n=st.integers(2, 100_000),
)
def test_remainder_inverts_confidence_level(kind, beta, gamma, alpha, c1, c2, a, m, n):
    schedule = models.REMAINDER_SCHEDULE(beta_kind=kind, beta=beta, gamma=gamma, alpha=alpha, c1=c1, c2=c2, a=a, m=m)
    rem = inference.remainder(schedule, n)
    if rem.degenerate:
        return
    recovered = inference.confidence_level(n, rem.r_n, c1, c2, a, m)
    assert math.isclose(recovered, rem.beta_n, rel_tol=1e-10)


@pytest.mark.parametrize(
    "schedule",
    [
        models.REMAINDER_SCHEDULE(beta_kind="constant", beta=0.05),
        models.REMAINDER_SCHEDULE(beta_kind="exp_sqrt", gamma=0.1),
        models.REMAINDER_SCHEDULE(beta_kind="polynomial", alpha=1.0),
    ],
    ids=lambda s: s.beta_kind,
)
def test_remainder_nonincreasing(schedule):
    values = [inference.remainder(schedule, n).r_n for n in range(3, 2001)]
    assert all(b <= a + 1e-15 for a, b in zip(values, values[1:]))


def test_polynomial_remainder_vanishes():
    schedule = models.REMAINDER_SCHEDULE(beta_kind="polynomial", alpha=1.0)
    assert inference.remainder(schedule, 10**8).r_n < 0.1 * inference.remainder(schedule, 10**3).r_n


def test_degenerate_schedules():
    polynomial = models.REMAINDER_SCHEDULE(beta_kind="polynomial", alpha=1.0)
    assert inference.remainder(polynomial, 1).degenerate
    weak = models.REMAINDER_SCHEDULE(beta_kind="constant", beta=0.5, c1=0.01)
    rem = inference.remainder(weak, 100)
    assert rem.degenerate
    assert rem.r_n == 0.0


def test_schedule_requires_its_parameter():
    with pytest.raises(ValueError):
        models.REMAINDER_SCHEDULE(beta_kind="exp_sqrt")


def test_required_sample_size():
    schedule = models.REMAINDER_SCHEDULE(beta_kind="constant", beta=0.05, m=3)
    n = inference.required_sample_size(schedule, 0.3)
    assert inference.remainder(schedule, n).r_n <= 0.3
    assert inference.remainder(schedule, n - 1).r_n > 0.3


def test_adaptive_epsilon():
    assert inference.adaptive_epsilon(100, 2) == pytest.approx(0.1)
    assert inference.adaptive_epsilon(1000, 3) == pytest.approx(0.1)
    assert inference.adaptive_epsilon(100, 1) == pytest.approx(0.1)


# ===================================================================================================
# INTERVALS


def test_interval_examples():
    rs = rs_solution()
    theorem1 = inference.confidence_interval(rs, 1.0, 0.1, "theorem1")
    corollary1 = inference.confidence_interval(rs, 1.0, 0.1, "corollary1")
    assert (theorem1.lower, theorem1.upper) == pytest.approx((0.9, 1.24))
    assert (corollary1.lower, corollary1.upper) == pytest.approx((0.9, 1.3))
    assert corollary1.lower <= theorem1.lower and theorem1.upper <= corollary1.upper


def test_vanishing_remainder_interval():
    interval = inference.confidence_interval(rs_solution(), 1.0, 0.0)
    assert (interval.lower, interval.upper) == pytest.approx((1.0, 1.2))
    point = inference.confidence_interval(rs_solution(tau=1.0, epsilon=0.0), 1.0, 0.0)
    assert point.width == pytest.approx(0.0)


def test_corollary1_interval_requires_consistent_lipschitz_constant():
    with pytest.raises(ConsistencyError):
        inference.confidence_interval(rs_solution(k_tau=0.4), 0.3, 0.1, "corollary1")


def test_interval_rejects_negative_remainder():
    with pytest.raises(ParameterError):
        inference.confidence_interval(rs_solution(), 1.0, -0.1)


def test_generalization_bound_examples():
    assert inference.generalization_bound(0.0, 2.0, 1.0, 0.0) == 0.0
    assert inference.generalization_bound(0.5, 2.0, 1.0, 0.1) == pytest.approx(1.25)


def test_shifted_interval():
    rs = rs_solution()
    base = inference.confidence_interval(rs, 1.0, 0.1)
    same = inference.shifted_interval(rs, 1.0, 0.1, 0.0)
    assert (same.lower, same.upper) == pytest.approx((base.lower, base.upper))

    widths = [inference.shifted_interval(rs, 1.0, 0.1, d).width for d in (0.0, 0.1, 0.2)]
    assert widths[1] - widths[0] == pytest.approx(widths[2] - widths[1])
    assert widths[1] - widths[0] == pytest.approx(0.1 * (1.0 + rs.k_tau))

    shifted = inference.shifted_interval(rs, 1.0, 0.1, 0.2, j_tilde=1.0)
    assert shifted.regret_bound == pytest.approx(inference.generalization_bound(0.2, 1.0, 1.0, 0.3))

    with pytest.raises(ParameterError):
        inference.shifted_interval(rs, 1.0, 0.1, -0.1)


def test_interval_report(medium_data, l1, regression):
    rs = solvers.solve_rs(medium_data, l1, regression, 0.2, norm_variant="augmented")
    schedule = models.REMAINDER_SCHEDULE(beta_kind="constant", beta=0.05, c1=2.0, c2=1.0, a=2.0, m=3)
    l_h = robust.lipschitz_h(rs.x_hat, l1, regression, FULL)
    report = inference.interval_report(rs, schedule, 500, l_h=l_h, d_shift=0.1)

    assert report.remainder.n == 500
    assert report.theorem1.level == pytest.approx(0.95)
    assert report.corollary1.lower <= report.theorem1.lower
    assert report.theorem1.upper <= report.corollary1.upper
    assert report.shifted.width > report.theorem1.width



def test_corollary1_widens_with_decision_set_lipschitz_constant(medium_data, l1, regression):
    feature = models.COST_SPEC(variant="feature_only")
    rs = solvers.solve_rs(medium_data, l1, regression, 0.2)
    x_erm, _ = solvers.solve_erm(medium_data, l1, regression)
    assert np.linalg.norm(x_erm) > np.linalg.norm(rs.x_hat) + 1e-3

    l_h = robust.uniform_lipschitz(np.linalg.norm(x_erm), l1, regression, feature)
    assert l_h > rs.k_tau
    schedule = models.REMAINDER_SCHEDULE(beta_kind="constant", beta=0.05, c1=2.0, c2=1.0, a=2.0, m=3)
    report = inference.interval_report(rs, schedule, 500, l_h=l_h)
    assert report.corollary1.upper > report.theorem1.upper
    assert report.corollary1.upper - report.theorem1.upper == pytest.approx((l_h - rs.k_tau) * report.remainder.r_n)


# ===================================================================================================
# EXACT-DISTANCE CHAINS


@pytest.mark.parametrize("n, epsilon", [(20, 0.1), (50, 0.3)])
def test_exact_chain_holds(synthetic, l1, regression, n, epsilon):
    p_star = distributions.discrete_ground_truth(synthetic, 20, seed=n)
    p_target = distributions.discrete_ground_truth(distributions.shifted_config(synthetic, 4), 20, seed=n)
    data = distributions.sample_from(p_star, n, seed=n)
    p_hat = distributions.empirical_distribution(data)

    rs = solvers.solve_rs(data, l1, regression, epsilon, norm_variant="augmented")
    report = inference.exact_chain_report(rs, p_star, p_hat, l1, regression, FULL, p_target=p_target)

    assert report.chain_holds, report
    assert report.regret_holds, report
    assert report.shifted_holds, report
    assert report.shifted_regret_holds, report
    assert report.covered, report
    assert report.lower <= report.j_star + 1e-5 <= report.true_loss + 2e-5
    assert report.d_target <= report.d_shift + report.d_w + 1e-9


def test_shifted_regret_bound(synthetic, l1, regression):
    p_star = distributions.discrete_ground_truth(synthetic, 20, seed=7)
    p_target = distributions.discrete_ground_truth(distributions.shifted_config(synthetic, 6), 20, seed=8)
    data = distributions.sample_from(p_star, 30, seed=9)
    p_hat = distributions.empirical_distribution(data)
    rs = solvers.solve_rs(data, l1, regression, 0.2, norm_variant="augmented")

    report = inference.exact_chain_report(rs, p_star, p_hat, l1, regression, FULL, p_target=p_target)
    assert report.shifted_regret == pytest.approx(report.shifted_true_loss - report.j_tilde)
    bound = inference.generalization_bound(0.2, report.j_tilde, report.lipschitz_h, report.d_shift + report.d_w)
    assert report.shifted_regret_bound == pytest.approx(bound)
    assert report.shifted_regret_residual == pytest.approx(report.shifted_regret - bound)
    assert report.shifted_regret_holds

    # a negative tolerance demands slack the bound does not have
    strict = inference.exact_chain_report(rs, p_star, p_hat, l1, regression, FULL, p_target=p_target, tol=-100.0)
    assert not strict.shifted_regret_holds
    assert not strict.covered

    plain = inference.exact_chain_report(rs, p_star, p_hat, l1, regression, FULL)
    assert plain.shifted_regret is None and plain.shifted_regret_holds is None


def test_optimal_expected_loss_matches_grid(synthetic, l1, regression):
    p_star = distributions.discrete_ground_truth(synthetic, 20, seed=1)
    _, j_star = inference.optimal_expected_loss(p_star, l1, regression)

    grid = np.arange(0.0, 4.0 + 1e-9, 0.01)
    X1, X2 = np.meshgrid(grid, grid - 3.0, indexing="ij")
    total = np.zeros_like(X1)
    for point, weight in zip(p_star.support, p_star.weights):
        total += weight * np.abs(point[-1] - (point[0] * X1 + point[1] * X2))
    assert j_star <= total.min() + 1e-6
    assert total.min() - j_star <= 1e-2
