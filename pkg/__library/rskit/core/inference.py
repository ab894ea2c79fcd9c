# ===================================================================================================
# INFERENCE
# ===================================================================================================
"""
Finite-sample statistics around an RS solution.

With probability at least 1 - β_N the true distribution lies within type-1
Wasserstein distance r_N of the empirical one, where

    β_N = c1·exp(-c2·N·r^max(m,2))   if r ≤ 1
    β_N = c1·exp(-c2·N·r^a)          if r > 1

Every interval and bound below is an arithmetic consequence of that event.
"""

import logging
import math
from typing import Optional

import numpy as np

from rskit import models
from rskit.core import losses, transport
from rskit.core.robust import lipschitz_h
from rskit.core.solvers import REGULARIZATION_PATH
from rskit.errors import ConsistencyError, ParameterError

logger = logging.getLogger(__name__)

PLACEHOLDER_CONSTANTS = (2.0, 1.0)
MAX_SAMPLE_SIZE = 10**15

# ===================================================================================================
# REMAINDER SCHEDULES


def log_beta_n(schedule: models.REMAINDER_SCHEDULE, n: int) -> float:
    if schedule.beta_kind == "constant":
        return math.log(schedule.beta)
    if schedule.beta_kind == "exp_sqrt":
        return -schedule.gamma * math.sqrt(n)
    return -schedule.alpha * math.log(n)


def beta_n(schedule: models.REMAINDER_SCHEDULE, n: int) -> float:
    """β_N: β, exp(-γ√N) or N^-α."""
    if n < 1:
        raise ParameterError(f"n must be positive, got {n}")
    return math.exp(log_beta_n(schedule, n))


def confidence_level(n: int, r: float, c1: float, c2: float, a: float, m: int) -> float:
    """β as a function of the remainder r."""
    if r <= 1:
        return c1 * math.exp(-c2 * n * r ** max(m, 2))
    return c1 * math.exp(-c2 * n * r**a)


def remainder(schedule: models.REMAINDER_SCHEDULE, n: int) -> models.REMAINDER:
    """r_N solving β_N = confidence_level(N, r_N).

    Writing A = log(c1/β_N)/(c2·N), the small-remainder branch applies when
    A ≤ 1 and gives A^(1/max(m,2)); otherwise A^(1/a). This is the same test
    as N ≥ log(c1/β)/c2 for a constant β and its analogues for the other
    schedules.

    Monotone nonincreasing in N holds for c1 ≥ 1 (and N ≥ 3 under the
    polynomial schedule, where log N / N decreases).
    """
    if n < 1:
        raise ParameterError(f"n must be positive, got {n}")
    c1, c2 = schedule.c1, schedule.c2
    log_beta = log_beta_n(schedule, n)
    A = (math.log(c1) - log_beta) / (c2 * n)

    caveats = []
    degenerate = log_beta >= 0.0
    if schedule.m == 2:
        caveats.append("m = 2 is excluded by the concentration result; tabulated formula applied")
    if (c1, c2) == PLACEHOLDER_CONSTANTS:
        caveats.append("c1, c2 are placeholder constants; coverage at level beta_n is not established")

    if A <= 0:
        degenerate = True
        caveats.append("c1 <= beta_n: every remainder satisfies the confidence equation")
        r_n, exponent, regime = 0.0, 1.0 / max(schedule.m, 2), "small"
    elif A <= 1:
        exponent, regime = 1.0 / max(schedule.m, 2), "small"
        r_n = A**exponent
    else:
        exponent, regime = 1.0 / schedule.a, "large"
        r_n = A**exponent

    if degenerate:
        logger.warning(f"degenerate remainder at N={n}: beta_n={math.exp(log_beta):.3g}, interval is vacuous")

    return models.REMAINDER(
        n=n,
        r_n=r_n,
        beta_n=math.exp(log_beta),
        exponent=exponent,
        regime=regime,
        degenerate=degenerate,
        caveats=caveats,
    )


def required_sample_size(schedule: models.REMAINDER_SCHEDULE, target_r: float) -> int:
    """Smallest N with r_N ≤ target_r (doubling, then bisection)."""
    if not target_r > 0:
        raise ParameterError(f"target remainder must be positive, got {target_r}")

    def ok(n):
        return remainder(schedule, n).r_n <= target_r

    hi = 1
    while not ok(hi):
        hi *= 2
        if hi > MAX_SAMPLE_SIZE:
            raise ParameterError(f"remainder {target_r} not reached below N = {MAX_SAMPLE_SIZE}")
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def adaptive_epsilon(n: int, m: int) -> float:
    """ε_N = N^-min(1/m, 1/2)"""
    if n < 1 or m < 1:
        raise ParameterError(f"n and m must be positive, got n={n}, m={m}")
    return float(n ** (-min(1.0 / m, 0.5)))


# ===================================================================================================
# INTERVALS AND BOUNDS


def confidence_interval(
    rs: models.RS_SOLUTION,
    l_h: float,
    r_n: float,
    variant: str = "theorem1",
    level: Optional[float] = None,
) -> models.CONFIDENCE_INTERVAL:
    """Two-sided interval for the optimal loss J*.

    theorem1:   [τ/(1+ε) - L·r, τ + k_τ·r]
    corollary1: [τ/(1+ε) - L·r, τ + L·r]
    """
    if r_n < 0:
        raise ParameterError(f"r_n must be nonnegative, got {r_n}")
    lower = rs.tau / (1.0 + rs.epsilon) - l_h * r_n

    if variant == "theorem1":
        upper = rs.tau + rs.k_tau * r_n
    elif variant == "corollary1":
        if l_h < rs.k_tau - 1e-12:
            raise ConsistencyError(f"Lipschitz constant {l_h} is below the fragility {rs.k_tau}")
        upper = rs.tau + l_h * r_n
    else:
        raise ParameterError(f"unknown interval variant {variant}")

    return models.CONFIDENCE_INTERVAL(lower=lower, upper=upper, level=level, variant=variant)


def generalization_bound(epsilon: float, j_star_upper: float, l_h: float, r_n: float) -> float:
    """ε·J* + (2+ε)·L·r_N"""
    return epsilon * j_star_upper + (2.0 + epsilon) * l_h * r_n


def shifted_interval(
    rs: models.RS_SOLUTION,
    l_h: float,
    r_n: float,
    d_shift: float,
    j_tilde: Optional[float] = None,
    level: Optional[float] = None,
) -> models.CONFIDENCE_INTERVAL:
    """Interval for the optimal loss under a target at distance d_shift from P*."""
    if d_shift < 0:
        raise ParameterError(f"d_shift must be nonnegative, got {d_shift}")
    base = confidence_interval(rs, l_h, r_n, "theorem1")
    regret = None
    if j_tilde is not None:
        regret = generalization_bound(rs.epsilon, j_tilde, l_h, r_n + d_shift)
    return models.CONFIDENCE_INTERVAL(
        lower=base.lower - l_h * d_shift,
        upper=base.upper + rs.k_tau * d_shift,
        level=level,
        variant="shifted",
        regret_bound=regret,
    )


def interval_report(
    rs: models.RS_SOLUTION,
    schedule: models.REMAINDER_SCHEDULE,
    n: int,
    l_h: Optional[float] = None,
    d_shift: Optional[float] = None,
) -> models.INTERVAL_REPORT:
    """Remainder, both intervals, the regret bound and optionally the shifted interval."""
    rem = remainder(schedule, n)
    l_h = rs.k_tau if l_h is None else l_h
    level = None if rem.degenerate else 1.0 - rem.beta_n

    theorem1 = confidence_interval(rs, l_h, rem.r_n, "theorem1", level)
    corollary1 = confidence_interval(rs, l_h, rem.r_n, "corollary1", level)
    shifted = None
    if d_shift is not None:
        shifted = shifted_interval(rs, l_h, rem.r_n, d_shift, level=level)

    return models.INTERVAL_REPORT(
        rs=rs,
        remainder=rem,
        lipschitz_h=l_h,
        theorem1=theorem1,
        corollary1=corollary1,
        generalization_bound=generalization_bound(rs.epsilon, theorem1.upper, l_h, rem.r_n),
        shifted=shifted,
    )


# ===================================================================================================
# EXACT-DISTANCE CHAINS


def optimal_expected_loss(dist: models.DISCRETE_DISTRIBUTION, loss, task, opts=None):
    """(argmin, min) of the exact expected loss under a finite measure."""
    return REGULARIZATION_PATH.from_distribution(dist, loss, task, "x_only", opts).erm()


def exact_chain_report(
    rs: models.RS_SOLUTION,
    p_star: models.DISCRETE_DISTRIBUTION,
    p_hat: models.DISCRETE_DISTRIBUTION,
    loss: models.LOSS_SPEC,
    task: models.TASK_SPEC,
    cost: models.COST_SPEC,
    p_target: Optional[models.DISCRETE_DISTRIBUTION] = None,
    tol: float = 1e-5,
    opts: Optional[models.SOLVER_OPTIONS] = None,
) -> models.CHAIN_REPORT:
    """Evaluate the inequality chains with exact distances and exact optima.

        -L·d + τ/(1+ε) ≤ J* ≤ E_P*[h(x̂)] ≤ k_τ·d + τ          d = d_W(P*, P̂)
        E_P*[h(x̂)] - J* ≤ ε·J* + (2+ε)·L·d
        -L·d̃ + τ/(1+ε) ≤ J̃ ≤ E_P̃[h(x̂)] ≤ k_τ·d̃ + τ          d̃ = d_W(P̃, P̂) ≤ d_shift + d
        E_P̃[h(x̂)] - J̃ ≤ ε·J̃ + (2+ε)·L·(d_shift + d)            d_shift = d_W(P*, P̃)

    L is the largest Lipschitz constant of h(x, ·) over x̂ and the true
    minimizers, so every link is a deterministic consequence of the data.
    """
    x_hat = np.asarray(rs.x_hat)
    eps, tau, k = rs.epsilon, rs.tau, rs.k_tau

    d, _ = transport.wasserstein(p_star, p_hat, cost)
    x_star, j_star = optimal_expected_loss(p_star, loss, task, opts)
    true_loss = losses.expected_loss(x_hat, p_star, loss, task)

    candidates = [x_hat, x_star]
    if p_target is not None:
        x_tilde, j_tilde = optimal_expected_loss(p_target, loss, task, opts)
        candidates.append(x_tilde)
    L = max(lipschitz_h(x, loss, task, cost) for x in candidates)

    interval = confidence_interval(rs, L, d, "theorem1")
    lower, upper = interval.lower, interval.upper
    chain_residual = max(lower - j_star, j_star - true_loss, true_loss - upper)
    regret = true_loss - j_star
    regret_bound = generalization_bound(eps, j_star, L, d)
    regret_residual = regret - regret_bound

    report = dict(
        d_w=d,
        lipschitz_h=L,
        j_star=j_star,
        true_loss=true_loss,
        lower=lower,
        upper=upper,
        covered=interval.contains(j_star, tol),
        chain_residual=chain_residual,
        chain_holds=chain_residual <= tol,
        regret=regret,
        regret_bound=regret_bound,
        regret_residual=regret_residual,
        regret_holds=regret_residual <= tol,
    )

    if p_target is not None:
        d_shift, _ = transport.wasserstein(p_star, p_target, cost)
        d_target, _ = transport.wasserstein(p_target, p_hat, cost)
        shifted_loss = losses.expected_loss(x_hat, p_target, loss, task)
        s_lower = -L * d_target + tau / (1.0 + eps)
        s_upper = k * d_target + tau
        s_residual = max(
            s_lower - j_tilde,
            j_tilde - shifted_loss,
            shifted_loss - s_upper,
            d_target - (d_shift + d),
        )
        s_regret = shifted_loss - j_tilde
        s_regret_bound = generalization_bound(eps, j_tilde, L, d_shift + d)
        report.update(
            d_shift=d_shift,
            d_target=d_target,
            j_tilde=j_tilde,
            shifted_true_loss=shifted_loss,
            shifted_lower=s_lower,
            shifted_upper=s_upper,
            shifted_residual=s_residual,
            shifted_holds=s_residual <= tol,
            shifted_regret=s_regret,
            shifted_regret_bound=s_regret_bound,
            shifted_regret_residual=s_regret - s_regret_bound,
            shifted_regret_holds=s_regret - s_regret_bound <= tol,
        )

    return models.CHAIN_REPORT(**report)
