# ===================================================================================================
# ROBUST CORE
# ===================================================================================================
"""
Evaluation of the RS reformulation on finite candidate supports.

    sup_P { E_P[h(x, ·)] - k·d_W(P, P̂) } = Σ_i w_i · max_z [ h(x, z) - k·c(ξ_i, z) ]

The left side is solved as an LP over couplings (worst_case_lp), the right
side by enumeration (reformulated_objective). For the linear model the inner
supremum over a continuum is also available in closed form.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from rskit import models
from rskit.core import losses
from rskit.core.transport import cost_matrix
from rskit.errors import ConvergenceError, InputValidationError, ParameterError
from rskit.modules.misc import vector_norm

logger = logging.getLogger(__name__)

FRAGILITY_TOL = 1e-8

# ===================================================================================================
# CONTEXT


@dataclass(frozen=True, eq=False)
class ROBUST_EVAL_CONTEXT:
    """Finite restriction Ξ of the observation space plus the problem data."""

    candidate_support: np.ndarray
    cost: models.COST_SPEC = models.COST_SPEC()
    loss: models.LOSS_SPEC = models.LOSS_SPEC()
    task: models.TASK_SPEC = models.TASK_SPEC()

    def __post_init__(self):
        support = np.atleast_2d(np.array(self.candidate_support, dtype=float))
        if support.shape[0] == 0:
            raise InputValidationError("candidate support must be nonempty")
        support.setflags(write=False)
        object.__setattr__(self, "candidate_support", support)

    @classmethod
    def around(cls, p_hat: models.DISCRETE_DISTRIBUTION, extra_points=None, **kwargs) -> "ROBUST_EVAL_CONTEXT":
        """Context whose support is the support of p_hat plus `extra_points`."""
        points = p_hat.support
        if extra_points is not None and len(extra_points):
            points = np.vstack([points, np.atleast_2d(np.asarray(extra_points, dtype=float))])
        return cls(points, **kwargs)

    def check_covers(self, p_hat: models.DISCRETE_DISTRIBUTION):
        cand = self.candidate_support
        if p_hat.dim != cand.shape[1]:
            raise InputValidationError(f"support dimension {p_hat.dim} != candidate dimension {cand.shape[1]}")
        for point in p_hat.support:
            if not np.any(np.all(cand == point, axis=1)):
                raise InputValidationError("candidate support must include the support of the empirical distribution")


# ===================================================================================================
# LIPSCHITZ CONSTANT OF h IN ξ


def lipschitz_h(x, loss: models.LOSS_SPEC, task: models.TASK_SPEC, cost: models.COST_SPEC) -> float:
    """Lipschitz constant of ξ ↦ h(x, ξ) under the ground cost.

    feature_only charges features only, so L·‖x‖; full and augmented costs
    also move the label, so L·‖(x, -1)‖ for regression.
    """
    lip = losses.require_lipschitz(loss)
    if cost.variant == "feature_only":
        return lip * vector_norm(x, "x_only")
    if task.task == "classification":
        raise ParameterError("closed form is unavailable for classification under the full cost; use oracle mode")
    return lip * vector_norm(x, "augmented")


def uniform_lipschitz(radius: float, loss: models.LOSS_SPEC, task: models.TASK_SPEC, cost: models.COST_SPEC) -> float:
    """Lipschitz constant of h(x, ·) valid for every decision with ‖x‖ ≤ radius."""
    if not radius >= 0:
        raise ParameterError(f"decision radius must be nonnegative, got {radius}")
    # lipschitz_h grows with ‖x‖, so the sup over the ball sits on its boundary
    return lipschitz_h(np.array([float(radius)]), loss, task, cost)


# ===================================================================================================
# REFORMULATION


def _payoff(x, k: float, p_hat: models.DISCRETE_DISTRIBUTION, ctx: ROBUST_EVAL_CONTEXT) -> np.ndarray:
    """payoff[i, j] = h(x, z_j) - k·c(ξ_i, z_j), -inf where the cost is infinite."""
    h = losses.pointwise_losses(ctx.loss, ctx.task, x, ctx.candidate_support)
    if k == 0:
        return np.broadcast_to(h, (p_hat.size, h.size)).copy()
    C = cost_matrix(ctx.cost, p_hat.support, ctx.candidate_support)
    payoff = np.full(C.shape, -math.inf)
    finite = np.isfinite(C)
    payoff[finite] = (h[None, :] - k * C)[finite]
    return payoff


def reformulated_objective(x, k: float, p_hat: models.DISCRETE_DISTRIBUTION, ctx: ROBUST_EVAL_CONTEXT) -> float:
    """Σ_i w_i · max_{z ∈ Ξ} [h(x,z) - k·c(ξ_i,z)]."""
    if not k >= 0:
        raise ParameterError(f"k must be nonnegative, got {k}")
    ctx.check_covers(p_hat)
    return float(p_hat.weights @ _payoff(x, k, p_hat, ctx).max(axis=1))


def closed_form_objective(x, k: float, p_hat: models.DISCRETE_DISTRIBUTION, ctx: ROBUST_EVAL_CONTEXT) -> float:
    """Continuum supremum for the linear model: E_P̂[h] if k ≥ L_h(x), +inf otherwise."""
    if not k >= 0:
        raise ParameterError(f"k must be nonnegative, got {k}")
    if k >= lipschitz_h(x, ctx.loss, ctx.task, ctx.cost):
        return losses.expected_loss(x, p_hat, ctx.loss, ctx.task)
    return math.inf


# --------------------------------------------------------------------------------------------------


def worst_case_lp(x, k: float, p_hat: models.DISCRETE_DISTRIBUTION, ctx: ROBUST_EVAL_CONTEXT):
    """max over P on Ξ of E_P[h(x,·)] - k·d_W(P, P̂) as an LP in the coupling.

    Returns:
        (value, argmax) with argmax the column marginal of an optimal coupling.
    """
    if not k >= 0:
        raise ParameterError(f"k must be nonnegative, got {k}")
    ctx.check_covers(p_hat)

    payoff = _payoff(x, k, p_hat, ctx)
    rows, cols = np.nonzero(np.isfinite(payoff))
    n_vars = rows.size

    # Σ_j Π_ij = w_i
    A_eq = sparse.csr_matrix((np.ones(n_vars), (rows, np.arange(n_vars))), shape=(p_hat.size, n_vars))
    res = linprog(
        -payoff[rows, cols],
        A_eq=A_eq,
        b_eq=p_hat.weights,
        bounds=(0, None),
        method="highs",
    )
    if res.status != 0:
        raise ConvergenceError(f"worst-case LP failed: {res.message}")

    coupling = np.zeros(payoff.shape)
    coupling[rows, cols] = np.maximum(res.x, 0.0)
    q = coupling.sum(axis=0)
    keep = q > 0
    argmax = models.DISCRETE_DISTRIBUTION(ctx.candidate_support[keep], q[keep] / q[keep].sum())
    return float(-res.fun), argmax


# ===================================================================================================
# FRAGILITY


def fragility(x, p_hat: models.DISCRETE_DISTRIBUTION, tau: float, ctx: ROBUST_EVAL_CONTEXT, mode: str = "oracle") -> float:
    """k_τ(x) = min{k ≥ 0 : objective(x, k) ≤ τ}; +inf when no k qualifies."""
    if mode == "closed_form":
        if losses.expected_loss(x, p_hat, ctx.loss, ctx.task) <= tau:
            return lipschitz_h(x, ctx.loss, ctx.task, ctx.cost)
        return math.inf

    lip = losses.require_lipschitz(ctx.loss)
    lo, hi = 0.0, lip * (vector_norm(x) + 1.0) + 1.0
    if reformulated_objective(x, hi, p_hat, ctx) > tau:
        return math.inf
    if reformulated_objective(x, lo, p_hat, ctx) <= tau:
        return 0.0
    while hi - lo > FRAGILITY_TOL:
        mid = 0.5 * (lo + hi)
        if reformulated_objective(x, mid, p_hat, ctx) <= tau:
            hi = mid
        else:
            lo = mid
    return hi


def fragility_result(x, p_hat, tau, ctx, mode="oracle") -> models.FRAGILITY_RESULT:
    return models.FRAGILITY_RESULT(k_tau=fragility(x, p_hat, tau, ctx, mode), tau=tau, mode=mode)
