# ===================================================================================================
# TRANSPORT
# ===================================================================================================
"""
Ground costs and exact type-1 Wasserstein distances between finite measures.

Points are joint observations ξ = (u, y) with the label in the last
coordinate. Infinite costs are kept as float('inf') throughout.
"""

import logging
import math

import numpy as np
import ot
from scipy.spatial.distance import cdist
from scipy.stats import wasserstein_distance

from rskit import models
from rskit.errors import ConvergenceError, ShapeError
from rskit.modules import metrics

logger = logging.getLogger(__name__)

LABEL_MASS_TOL = 1e-12

# ===================================================================================================
# GROUND COST


def cost(spec: models.COST_SPEC, xi1, xi2) -> float:
    xi1 = np.asarray(xi1, dtype=float).reshape(-1)
    xi2 = np.asarray(xi2, dtype=float).reshape(-1)
    if xi1.shape != xi2.shape:
        raise ShapeError(f"points have dimensions {xi1.shape[0]} and {xi2.shape[0]}")

    if spec.variant == "feature_only":
        if xi1[-1] != xi2[-1]:
            return math.inf
        return float(np.linalg.norm(xi1[:-1] - xi2[:-1]))
    return float(np.linalg.norm(xi1 - xi2))


def cost_matrix(spec: models.COST_SPEC, A, B) -> np.ndarray:
    """C[i, j] = cost(A[i], B[j])."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ShapeError(f"points have dimensions {A.shape[1]} and {B.shape[1]}")

    if spec.variant == "feature_only":
        C = cdist(A[:, :-1], B[:, :-1]) if A.shape[1] > 1 else np.zeros((A.shape[0], B.shape[0]))
        C[A[:, -1][:, None] != B[:, -1][None, :]] = math.inf
        return C
    return cdist(A, B)


# ===================================================================================================
# EXACT TRANSPORT


def _emd(a: np.ndarray, b: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Network simplex on a finite cost matrix."""
    G, log = ot.emd(
        np.ascontiguousarray(a, dtype=np.float64),
        np.ascontiguousarray(b, dtype=np.float64),
        np.ascontiguousarray(M, dtype=np.float64),
        numItermax=1_000_000,
        log=True,
    )
    if log.get("warning"):
        raise ConvergenceError(f"network simplex failed: {log['warning']}")
    return G


def _label_groups(dist: models.DISCRETE_DISTRIBUTION) -> dict:
    groups = {}
    for i, label in enumerate(dist.support[:, -1]):
        groups.setdefault(float(label), []).append(i)
    return {label: np.array(idx) for label, idx in groups.items()}


def _feature_only_plan(p, q, M):
    gp, gq = _label_groups(p), _label_groups(q)
    coupling = np.zeros((p.size, q.size))

    if set(gp) != set(gq):
        return None
    for label, rows in gp.items():
        cols = gq[label]
        mass_p, mass_q = p.weights[rows].sum(), q.weights[cols].sum()
        if abs(mass_p - mass_q) > LABEL_MASS_TOL:
            return None
        G = _emd(p.weights[rows] / mass_p, q.weights[cols] / mass_q, M[np.ix_(rows, cols)])
        coupling[np.ix_(rows, cols)] = 0.5 * (mass_p + mass_q) * G
    return coupling


def wasserstein(p: models.DISCRETE_DISTRIBUTION, q: models.DISCRETE_DISTRIBUTION, spec: models.COST_SPEC):
    """Type-1 Wasserstein distance and an optimal coupling.

    Returns:
        (distance, TRANSPORT_PLAN). The distance is inf when no finite-cost
        coupling exists (feature_only cost with mismatched label masses); the
        plan then carries a zero coupling and meta["feasible"] = False.
    """
    if p.dim != q.dim:
        raise ShapeError(f"supports have dimensions {p.dim} and {q.dim}")

    metrics.TRANSPORT_SOLVES_TOTAL.labels(cost=spec.variant).inc()
    M = cost_matrix(spec, p.support, q.support)

    if spec.variant == "feature_only":
        coupling = _feature_only_plan(p, q, M)
        if coupling is None:
            logger.debug("label-conditional masses differ, distance is infinite")
            plan = models.TRANSPORT_PLAN(np.zeros_like(M), math.inf, {"feasible": False, "cost": spec.variant})
            return math.inf, plan
    else:
        coupling = _emd(p.weights, q.weights, M)

    finite = coupling > 0
    distance = float(np.sum(coupling[finite] * M[finite]))
    plan = models.TRANSPORT_PLAN(coupling, distance, {"feasible": True, "cost": spec.variant})
    return distance, plan


def wasserstein_1d(p: models.DISCRETE_DISTRIBUTION, q: models.DISCRETE_DISTRIBUTION) -> float:
    """Quantile-coupling value ∫|F_p⁻¹ − F_q⁻¹| for one-dimensional supports."""
    if p.dim != 1 or q.dim != 1:
        raise ShapeError(f"wasserstein_1d needs one-dimensional supports, got {p.dim} and {q.dim}")
    return float(wasserstein_distance(p.support[:, 0], q.support[:, 0], p.weights, q.weights))


def wasserstein_result(p, q, spec: models.COST_SPEC, with_coupling: bool = False) -> models.WASSERSTEIN_RESULT:
    distance, plan = wasserstein(p, q, spec)
    coupling = plan.coupling.tolist() if with_coupling else None
    return models.WASSERSTEIN_RESULT(distance=distance, cost=spec.variant, coupling=coupling)
