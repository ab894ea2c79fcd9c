# ===================================================================================================
# LOSSES
# ===================================================================================================
"""
Scalar convex losses L(z) and their composition into pointwise losses h(x, ξ).

    regression      h(x, (u, y)) = L(y - x·u)
    classification  h(x, (u, y)) = L(y · x·u),  y in {-1, +1}

Every function accepts scalars or numpy arrays for z. Subgradients at kinks
return the midpoint of the subdifferential interval.
"""

import logging
import math

import cvxpy as cp
import numpy as np
from scipy.special import expit

from rskit import models
from rskit.errors import ParameterError, ShapeError

logger = logging.getLogger(__name__)

UNBOUNDED = math.inf

# ===================================================================================================
# VALUES


def loss_value(loss: models.LOSS_SPEC, z):
    """L(z) per the classical loss table. Returns a float for scalar z."""
    z_arr = np.asarray(z, dtype=float)
    kind, delta = loss.kind, loss.delta

    if kind == "hinge":
        out = np.maximum(0.0, 1.0 - z_arr)
    elif kind == "smooth_hinge":
        out = np.where(
            z_arr <= 0.0,
            0.5 - z_arr,
            np.where(z_arr < 1.0, 0.5 * (1.0 - z_arr) ** 2, 0.0),
        )
    elif kind == "logistic":
        out = np.logaddexp(0.0, -z_arr)
    elif kind == "l1":
        out = np.abs(z_arr)
    elif kind == "squared":
        out = z_arr**2
    elif kind == "huber":
        a = np.abs(z_arr)
        out = np.where(a <= delta, 0.5 * z_arr**2, delta * (a - 0.5 * delta))
    elif kind == "insensitive":
        out = np.maximum(0.0, np.abs(z_arr) - delta)
    elif kind == "pinball":
        out = np.maximum(-delta * z_arr, (1.0 - delta) * z_arr)
    else:
        raise ParameterError(f"Unknown loss kind: {kind}")

    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------------------------------


def loss_subgradient(loss: models.LOSS_SPEC, z):
    """An element of ∂L(z); the midpoint of the interval at kinks."""
    z_arr = np.asarray(z, dtype=float)
    kind, delta = loss.kind, loss.delta

    if kind == "hinge":
        out = np.where(z_arr < 1.0, -1.0, np.where(z_arr > 1.0, 0.0, -0.5))
    elif kind == "smooth_hinge":
        out = np.where(z_arr <= 0.0, -1.0, np.where(z_arr < 1.0, z_arr - 1.0, 0.0))
    elif kind == "logistic":
        out = -expit(-z_arr)
    elif kind == "l1":
        out = np.sign(z_arr)
    elif kind == "squared":
        out = 2.0 * z_arr
    elif kind == "huber":
        out = np.clip(z_arr, -delta, delta)
    elif kind == "insensitive":
        a = np.abs(z_arr)
        out = np.where(a > delta, np.sign(z_arr), np.where(a < delta, 0.0, 0.5 * np.sign(z_arr)))
    elif kind == "pinball":
        out = np.where(z_arr < 0.0, -delta, np.where(z_arr > 0.0, 1.0 - delta, 0.5 - delta))
    else:
        raise ParameterError(f"Unknown loss kind: {kind}")

    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------------------------------


def lipschitz_constant(loss: models.LOSS_SPEC) -> float:
    """Smallest global Lipschitz constant of L; UNBOUNDED for squared without a bound."""
    kind = loss.kind
    if kind in ("hinge", "smooth_hinge", "logistic", "l1", "insensitive"):
        return 1.0
    if kind == "huber":
        return float(loss.delta)
    if kind == "pinball":
        return float(max(loss.delta, 1.0 - loss.delta))
    if kind == "squared":
        return 2.0 * loss.bound if loss.bound is not None else UNBOUNDED
    raise ParameterError(f"Unknown loss kind: {kind}")


def require_lipschitz(loss: models.LOSS_SPEC) -> float:
    lip = lipschitz_constant(loss)
    if not math.isfinite(lip):
        raise ParameterError(
            "squared loss is not Lipschitz on an unbounded domain; declare LOSS_SPEC.bound"
        )
    return lip


# ===================================================================================================
# COMPOSITION


def check_labels(task: models.TASK_SPEC, labels: np.ndarray):
    if task.task == "classification" and not np.all(np.isin(labels, (-1.0, 1.0))):
        raise ParameterError("classification labels must be -1 or +1")


def margins(x, features, labels, task: models.TASK_SPEC):
    """z for every sample: y - x·u (regression) or y·(x·u) (classification)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    features = np.atleast_2d(np.asarray(features, dtype=float))
    labels = np.asarray(labels, dtype=float).reshape(-1)
    if features.shape[1] != x.shape[0]:
        raise ShapeError(f"x has dimension {x.shape[0]} but features have {features.shape[1]} columns")
    scores = features @ x
    if task.task == "classification":
        return labels * scores
    return labels - scores


def pointwise_loss(loss: models.LOSS_SPEC, task: models.TASK_SPEC, x, u, y) -> float:
    """h(x, (u, y))."""
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.shape != x.shape:
        raise ShapeError(f"dim(u) = {u.shape[0]} but dim(x) = {x.shape[0]}")
    z = margins(x, u.reshape(1, -1), [y], task)[0]
    return loss_value(loss, z)


def pointwise_losses(loss, task, x, points) -> np.ndarray:
    """h(x, ξ_j) for every row ξ_j = (u_j, y_j) of `points`."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    return np.asarray(loss_value(loss, margins(x, points[:, :-1], points[:, -1], task)), dtype=float).reshape(-1)


def empirical_loss(x, data: models.DATASET, loss, task, weights=None) -> float:
    values = np.asarray(loss_value(loss, margins(x, data.features, data.labels, task)), dtype=float).reshape(-1)
    if weights is None:
        return float(np.mean(values))
    return float(np.asarray(weights, dtype=float) @ values)


def expected_loss(x, dist: models.DISCRETE_DISTRIBUTION, loss, task) -> float:
    """E_P[h(x, ξ)] for a finitely supported P (exact finite sum)."""
    return float(dist.weights @ pointwise_losses(loss, task, x, dist.support))


# ===================================================================================================
# CVXPY


def loss_expression(loss: models.LOSS_SPEC, z: cp.Expression) -> cp.Expression:
    """Elementwise L(z) as a DCP-compliant cvxpy expression."""
    kind, delta = loss.kind, loss.delta

    if kind == "hinge":
        return cp.pos(1 - z)
    if kind == "smooth_hinge":
        # ½(1-z)² on (0,1), ½-z below 0: half a unit huber of the hinge
        return 0.5 * cp.huber(cp.pos(1 - z), 1.0)
    if kind == "logistic":
        return cp.logistic(-z)
    if kind == "l1":
        return cp.abs(z)
    if kind == "squared":
        return cp.square(z)
    if kind == "huber":
        return 0.5 * cp.huber(z, delta)
    if kind == "insensitive":
        return cp.pos(cp.abs(z) - delta)
    if kind == "pinball":
        return cp.maximum(-delta * z, (1 - delta) * z)
    raise ParameterError(f"Unknown loss kind: {kind}")
