from dataclasses import dataclass, field

import numpy as np

from rskit.errors import InputValidationError, ShapeError

# =================================================================================
# DATASET


def _frozen(array) -> np.ndarray:
    out = np.array(array, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class DATASET:
    """N feature/label samples: features is N×m_u, labels has length N."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        features = _frozen(self.features)
        labels = _frozen(self.labels).reshape(-1)
        if features.ndim == 1:
            features = _frozen(features.reshape(-1, 1))
        if features.ndim != 2:
            raise ShapeError(f"features must be a matrix, got shape {features.shape}")
        if features.shape[0] != labels.shape[0]:
            raise ShapeError(f"{features.shape[0]} feature rows but {labels.shape[0]} labels")
        if features.shape[0] < 1:
            raise InputValidationError("dataset needs at least one sample")
        if not (np.all(np.isfinite(features)) and np.all(np.isfinite(labels))):
            raise InputValidationError("dataset entries must be finite")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def m_u(self) -> int:
        return self.features.shape[1]

    @property
    def joint(self) -> np.ndarray:
        """Observations ξ = (u, y) as an N×(m_u+1) matrix."""
        return np.column_stack([self.features, self.labels])


# =================================================================================
# DISCRETE DISTRIBUTION


@dataclass(frozen=True, eq=False)
class DISCRETE_DISTRIBUTION:
    """Finitely supported probability measure.

    Support points are rows of `support`; bitwise-identical rows are merged with
    summed weight, and weights are renormalized to sum to one.
    """

    support: np.ndarray
    weights: np.ndarray

    NORMALIZATION_TOL = 1e-9

    def __post_init__(self):
        support = np.array(self.support, dtype=float)
        weights = np.array(self.weights, dtype=float).reshape(-1)
        if support.ndim == 1:
            support = support.reshape(-1, 1)
        if support.ndim != 2 or support.shape[0] != weights.shape[0]:
            raise ShapeError(f"support shape {support.shape} does not match {weights.shape[0]} weights")
        if support.shape[0] == 0:
            raise InputValidationError("distribution needs at least one atom")
        if not np.all(np.isfinite(support)):
            raise InputValidationError("support points must be finite")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise InputValidationError("weights must be finite and nonnegative")
        total = weights.sum()
        if abs(total - 1.0) > self.NORMALIZATION_TOL:
            raise InputValidationError(f"weights sum to {total!r}, expected 1")

        support, weights = merge_duplicates(support, weights)
        weights = weights / weights.sum()

        support.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "weights", weights)

    @property
    def size(self) -> int:
        return self.support.shape[0]

    @property
    def dim(self) -> int:
        return self.support.shape[1]

    @classmethod
    def uniform(cls, points) -> "DISCRETE_DISTRIBUTION":
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points.reshape(-1, 1)
        return cls(points, np.full(points.shape[0], 1.0 / points.shape[0]))

    @classmethod
    def dirac(cls, point) -> "DISCRETE_DISTRIBUTION":
        return cls(np.atleast_2d(np.asarray(point, dtype=float)), np.ones(1))

    def mass_of(self, point) -> float:
        hit = np.all(self.support == np.asarray(point, dtype=float), axis=1)
        return float(self.weights[hit].sum())


def merge_duplicates(support: np.ndarray, weights: np.ndarray):
    """Merge rows that are bitwise equal, summing their weights (first-seen order)."""
    rows = np.ascontiguousarray(support)
    keys = rows.view(np.dtype((np.void, rows.dtype.itemsize * rows.shape[1]))).reshape(-1)
    _, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
    if first.size == rows.shape[0]:
        return rows.copy(), weights.copy()

    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    merged = np.bincount(rank[inverse.reshape(-1)], weights=weights, minlength=order.size)
    return rows[first[order]].copy(), merged


# =================================================================================
# TRANSPORT PLAN


@dataclass(frozen=True, eq=False)
class TRANSPORT_PLAN:
    """Coupling between the supports of P (rows) and Q (columns)."""

    coupling: np.ndarray
    objective: float
    meta: dict = field(default_factory=dict)

    def marginals(self):
        return self.coupling.sum(axis=1), self.coupling.sum(axis=0)
