# ===================================================================================================
# DISTRIBUTIONS
# ===================================================================================================
"""
Synthetic data-generating process, distribution shift and finite measures.

Features are drawn as u ~ N(mean·1, var·I) and labels as y = u·x + e with
e ~ N(0, noise). A nonzero `degree` replaces x by its shifted counterpart.
"""

import logging

import numpy as np

from rskit import models
from rskit.errors import InputValidationError, UnsupportedShiftError
from rskit.modules.misc import substream

logger = logging.getLogger(__name__)

SHIFT_DIRECTION = np.array([-0.05, 0.025])

# ===================================================================================================
# RANDOM GENERATORS


def as_generator(seed, stream: str = "train") -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return substream(int(seed), 0, stream)


# ===================================================================================================
# SHIFT


def shift_parameter(x_star, degree: float) -> np.ndarray:
    """x̃ = x* + degree·[-0.05, 0.025]; only defined for two-dimensional x*."""
    x_star = np.asarray(x_star, dtype=float).reshape(-1)
    if x_star.shape[0] != 2:
        raise UnsupportedShiftError(f"shift rule is defined for 2-D parameters, got dimension {x_star.shape[0]}")
    if degree < 0:
        raise UnsupportedShiftError(f"degree must be nonnegative, got {degree}")
    return x_star + degree * SHIFT_DIRECTION


def model_parameter(config: models.SYNTHETIC_CONFIG) -> np.ndarray:
    """The parameter labels are generated with: x* itself, or its shift when degree > 0."""
    x_star = np.asarray(config.x_star, dtype=float)
    if config.degree == 0:
        return x_star
    return shift_parameter(x_star, config.degree)


def shifted_config(config: models.SYNTHETIC_CONFIG, degree: float) -> models.SYNTHETIC_CONFIG:
    shifted = config.model_copy(update={"degree": float(degree)})
    model_parameter(shifted)
    return shifted


def second_moment(config: models.SYNTHETIC_CONFIG) -> np.ndarray:
    """E[uuᵀ] = var·I + mean²·11ᵀ"""
    m = config.m_u
    return config.feature_var * np.eye(m) + config.feature_mean**2 * np.ones((m, m))


# ===================================================================================================
# SAMPLING


def generate_synthetic(config: models.SYNTHETIC_CONFIG, n: int, seed) -> models.DATASET:
    """Draw n samples from the synthetic process.

    Args:
        config: data-generating process.
        n: number of samples (≥ 1).
        seed: integer seed (train substream of replication 0) or a numpy Generator.

    Returns:
        DATASET with an n×m_u feature matrix.
    """
    if n < 1:
        raise InputValidationError(f"n must be positive, got {n}")
    rng = as_generator(seed)
    x_param = model_parameter(config)

    features = rng.normal(config.feature_mean, np.sqrt(config.feature_var), size=(n, config.m_u))
    noise = rng.normal(0.0, np.sqrt(config.noise_std_sq), size=n)
    labels = features @ x_param + noise
    return models.DATASET(features, labels)


# --------------------------------------------------------------------------------------------------


def empirical_distribution(data: models.DATASET) -> models.DISCRETE_DISTRIBUTION:
    """P̂_N: uniform weights on the joint points, duplicates merged."""
    return models.DISCRETE_DISTRIBUTION.uniform(data.joint)


def dataset_of(dist: models.DISCRETE_DISTRIBUTION) -> models.DATASET:
    """Support points as a dataset (weights dropped)."""
    return models.DATASET(dist.support[:, :-1], dist.support[:, -1])


def discrete_ground_truth(config: models.SYNTHETIC_CONFIG, support_size: int, seed) -> models.DISCRETE_DISTRIBUTION:
    """Finite-support stand-in for P*: support_size draws, uniform weights."""
    if support_size < 2:
        raise InputValidationError(f"support_size must be at least 2, got {support_size}")
    rng = as_generator(seed, "ground_truth")
    data = generate_synthetic(config, support_size, rng)
    return empirical_distribution(data)


def sample_from(dist: models.DISCRETE_DISTRIBUTION, n: int, seed) -> models.DATASET:
    """n i.i.d. draws from a finite measure."""
    if n < 1:
        raise InputValidationError(f"n must be positive, got {n}")
    rng = as_generator(seed)
    idx = rng.choice(dist.size, size=n, replace=True, p=dist.weights)
    points = dist.support[idx]
    return models.DATASET(points[:, :-1], points[:, -1])
