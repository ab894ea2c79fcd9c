"""Test fixtures."""
import os
from datetime import timedelta

import numpy as np
import pytest
from hypothesis import Verbosity, settings

from rskit import models
from rskit.core import distributions

# register test flags for hypothesis; allows e.g. extended deadlines on CI
settings.register_profile("ci", deadline=timedelta(milliseconds=2000), max_examples=200)
settings.register_profile("dev", max_examples=10)
settings.register_profile("debug", max_examples=10, verbosity=Verbosity.verbose)
settings.register_profile("default", deadline=None)
settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(autouse=True)
def log_dir(tmp_path, monkeypatch):
    """Keep CLI log files out of the working tree."""
    monkeypatch.setenv("DIR_LOGS", str(tmp_path / "logs"))
    monkeypatch.delenv("RSKIT_SEED", raising=False)
    monkeypatch.delenv("RSKIT_METRICS_PORT", raising=False)
    return tmp_path / "logs"


@pytest.fixture
def l1():
    return models.LOSS_SPEC(kind="l1")


@pytest.fixture
def regression():
    return models.TASK_SPEC(task="regression")


@pytest.fixture
def classification():
    return models.TASK_SPEC(task="classification")


@pytest.fixture
def synthetic():
    """Two-dimensional process: x* = [2, -1], u ~ N(0.5, 0.5 I), noise variance 0.1."""
    return models.SYNTHETIC_CONFIG()


@pytest.fixture
def small_data(synthetic):
    return distributions.generate_synthetic(synthetic, 20, seed=11)


@pytest.fixture
def medium_data(synthetic):
    return distributions.generate_synthetic(synthetic, 100, seed=3)


@pytest.fixture
def labelled_data():
    """Linearly non-separable binary labels for classification losses."""
    rng = np.random.default_rng(5)
    features = rng.normal(size=(40, 2))
    labels = np.where(features @ np.array([1.0, -0.5]) + 0.6 * rng.normal(size=40) > 0, 1.0, -1.0)
    return models.DATASET(features, labels)
