# ===================================================================================================
# MISCELLANEOUS - HELPER
# ===================================================================================================

import os
import logging
from typing import Sequence

import numpy as np
import psutil
from decouple import config

logger = logging.getLogger(__name__)

# Named substreams of one replication. Keep the numbers stable: they are part of
# the reproducibility contract of every saved sweep.
STREAMS = {
    "train": 0,
    "test": 1,
    "target": 2,
    "ground_truth": 3,
    "shifted_truth": 4,
}

# ===================================================================================================
# GENERAL PURPOSE UTILITY FUNCTIONS


def mkdir(filepath):

    # create parent directories if they do not exist
    directory = os.path.dirname(filepath)
    if directory and not os.path.exists(directory):
        os.makedirs(directory)


# --------------------------------------------------------------------------------------------------


def parse_vector(text: str) -> np.ndarray:
    """'2,-1' -> array([2., -1.])"""
    return np.array([float(v) for v in text.replace(" ", "").split(",") if v != ""], dtype=float)


# --------------------------------------------------------------------------------------------------


def default_jobs() -> int:
    jobs = config("RSKIT_JOBS", default=0, cast=int)
    if jobs > 0:
        return jobs
    return psutil.cpu_count(logical=True) or 1


# ===================================================================================================
# RANDOM STREAMS


def substream(seed: int, replication: int = 0, stream: str | int = "train", *extra: int) -> np.random.Generator:
    """Philox generator keyed by (seed, replication, stream, *extra).

    Distinct keys give statistically independent streams, so replications can
    run in any order or process and still reproduce bit for bit.
    """
    if seed < 0 or replication < 0:
        raise ValueError("seed and replication must be nonnegative")
    stream_id = STREAMS[stream] if isinstance(stream, str) else int(stream)
    key = [int(seed), int(replication), stream_id, *[int(e) for e in extra]]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


# ===================================================================================================
# NUMERICS


def augmented_norm(x: Sequence[float]) -> float:
    """‖(x, -1)‖₂"""
    x = np.asarray(x, dtype=float)
    return float(np.sqrt(x @ x + 1.0))


def vector_norm(x: Sequence[float], variant: str = "x_only") -> float:
    if variant == "augmented":
        return augmented_norm(x)
    return float(np.linalg.norm(np.asarray(x, dtype=float)))


def standard_error(values: np.ndarray) -> float:
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return 0.0
    return float(np.std(values, ddof=1) / np.sqrt(values.size))
