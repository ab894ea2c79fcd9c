# ===================================================================================================
# METRICS - PROMETHEUS
# ===================================================================================================

import logging

from prometheus_client import Counter, Histogram, start_http_server

logger = logging.getLogger(__name__)

SOLVES_TOTAL = Counter("rskit_solves_total", "Regularized solves", ["backend", "outcome"])
SOLVE_LATENCY_SECONDS = Histogram("rskit_solve_latency_seconds", "Regularized solve latency", ["backend"])
BISECTION_STEPS = Histogram(
    "rskit_bisection_steps",
    "Bisection steps per RS solve",
    buckets=(1, 2, 4, 8, 16, 24, 32, 48, 64, 128, 256),
)
TRANSPORT_SOLVES_TOTAL = Counter("rskit_transport_solves_total", "Exact transport solves", ["cost"])
REPLICATIONS_TOTAL = Counter("rskit_replications_total", "Monte Carlo replications", ["scenario", "outcome"])


def serve_metrics(port: int) -> bool:
    if not port:
        return False
    try:
        start_http_server(port)
        logger.info(f"Metrics exposed on port {port}")
        return True
    except OSError as e:
        logger.error(f"Failed to start metrics server on port {port}: {e}")
        return False
