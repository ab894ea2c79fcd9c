# ===================================================================================================
# EXPERIMENTS
# ===================================================================================================
"""
Monte Carlo harness for RS / DRO / ERM comparisons.

Every replication draws its data from Philox substreams keyed by
(seed, replication, stream, grid value), and every method in a replication
sees the same training and test sets. Results are aggregated by replication
index, so the output does not depend on the number of worker processes.
"""

import logging
import math
import multiprocessing
from typing import Callable, Dict, List, Optional

import numpy as np

from rskit import models
from rskit.core import distributions
from rskit.core.inference import exact_chain_report
from rskit.core.solvers import REGULARIZATION_PATH
from rskit.errors import ParameterError, RskitError
from rskit.modules import metrics
from rskit.modules.misc import default_jobs, standard_error, substream

logger = logging.getLogger(__name__)

MONOTONE_TOL = 1e-6
CHAIN_TOL = 1e-5
SENSITIVITY_BAND = 0.15

# ===================================================================================================
# DEFAULTS


def _grid(step: float, count: int) -> List[float]:
    return [round(step * i, 10) for i in range(count)]


SCENARIO_DEFAULTS: Dict[str, dict] = {
    "sample_size": {
        "synthetic": {"m_u": 10, "x_star": [2.0, -1.0] * 5},
        "n_grid": [30, 50, 100, 200, 400, 800],
        "epsilon_grid": [0.05, 0.1, 0.2, 0.3],
    },
    "shift": {
        "degree_grid": _grid(1.0, 11),
        "epsilon_grid": [0.05, 0.1, 0.2, 0.3],
    },
    "correspondence": {
        "epsilon_grid": _grid(0.05, 21),
        "dims": [2, 10],
    },
    "sensitivity_dro": {
        "radius_grid": _grid(0.02, 26),
        "target_degree": 4.0,
    },
    "sensitivity_rs": {
        "epsilon_grid": _grid(0.025, 25),
        "target_degree": 4.0,
    },
    "coverage": {
        "n_grid": [20, 50],
        "epsilon_grid": [0.1, 0.3],
        "support_size": 20,
        "shift_degree": 4.0,
    },
}


def default_experiment_config(scenario: str, **overrides) -> models.EXPERIMENT_CONFIG:
    """Scenario defaults with top-level overrides (nested sections are replaced whole)."""
    if scenario not in SCENARIO_DEFAULTS:
        raise ParameterError(f"unknown scenario {scenario}")
    values = {"scenario": scenario, **SCENARIO_DEFAULTS[scenario], **overrides}
    return models.EXPERIMENT_CONFIG.model_validate(values)


# ===================================================================================================
# EVALUATION


def evaluate_mse(x, target, n_test: int = 10000, seed=0) -> float:
    """Mean (y - u·x)² under the target.

    Args:
        x: decision vector.
        target: SYNTHETIC_CONFIG (sampled with n_test points), DISCRETE_DISTRIBUTION
            (exact weighted sum) or an already drawn DATASET.
        n_test: test-set size for synthetic targets.
        seed: integer seed or numpy Generator for synthetic targets.
    """
    x = np.asarray(x, dtype=float)
    if isinstance(target, models.DISCRETE_DISTRIBUTION):
        residual = target.support[:, -1] - target.support[:, :-1] @ x
        return float(target.weights @ residual**2)
    if isinstance(target, models.SYNTHETIC_CONFIG):
        target = distributions.generate_synthetic(target, n_test, distributions.as_generator(seed, "test"))
    residual = target.labels - target.features @ x
    return float(np.mean(residual**2))


def mse_closed_form(x, config: models.SYNTHETIC_CONFIG) -> float:
    """noise + Δᵀ·E[uuᵀ]·Δ with Δ = x - x_param."""
    delta = np.asarray(x, dtype=float) - distributions.model_parameter(config)
    return float(config.noise_std_sq + delta @ distributions.second_moment(config) @ delta)


def synthetic_for_dim(config: models.SYNTHETIC_CONFIG, m_u: int) -> models.SYNTHETIC_CONFIG:
    """Same process in m_u dimensions, x* = [2, -1, 2, -1, ...]."""
    if m_u == config.m_u:
        return config
    x_star = np.resize(np.asarray([2.0, -1.0]), m_u).tolist()
    return config.model_copy(update={"m_u": m_u, "x_star": x_star})


# ===================================================================================================
# REPLICATION RECORDS


class REPLICATION:
    """Metric records of one replication; solver failures become diagnostics."""

    def __init__(self, cfg: models.EXPERIMENT_CONFIG, index: int):
        self.cfg = cfg
        self.index = index
        self.records: List[tuple] = []
        self.diagnostics: List[dict] = []

    def attempt(self, grid_value: float, method: str, fn: Callable):
        try:
            return fn()
        except RskitError as e:
            self.fail(grid_value, method, e)
            return None

    def fail(self, grid_value, method, error):
        self.records.append((float(grid_value), method, None))
        self.diagnostics.append(
            {
                "seed": self.cfg.seed,
                "replication": self.index,
                "grid_value": float(grid_value),
                "method": method,
                "error": type(error).__name__,
                "message": str(error),
                "residual": getattr(error, "residual", None),
            }
        )

    def record(self, grid_value: float, method: str, value: float):
        self.records.append((float(grid_value), method, float(value)))

    def note(self, **details):
        self.diagnostics.append({"seed": self.cfg.seed, "replication": self.index, **details})


def _rs_tag(eps: float) -> str:
    return f"RS eps={eps:g}"


def _path(cfg, data, norm_variant=None) -> REGULARIZATION_PATH:
    return REGULARIZATION_PATH(data, cfg.loss, cfg.task, norm_variant or cfg.norm_variant, cfg.solver)


def _compare_methods(rep: REPLICATION, path: REGULARIZATION_PATH, grid_value: float, tests: Dict[float, models.DATASET]):
    """ERM and RS(ε) trained once on `path`, scored on every test set in `tests`."""
    cfg = rep.cfg
    fitted = []

    erm = rep.attempt(grid_value, "ERM", lambda: path.erm()[0])
    fitted.append(("ERM", erm))

    lower = 0.0
    for eps in cfg.epsilon_grid:
        sol = rep.attempt(grid_value, _rs_tag(eps), lambda: path.rs(eps, lower))
        if sol is not None:
            if not sol.diagnostics.zero_solution:
                lower = path.x_only_multiplier(sol)
            fitted.append((_rs_tag(eps), np.asarray(sol.x_hat)))
        else:
            fitted.append((_rs_tag(eps), None))

    for test_value, test in tests.items():
        for method, x in fitted:
            if x is None:
                if test_value != grid_value:
                    rep.records.append((float(test_value), method, None))
                continue
            rep.record(test_value, method, evaluate_mse(x, test))


# ===================================================================================================
# SCENARIOS (one replication each)


def replicate_sample_size(cfg: models.EXPERIMENT_CONFIG, index: int) -> REPLICATION:
    rep = REPLICATION(cfg, index)
    for n in cfg.n_grid:
        data = distributions.generate_synthetic(cfg.synthetic, n, substream(cfg.seed, index, "train", n))
        test = distributions.generate_synthetic(cfg.synthetic, cfg.n_test, substream(cfg.seed, index, "test", n))
        _compare_methods(rep, _path(cfg, data), n, {n: test})
    return rep


def replicate_shift(cfg: models.EXPERIMENT_CONFIG, index: int) -> REPLICATION:
    rep = REPLICATION(cfg, index)
    source = cfg.synthetic.model_copy(update={"degree": 0.0})
    data = distributions.generate_synthetic(source, cfg.n_train, substream(cfg.seed, index, "train"))
    tests = {}
    for k, degree in enumerate(cfg.degree_grid):
        target = distributions.shifted_config(source, degree)
        tests[degree] = distributions.generate_synthetic(target, cfg.n_test, substream(cfg.seed, index, "test", k))

    # failures are reported once per test degree
    path = _path(cfg, data)
    erm = rep.attempt(cfg.degree_grid[0], "ERM", lambda: path.erm()[0])
    fitted = [("ERM", erm)]
    lower = 0.0
    for eps in cfg.epsilon_grid:
        sol = rep.attempt(cfg.degree_grid[0], _rs_tag(eps), lambda: path.rs(eps, lower))
        if sol is not None and not sol.diagnostics.zero_solution:
            lower = path.x_only_multiplier(sol)
        fitted.append((_rs_tag(eps), None if sol is None else np.asarray(sol.x_hat)))

    first = True
    for degree, test in tests.items():
        for method, x in fitted:
            if x is None:
                if not first:
                    rep.records.append((float(degree), method, None))
                continue
            rep.record(degree, method, evaluate_mse(x, test))
        first = False
    return rep


def replicate_correspondence(cfg: models.EXPERIMENT_CONFIG, index: int) -> REPLICATION:
    rep = REPLICATION(cfg, index)
    for m_u in cfg.dims:
        synthetic = synthetic_for_dim(cfg.synthetic, m_u)
        data = distributions.generate_synthetic(synthetic, cfg.n_train, substream(cfg.seed, index, "train", m_u))
        path = _path(cfg, data, "x_only")
        method = f"r(eps) m_u={m_u}"

        lower, previous = 0.0, -math.inf
        for eps in cfg.epsilon_grid:
            sol = rep.attempt(eps, method, lambda: path.rs(eps, lower))
            if sol is None:
                continue
            if not sol.diagnostics.zero_solution:
                lower = sol.lambda_hat
            if sol.lambda_hat < previous - MONOTONE_TOL:
                rep.note(grid_value=eps, method=method, error="nonmonotone", residual=previous - sol.lambda_hat)
            previous = sol.lambda_hat
            rep.record(eps, method, sol.lambda_hat)
    return rep


def _sensitivity_sets(cfg, index):
    source = cfg.synthetic.model_copy(update={"degree": 0.0})
    target = distributions.shifted_config(source, cfg.target_degree)
    data = distributions.generate_synthetic(source, cfg.n_train, substream(cfg.seed, index, "train"))
    test = distributions.generate_synthetic(target, cfg.n_test, substream(cfg.seed, index, "target"))
    return data, test


def replicate_sensitivity_dro(cfg: models.EXPERIMENT_CONFIG, index: int) -> REPLICATION:
    rep = REPLICATION(cfg, index)
    data, test = _sensitivity_sets(cfg, index)
    path = _path(cfg, data)

    erm = rep.attempt(cfg.radius_grid[0], "ERM", lambda: path.erm()[0])
    for radius in cfg.radius_grid:
        if erm is not None:
            rep.record(radius, "ERM", evaluate_mse(erm, test))
        elif radius != cfg.radius_grid[0]:
            rep.records.append((float(radius), "ERM", None))
        sol = rep.attempt(radius, "DRO", lambda: path.dro(radius))
        if sol is not None:
            rep.record(radius, "DRO", evaluate_mse(sol.x_hat, test))
    return rep


def replicate_sensitivity_rs(cfg: models.EXPERIMENT_CONFIG, index: int) -> REPLICATION:
    rep = REPLICATION(cfg, index)
    data, test = _sensitivity_sets(cfg, index)
    path = _path(cfg, data)

    erm = rep.attempt(cfg.epsilon_grid[0], "ERM", lambda: path.erm()[0])
    lower = 0.0
    for eps in cfg.epsilon_grid:
        if erm is not None:
            rep.record(eps, "ERM", evaluate_mse(erm, test))
        elif eps != cfg.epsilon_grid[0]:
            rep.records.append((float(eps), "ERM", None))
        sol = rep.attempt(eps, "RS", lambda: path.rs(eps, lower))
        if sol is not None:
            if not sol.diagnostics.zero_solution:
                lower = path.x_only_multiplier(sol)
            rep.record(eps, "RS", evaluate_mse(sol.x_hat, test))
    return rep


def coverage_truth(cfg: models.EXPERIMENT_CONFIG):
    """Fixed finite-support P* and shifted target P̃ for a coverage study."""
    p_star = distributions.discrete_ground_truth(
        cfg.synthetic, cfg.support_size, substream(cfg.seed, 0, "ground_truth")
    )
    shifted = distributions.shifted_config(cfg.synthetic, cfg.shift_degree)
    p_target = distributions.discrete_ground_truth(shifted, cfg.support_size, substream(cfg.seed, 0, "shifted_truth"))
    return p_star, p_target


def replicate_coverage(cfg: models.EXPERIMENT_CONFIG, index: int) -> REPLICATION:
    rep = REPLICATION(cfg, index)
    cost = models.COST_SPEC(variant="full_l2")
    p_star, p_target = coverage_truth(cfg)

    for n in cfg.n_grid:
        data = distributions.sample_from(p_star, n, substream(cfg.seed, index, "train", n))
        p_hat = distributions.empirical_distribution(data)
        # the full cost pairs with the augmented norm: k_τ = L·‖(x̂, -1)‖
        path = _path(cfg, data, "augmented")

        for eps in cfg.epsilon_grid:
            tags = [
                f"chain eps={eps:g}",
                f"regret eps={eps:g}",
                f"shifted_chain eps={eps:g}",
                f"shifted_regret eps={eps:g}",
            ]

            def run():
                rs = path.rs(eps)
                return exact_chain_report(rs, p_star, p_hat, cfg.loss, cfg.task, cost, p_target, CHAIN_TOL, cfg.solver)

            try:
                report = run()
            except RskitError as e:
                for tag in tags:
                    rep.fail(n, tag, e)
                continue

            checks = [
                (tags[0], report.chain_holds, report.chain_residual),
                (tags[1], report.regret_holds, report.regret_residual),
                (tags[2], report.shifted_holds, report.shifted_residual),
                (tags[3], report.shifted_regret_holds, report.shifted_regret_residual),
            ]
            for tag, holds, residual in checks:
                rep.record(n, tag, 1.0 if holds else 0.0)
                if not holds:
                    rep.note(grid_value=float(n), method=tag, error="violation", residual=residual, d_w=report.d_w)
    return rep


REPLICATORS = {
    "sample_size": replicate_sample_size,
    "shift": replicate_shift,
    "correspondence": replicate_correspondence,
    "sensitivity_dro": replicate_sensitivity_dro,
    "sensitivity_rs": replicate_sensitivity_rs,
    "coverage": replicate_coverage,
}


# ===================================================================================================
# RUNNER


def _call(task):
    fn, cfg, index = task
    return fn(cfg, index)


def run_replications(cfg: models.EXPERIMENT_CONFIG, jobs: Optional[int] = None) -> List[REPLICATION]:
    fn = REPLICATORS[cfg.scenario]
    jobs = min(jobs or default_jobs(), cfg.replications)
    tasks = [(fn, cfg, index) for index in range(cfg.replications)]

    msg = f"[SWEEP_RUNNER] scenario={cfg.scenario} replications={cfg.replications} jobs={jobs} seed={cfg.seed}"
    print(msg)
    logger.info(msg)

    step = max(1, cfg.replications // 10)
    out = []
    if jobs <= 1:
        iterator = map(_call, tasks)
        pool = None
    else:
        pool = multiprocessing.Pool(processes=jobs)
        iterator = pool.imap(_call, tasks)
    try:
        for done, rep in enumerate(iterator, start=1):
            out.append(rep)
            if done % step == 0 or done == cfg.replications:
                logger.info(f"[SWEEP_RUNNER] {cfg.scenario}: {done}/{cfg.replications} replications")
    finally:
        if pool is not None:
            pool.close()
            pool.join()
    return out


def aggregate(cfg: models.EXPERIMENT_CONFIG, replications: List[REPLICATION]) -> models.SWEEP_RESULT:
    """Mean and standard error per (grid value, method), by replication index."""
    table: Dict[tuple, List] = {}
    for rep in sorted(replications, key=lambda r: r.index):
        for grid_value, method, value in rep.records:
            table.setdefault((grid_value, method), []).append(value)

    rows = []
    for (grid_value, method), values in table.items():
        ok = np.array([v for v in values if v is not None], dtype=float)
        failures = len(values) - ok.size
        rows.append(
            models.SWEEP_ROW(
                grid_value=grid_value,
                method=method,
                metric_mean=float(np.mean(ok)) if ok.size else math.nan,
                metric_se=standard_error(ok),
                replications=int(ok.size),
                failures=failures,
            )
        )

    failed = sum(1 for rep in replications if any(v is None for _, _, v in rep.records))
    metrics.REPLICATIONS_TOTAL.labels(scenario=cfg.scenario, outcome="ok").inc(len(replications) - failed)
    metrics.REPLICATIONS_TOTAL.labels(scenario=cfg.scenario, outcome="failed").inc(failed)

    diagnostics = [d for rep in sorted(replications, key=lambda r: r.index) for d in rep.diagnostics]
    metadata = {
        "scenario": cfg.scenario,
        "seed": cfg.seed,
        "replications": cfg.replications,
        "config": cfg.model_dump(mode="json"),
    }
    return models.SWEEP_RESULT(rows=rows, diagnostics=diagnostics, metadata=metadata)


def run_experiment(cfg: models.EXPERIMENT_CONFIG, jobs: Optional[int] = None) -> models.SWEEP_RESULT:
    if cfg.scenario == "coverage" and cfg.task.task != "regression":
        raise ParameterError("coverage study is defined for regression under the full cost")
    result = aggregate(cfg, run_replications(cfg, jobs))
    failures = sum(row.failures for row in result.rows)
    msg = f"[SWEEP_RUNNER] {cfg.scenario} done: {len(result.rows)} rows, {failures} failed evaluations"
    print(msg)
    logger.info(msg)
    return result


def run_sample_size_sweep(cfg, jobs=None) -> models.SWEEP_RESULT:
    _check_scenario(cfg, "sample_size")
    return run_experiment(cfg, jobs)


def run_shift_sweep(cfg, jobs=None) -> models.SWEEP_RESULT:
    _check_scenario(cfg, "shift")
    return run_experiment(cfg, jobs)


def run_correspondence(cfg, jobs=None) -> models.SWEEP_RESULT:
    _check_scenario(cfg, "correspondence")
    return run_experiment(cfg, jobs)


def run_sensitivity(cfg, jobs=None) -> models.SWEEP_RESULT:
    _check_scenario(cfg, "sensitivity_dro", "sensitivity_rs")
    return run_experiment(cfg, jobs)


def sensitivity_summary(result: models.SWEEP_RESULT, band: float = SENSITIVITY_BAND) -> models.SENSITIVITY_SUMMARY:
    """Optimum, crossover against ERM and worst MSE within ±band of the optimum.

    The crossover is the first grid value past the optimum whose mean MSE is
    not below ERM's. RS grid values are shifted to 1+ε.
    """
    method = "RS" if result.select("RS") else "DRO"
    shift = 1.0 if method == "RS" else 0.0
    rows = sorted(
        (row for row in result.select(method) if math.isfinite(row.metric_mean)),
        key=lambda row: row.grid_value,
    )
    erm = [row.metric_mean for row in result.select("ERM") if math.isfinite(row.metric_mean)]
    if not rows or not erm:
        raise ParameterError(f"sensitivity summary needs finite {method} and ERM rows")

    erm_mse = float(np.mean(erm))
    grid = np.array([row.grid_value for row in rows]) + shift
    mse = np.array([row.metric_mean for row in rows])
    best = int(np.argmin(mse))
    optimum = float(grid[best])

    crossover = None
    for value, level in zip(grid[best + 1 :], mse[best + 1 :]):
        if level >= erm_mse:
            crossover = float(value)
            break

    near = np.abs(grid - optimum) <= band * optimum + 1e-12
    return models.SENSITIVITY_SUMMARY(
        method=method,
        optimum=optimum,
        optimum_mse=float(mse[best]),
        erm_mse=erm_mse,
        crossover=crossover,
        band=band,
        band_max_mse=float(np.max(mse[near])),
    )


def run_coverage(cfg, jobs=None) -> models.SWEEP_RESULT:
    _check_scenario(cfg, "coverage")
    return run_experiment(cfg, jobs)


def _check_scenario(cfg, *allowed):
    if cfg.scenario not in allowed:
        raise ParameterError(f"scenario {cfg.scenario} given, expected one of {', '.join(allowed)}")
