# ===================================================================================================
# CLI
# ===================================================================================================
"""
rskit command line.

    rskit solve-rs --data d.csv --loss l1 --epsilon 0.2
    rskit interval --data d.csv --epsilon 0.2 --beta 0.05 --c1 2 --c2 1 --a 2 --m 3 --n 500
    rskit wasserstein --p p.csv --q q.csv --cost full_l2
    rskit experiment sensitivity_rs --replications 500 --out results/fig5.csv

Exit status: 0 success, 1 invalid input or parameters, 2 solver non-convergence.
"""

import argparse
import json
import logging
import os
import sys
from typing import List, Optional

from decouple import config
from pydantic import ValidationError

from rskit import __version__, models
from rskit.core import experiments, inference, robust, solvers, transport
from rskit.errors import ConvergenceError, InputValidationError, RskitError
from rskit.modules import csv_io
from rskit.modules.metrics import serve_metrics
from rskit.modules.misc import mkdir, parse_vector, vector_norm

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NOT_CONVERGED = 2

DEFAULT_COST = {"x_only": "feature_only", "augmented": "full_l2"}

# ===================================================================================================
# PARSER


class RSKIT_ARGUMENT_PARSER(argparse.ArgumentParser):
    """Usage errors are validation errors (exit 1), not argparse's exit 2."""

    def error(self, message):
        raise InputValidationError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = RSKIT_ARGUMENT_PARSER(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="seed (falls back to RSKIT_SEED)")
    common.add_argument("--out", help="output path (stdout when omitted)")
    common.add_argument("--format", choices=["csv", "json"])
    common.add_argument("--data", help="dataset CSV with header u1,...,u{m},y")
    common.add_argument("--jobs", type=int, help="worker processes for experiments")
    common.add_argument("--metrics-port", type=int, help="expose prometheus metrics on this port")

    problem = RSKIT_ARGUMENT_PARSER(add_help=False)
    problem.add_argument("--loss", choices=list(models.LossKind.__args__))
    problem.add_argument("--delta", type=float)
    problem.add_argument("--bound", type=float)
    problem.add_argument("--task", choices=["regression", "classification"])
    problem.add_argument("--norm-variant", choices=["x_only", "augmented"])
    problem.add_argument("--solver", choices=["conic", "subgradient"])

    cost = RSKIT_ARGUMENT_PARSER(add_help=False)
    cost.add_argument("--cost", choices=["full_l2", "feature_only", "augmented_l2"])

    schedule = RSKIT_ARGUMENT_PARSER(add_help=False)
    schedule.add_argument("--schedule", choices=["constant", "exp_sqrt", "polynomial"])
    schedule.add_argument("--beta", type=float)
    schedule.add_argument("--gamma", type=float)
    schedule.add_argument("--alpha", type=float)
    schedule.add_argument("--c1", type=float)
    schedule.add_argument("--c2", type=float)
    schedule.add_argument("--a", type=float)
    schedule.add_argument("--m", type=int)
    schedule.add_argument("--n", type=int)
    schedule.add_argument("--d-shift", type=float)

    parser = RSKIT_ARGUMENT_PARSER(prog="rskit", description="Robust satisficing for Lipschitz-loss linear learning")
    parser.add_argument("--version", action="version", version=f"rskit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("solve-erm", parents=[common, problem], help="minimum-norm empirical risk minimizer")

    p = sub.add_parser("solve-rs", parents=[common, problem], help="robust satisficing solution")
    p.add_argument("--epsilon", type=float, required=True)

    p = sub.add_parser("solve-dro", parents=[common, problem], help="Wasserstein DRO solution")
    p.add_argument("--radius", type=float, required=True)

    p = sub.add_parser("fragility", parents=[common, problem, cost], help="fragility k_tau(x)")
    p.add_argument("--x", required=True, help="decision vector, e.g. 2,-1")
    p.add_argument("--tau", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--support", help="candidate support CSV; enables oracle mode")

    p = sub.add_parser("interval", parents=[common, problem, cost, schedule], help="confidence intervals for J*")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--x-bound", type=float, help="radius R of the decision set {‖x‖ ≤ R} covered by corollary1")

    p = sub.add_parser("wasserstein", parents=[common, cost], help="exact type-1 Wasserstein distance")
    p.add_argument("--p", required=True, help="distribution CSV")
    p.add_argument("--q", required=True, help="distribution CSV")
    p.add_argument("--coupling", action="store_true", help="include the optimal coupling")

    p = sub.add_parser("experiment", parents=[common, problem], help="Monte Carlo scenario")
    p.add_argument("scenario", choices=list(experiments.SCENARIO_DEFAULTS))
    p.add_argument("--replications", type=int)
    p.add_argument("--n-test", type=int)

    return parser


# ===================================================================================================
# CONFIGURATION


def load_run_config(path: Optional[str]) -> models.RUN_CONFIG:
    if path is None:
        return models.RUN_CONFIG()
    try:
        with open(path, encoding="utf-8") as f:
            payload = json.load(f)
    except json.JSONDecodeError as e:
        raise InputValidationError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from e
    except OSError as e:
        raise InputValidationError(f"{path}: {e.strerror}") from e
    try:
        return models.RUN_CONFIG.model_validate(payload)
    except ValidationError as e:
        raise InputValidationError(f"{path}: {describe_validation_error(e)}") from e


def describe_validation_error(e: ValidationError) -> str:
    parts = []
    for err in e.errors():
        field = ".".join(str(loc) for loc in err["loc"]) or "<root>"
        parts.append(f"{field}: {err['msg']}")
    return "; ".join(parts)


class RESOLVED:
    """Effective settings: flag > config file > environment > default."""

    def __init__(self, args: argparse.Namespace, run_cfg: models.RUN_CONFIG):
        self.args = args
        self.run_cfg = run_cfg

    def _flag(self, name):
        return getattr(self.args, name, None)

    @property
    def seed(self) -> int:
        if self._flag("seed") is not None:
            return self.args.seed
        if self.run_cfg.seed is not None:
            return self.run_cfg.seed
        return config("RSKIT_SEED", default=0, cast=int)

    @property
    def jobs(self) -> Optional[int]:
        return self._flag("jobs") or self.run_cfg.jobs

    @property
    def loss(self) -> models.LOSS_SPEC:
        values = self.run_cfg.loss.model_dump(exclude_none=True)
        if self._flag("loss") is not None:
            values = {"kind": self.args.loss}
        for name in ("delta", "bound"):
            if self._flag(name) is not None:
                values[name] = self._flag(name)
        return models.LOSS_SPEC.model_validate(values)

    @property
    def task(self) -> models.TASK_SPEC:
        if self._flag("task") is not None:
            return models.TASK_SPEC(task=self.args.task)
        return self.run_cfg.task

    @property
    def norm_variant(self) -> str:
        return self._flag("norm_variant") or self.run_cfg.norm_variant

    @property
    def solver(self) -> models.SOLVER_OPTIONS:
        if self._flag("solver") is not None:
            return self.run_cfg.solver.model_copy(update={"method": self.args.solver})
        return self.run_cfg.solver

    @property
    def cost(self) -> models.COST_SPEC:
        return models.COST_SPEC(variant=self._flag("cost") or DEFAULT_COST[self.norm_variant])

    @property
    def out(self) -> Optional[str]:
        return self._flag("out") or self.run_cfg.output.path

    def format(self, default: str = "json") -> str:
        if self._flag("format") is not None:
            return self.args.format
        if "format" in self.run_cfg.output.model_fields_set:
            return self.run_cfg.output.format
        return default

    def schedule(self, m_default: int, n_default: int):
        values = self.run_cfg.schedule.model_dump(exclude_none=True) if self.run_cfg.schedule else {}
        for name in ("beta", "gamma", "alpha", "c1", "c2", "a", "m"):
            if self._flag(name) is not None:
                values[name] = self._flag(name)
        if self._flag("schedule") is not None:
            values["beta_kind"] = self.args.schedule
        elif "beta_kind" not in values:
            kinds = [k for k, f in (("constant", "beta"), ("exp_sqrt", "gamma"), ("polynomial", "alpha")) if f in values]
            values["beta_kind"] = kinds[0] if kinds else "constant"
        values.setdefault("m", m_default)
        schedule = models.REMAINDER_SCHEDULE.model_validate(values)
        n = self._flag("n") if self._flag("n") is not None else n_default
        return schedule, n

    def data(self) -> models.DATASET:
        if self._flag("data") is None:
            raise InputValidationError("--data is required for this command")
        return csv_io.read_dataset(self.args.data)


# ===================================================================================================
# COMMANDS


def cmd_solve_erm(res: RESOLVED):
    x, min_loss = solvers.solve_erm(res.data(), res.loss, res.task, res.solver)
    return models.ERM_SOLUTION(x=x.tolist(), min_loss=min_loss)


def cmd_solve_rs(res: RESOLVED):
    return solvers.solve_rs(res.data(), res.loss, res.task, res.args.epsilon, res.norm_variant, res.solver)


def cmd_solve_dro(res: RESOLVED):
    return solvers.solve_dro(res.data(), res.loss, res.task, res.args.radius, res.norm_variant, res.solver)


def cmd_fragility(res: RESOLVED):
    args = res.args
    if args.data is None:
        raise InputValidationError("--data is required for this command")
    p_hat = csv_io.read_distribution(args.data)
    x = parse_vector(args.x)

    if args.tau is not None:
        tau = args.tau
    elif args.epsilon is not None:
        tau, _ = solvers.reference_value(p_hat, res.loss, res.task, args.epsilon, res.solver)
    else:
        raise InputValidationError("fragility needs --tau or --epsilon")

    if args.support is not None:
        extra = csv_io.read_distribution(args.support).support
        ctx = robust.ROBUST_EVAL_CONTEXT.around(p_hat, extra, cost=res.cost, loss=res.loss, task=res.task)
        return robust.fragility_result(x, p_hat, tau, ctx, "oracle")
    ctx = robust.ROBUST_EVAL_CONTEXT.around(p_hat, cost=res.cost, loss=res.loss, task=res.task)
    return robust.fragility_result(x, p_hat, tau, ctx, "closed_form")


def cmd_interval(res: RESOLVED):
    data = res.data()
    rs = solvers.solve_rs(data, res.loss, res.task, res.args.epsilon, res.norm_variant, res.solver)
    schedule, n = res.schedule(m_default=data.m_u + 1, n_default=data.n)

    # corollary1 needs L over the decision set {‖x‖ ≤ R}; every RS decision has ‖x̂‖ ≤ ‖x_ERM‖
    x_erm, _ = solvers.solve_erm(data, res.loss, res.task, res.solver)
    radius = max(vector_norm(rs.x_hat), vector_norm(x_erm), res.args.x_bound or 0.0)
    l_h = robust.uniform_lipschitz(radius, res.loss, res.task, res.cost)
    logger.info(f"interval: decision radius {radius:.6g}, L = {l_h:.6g}, k_tau = {rs.k_tau:.6g}")
    return inference.interval_report(rs, schedule, n, l_h=max(l_h, rs.k_tau), d_shift=res.args.d_shift)


def cmd_wasserstein(res: RESOLVED):
    p = csv_io.read_distribution(res.args.p)
    q = csv_io.read_distribution(res.args.q)
    cost = models.COST_SPEC(variant=res.args.cost or "full_l2")
    return transport.wasserstein_result(p, q, cost, with_coupling=res.args.coupling)


def cmd_experiment(res: RESOLVED):
    args, run_cfg = res.args, res.run_cfg

    # config top level < config experiment section < flags
    values = {
        "loss": run_cfg.loss,
        "task": run_cfg.task,
        "norm_variant": run_cfg.norm_variant,
        "solver": run_cfg.solver,
        "seed": res.seed,
    }
    if run_cfg.synthetic is not None:
        values["synthetic"] = run_cfg.synthetic
    values.update(run_cfg.experiment)

    if args.loss is not None or args.delta is not None or args.bound is not None:
        values["loss"] = res.loss
    if args.task is not None:
        values["task"] = res.task
    if args.norm_variant is not None:
        values["norm_variant"] = res.norm_variant
    if args.solver is not None:
        values["solver"] = res.solver
    if args.seed is not None:
        values["seed"] = args.seed
    if args.replications is not None:
        values["replications"] = args.replications
    if args.n_test is not None:
        values["n_test"] = args.n_test

    try:
        cfg = experiments.default_experiment_config(args.scenario, **values)
    except ValidationError as e:
        raise InputValidationError(f"experiment: {describe_validation_error(e)}") from e
    return experiments.run_experiment(cfg, jobs=res.jobs)


COMMANDS = {
    "solve-erm": cmd_solve_erm,
    "solve-rs": cmd_solve_rs,
    "solve-dro": cmd_solve_dro,
    "fragility": cmd_fragility,
    "interval": cmd_interval,
    "wasserstein": cmd_wasserstein,
    "experiment": cmd_experiment,
}


# ===================================================================================================
# ENTRY POINT


def setup_logging():
    log_path = os.path.join(config("DIR_LOGS", default=".", cast=str), "rskit_cli.log")
    mkdir(log_path)
    logging.basicConfig(
        filename=log_path,
        encoding="utf-8",
        level=config("RSKIT_LOG_LEVEL", default="INFO", cast=str).upper(),
        datefmt="%Y-%m-%d %H:%M:%S %p %Z",
        format="%(asctime)s %(levelname)-8s %(message)s",
    )


def _fail(code: int, msg: str) -> int:
    print(f"[RSKIT][ERROR] {msg}", file=sys.stderr)
    logger.error(msg)
    return code


def dispatch(argv: Optional[List[str]] = None) -> int:
    setup_logging()
    try:
        args = build_parser().parse_args(argv)
        run_cfg = load_run_config(args.config)
        res = RESOLVED(args, run_cfg)

        port = args.metrics_port if args.metrics_port is not None else config("RSKIT_METRICS_PORT", default=0, cast=int)
        serve_metrics(port)

        logger.info(f"rskit {args.command} started")
        result = COMMANDS[args.command](res)
        csv_io.write_results(result, res.out, res.format("csv" if args.command == "experiment" else "json"))
        logger.info(f"rskit {args.command} finished")
        return EXIT_OK

    except SystemExit as e:
        # --help / --version
        return int(e.code or 0)
    except ConvergenceError as e:
        return _fail(EXIT_NOT_CONVERGED, f"solver did not converge: {e}")
    except ValidationError as e:
        return _fail(EXIT_INVALID, describe_validation_error(e))
    except (RskitError, ValueError) as e:
        return _fail(EXIT_INVALID, str(e))
    except OSError as e:
        return _fail(EXIT_INVALID, f"I/O error: {e}")


def main():
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
