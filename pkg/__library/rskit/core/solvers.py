# ===================================================================================================
# SOLVERS
# ===================================================================================================
"""
ERM, norm-regularized ERM (the DRO-equivalent form) and the RS model.

All three are points on one regularization path

    x(λ) = argmin_x  Σ_i w_i L(z_i(x)) + λ·norm(x)

with norm(x) = ‖x‖₂ (x_only) or ‖(x, -1)‖₂ (augmented). ERM is x(0), DRO at
radius r is x(r), and the RS solution is x(λ̂) for the largest λ̂ whose
empirical loss still meets the reference value τ_ε.
"""

import logging
import math
import time
from typing import Optional, Sequence

import cvxpy as cp
import numpy as np

from rskit import models
from rskit.core import losses
from rskit.errors import BracketError, ConvergenceError, ParameterError
from rskit.modules import metrics
from rskit.modules.misc import vector_norm

logger = logging.getLogger(__name__)

ACCEPTED_STATUSES = (cp.OPTIMAL, cp.OPTIMAL_INACCURATE)
POLISH_SLACK = 0.1
BRACKET_SHRINK = 1e-2
CHECK_EVERY = 1000

# ===================================================================================================
# REGULARIZATION PATH


class REGULARIZATION_PATH:
    """Regularized-ERM solves on one dataset, reused across λ, ε and radius.

    The conic backend compiles a single cvxpy problem with λ as a
    nonnegative Parameter, so repeated solves skip canonicalization.
    """

    def __init__(
        self,
        data: models.DATASET,
        loss: models.LOSS_SPEC,
        task: models.TASK_SPEC = models.TASK_SPEC(),
        norm_variant: models.NormVariant = "x_only",
        opts: Optional[models.SOLVER_OPTIONS] = None,
        weights: Optional[Sequence[float]] = None,
    ):
        losses.check_labels(task, data.labels)

        self.data = data
        self.loss = loss
        self.task = task
        self.norm_variant = norm_variant
        self.opts = opts or models.SOLVER_OPTIONS()
        self.lipschitz = losses.lipschitz_constant(loss)
        self.solves = 0

        if weights is None:
            self._w = np.full(data.n, 1.0 / data.n)
        else:
            self._w = np.asarray(weights, dtype=float).reshape(-1)

        # z = b + s·(A x)
        if task.task == "classification":
            self._A = data.labels[:, None] * data.features
            self._b = np.zeros(data.n)
            self._s = 1.0
        else:
            self._A = np.asarray(data.features)
            self._b = np.asarray(data.labels)
            self._s = -1.0

        self._cache = {}
        self._erm = None
        self._problem = None

    @classmethod
    def from_distribution(cls, dist: models.DISCRETE_DISTRIBUTION, loss, task=models.TASK_SPEC(), norm_variant="x_only", opts=None):
        """Path of the exact expected loss under a finite measure."""
        data = models.DATASET(dist.support[:, :-1], dist.support[:, -1])
        return cls(data, loss, task, norm_variant, opts, weights=dist.weights)

    @property
    def m(self) -> int:
        return self.data.m_u

    @property
    def backend(self) -> str:
        return self.opts.method

    # ---- numpy evaluation ----------------------------------------------------------------------

    def margins(self, x) -> np.ndarray:
        return self._b + self._s * (self._A @ np.asarray(x, dtype=float))

    def mean_loss(self, x) -> float:
        return float(self._w @ np.asarray(losses.loss_value(self.loss, self.margins(x)), dtype=float))

    def penalty(self, x) -> float:
        return vector_norm(x, self.norm_variant)

    def objective(self, x, lam: float) -> float:
        return self.mean_loss(x) + lam * self.penalty(x)

    def loss_gradient(self, x) -> np.ndarray:
        """Subgradient of the weighted mean loss."""
        g = np.asarray(losses.loss_subgradient(self.loss, self.margins(x)), dtype=float)
        return self._s * (self._A.T @ (self._w * g))

    def penalty_gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.norm_variant == "augmented":
            return x / math.sqrt(x @ x + 1.0)
        nrm = np.linalg.norm(x)
        return x / nrm if nrm > 0 else np.zeros_like(x)

    # ---- conic backend -------------------------------------------------------------------------

    def _build(self):
        x = cp.Variable(self.m)
        self._x = x
        self._lam = cp.Parameter(nonneg=True, value=0.0)
        self._bound = cp.Parameter(value=0.0)

        z = self._b + self._s * (self._A @ x)
        loss_expr = self._w @ losses.loss_expression(self.loss, z)
        if self.norm_variant == "augmented":
            norm_expr = cp.norm(cp.hstack([x, np.ones(1)]), 2)
        else:
            norm_expr = cp.norm(x, 2)

        regularized = loss_expr + self._lam * norm_expr
        objective = regularized
        if self.opts.ridge_tiebreak > 0:
            objective = objective + self.opts.ridge_tiebreak * cp.sum_squares(x)

        self._problem = cp.Problem(cp.Minimize(objective))
        self._polish = cp.Problem(cp.Minimize(cp.sum_squares(x)), [regularized <= self._bound])

    def _run(self, problem: cp.Problem, what: str) -> np.ndarray:
        kwargs = {"solver": self.opts.cvxpy_solver} if self.opts.cvxpy_solver else {}
        t0 = time.perf_counter()
        try:
            problem.solve(**kwargs)
        except cp.error.SolverError as e:
            metrics.SOLVES_TOTAL.labels(backend="conic", outcome="error").inc()
            raise ConvergenceError(f"{what}: solver failed: {e}", iterations=self.solves) from e
        finally:
            metrics.SOLVE_LATENCY_SECONDS.labels(backend="conic").observe(time.perf_counter() - t0)

        status = problem.status
        if status not in ACCEPTED_STATUSES or self._x.value is None:
            metrics.SOLVES_TOTAL.labels(backend="conic", outcome="error").inc()
            raise ConvergenceError(f"{what}: solver status {status}", iterations=self.solves)
        if status == cp.OPTIMAL_INACCURATE:
            metrics.SOLVES_TOTAL.labels(backend="conic", outcome="inaccurate").inc()
            logger.warning(f"{what}: solver returned {status}")
        else:
            metrics.SOLVES_TOTAL.labels(backend="conic", outcome="ok").inc()
        return np.array(self._x.value, dtype=float).reshape(-1)

    def _solve_conic(self, lam: float, polish: bool) -> np.ndarray:
        if self._problem is None:
            self._build()
        self._lam.value = lam
        x1 = self._run(self._problem, f"regularized solve at lambda={lam:.6g}")
        if not (polish and self.opts.min_norm_polish):
            return x1

        v1 = self.objective(x1, lam)
        slack = POLISH_SLACK * self.opts.rel_tol * (1.0 + abs(v1))
        self._bound.value = v1 + slack
        try:
            x2 = self._run(self._polish, f"min-norm polish at lambda={lam:.6g}")
        except ConvergenceError as e:
            logger.warning(f"min-norm polish skipped: {e}")
            return x1
        if self.objective(x2, lam) <= v1 + 2.0 * slack:
            return x2
        logger.warning(f"min-norm polish rejected at lambda={lam:.6g}")
        return x1

    # ---- subgradient backend -------------------------------------------------------------------

    def _solve_subgradient(self, lam: float) -> np.ndarray:
        opts = self.opts
        ridge = opts.ridge_tiebreak

        def f(x):
            return self.objective(x, lam) + ridge * float(x @ x)

        def grad(x):
            return self.loss_gradient(x) + lam * self.penalty_gradient(x) + 2.0 * ridge * x

        lip = self.lipschitz if math.isfinite(self.lipschitz) else 1.0
        mean_row = float(self._w @ np.linalg.norm(self._A, axis=1))
        eta0 = 1.0 / (max(lip, 1e-12) * max(mean_row, 1e-12))

        t0 = time.perf_counter()
        x = np.zeros(self.m)
        x_avg = x.copy()
        x_best, f_best = x.copy(), f(x)
        checkpoint = f_best
        residual = math.inf

        for t in range(1, opts.max_iters + 1):
            g = grad(x)
            gg = float(g @ g)
            if gg == 0.0:
                x_best, f_best, residual = x.copy(), f(x), 0.0
                break

            if opts.step_rule == "polyak":
                # estimated optimum f_best - γ_t with γ_t = 10/(10+t)
                gamma = 0.1 * (1.0 + abs(f_best)) * 10.0 / (10.0 + t)
                step = (f(x) - f_best + gamma) / gg
            else:
                step = eta0 / math.sqrt(t)

            x = x - step * g
            x_avg += (x - x_avg) / t
            fx = f(x)
            if fx < f_best:
                x_best, f_best = x.copy(), fx

            if t % CHECK_EVERY == 0:
                f_avg = f(x_avg)
                if f_avg < f_best:
                    x_best, f_best = x_avg.copy(), f_avg
                residual = checkpoint - f_best
                if residual <= opts.rel_tol * (1.0 + abs(f_best)):
                    break
                checkpoint = f_best
        else:
            metrics.SOLVES_TOTAL.labels(backend="subgradient", outcome="error").inc()
            raise ConvergenceError(
                f"subgradient descent did not converge at lambda={lam:.6g}",
                residual=residual,
                iterations=opts.max_iters,
            )

        metrics.SOLVES_TOTAL.labels(backend="subgradient", outcome="ok").inc()
        metrics.SOLVE_LATENCY_SECONDS.labels(backend="subgradient").observe(time.perf_counter() - t0)
        logger.debug(f"subgradient lambda={lam:.6g} iterations={t} f={f_best:.10g}")
        return x_best

    # ---- public API ----------------------------------------------------------------------------

    def solve(self, lam: float, polish: bool = True) -> np.ndarray:
        """x(λ); `polish` selects the minimum-norm element of a flat optimum."""
        if not lam >= 0 or not math.isfinite(lam):
            raise ParameterError(f"lambda must be a finite nonnegative number, got {lam}")
        key = (float(lam), bool(polish) and self.backend == "conic")
        if key in self._cache:
            return self._cache[key].copy()

        self.solves += 1
        if self.backend == "subgradient":
            x = self._solve_subgradient(lam)
        else:
            x = self._solve_conic(lam, polish)
        self._cache[key] = x
        return x.copy()

    def erm(self):
        """Minimum-norm ERM solution and its empirical loss."""
        if self._erm is None:
            x = self.solve(0.0)
            self._erm = (x, self.mean_loss(x))
        x, min_loss = self._erm
        return x.copy(), min_loss

    def dro(self, radius: float) -> models.DRO_SOLUTION:
        if not radius >= 0:
            raise ParameterError(f"radius must be nonnegative, got {radius}")
        x = self.solve(radius)
        return models.DRO_SOLUTION(
            x_hat=x.tolist(),
            radius=radius,
            objective=self.objective(x, radius),
            norm_variant=self.norm_variant,
        )

    def zero_multiplier(self) -> float:
        """‖∇ loss(0)‖: the smallest x_only λ for which x = 0 is optimal."""
        return float(np.linalg.norm(self.loss_gradient(np.zeros(self.m))))

    def rs(self, epsilon: float, lower: float = 0.0) -> models.RS_SOLUTION:
        """Robust satisficing solution at tolerance rate ε.

        Bisection runs on the x_only path: the minimum-norm feasible point is
        the same under both norms, and the augmented multiplier follows from
        matching stationarity conditions at x̂.

        Args:
            epsilon: tolerance rate, τ_ε = (1+ε)·min empirical loss.
            lower: a λ known to be feasible (e.g. λ̂ of a smaller ε).
        """
        if not epsilon >= 0:
            raise ParameterError(f"epsilon must be nonnegative, got {epsilon}")
        lip = losses.require_lipschitz(self.loss)

        if self.norm_variant != "x_only":
            path = self.x_only()
            solution = path.rs(epsilon, lower)
            x_hat = np.asarray(solution.x_hat)
            nrm = float(np.linalg.norm(x_hat))
            if solution.diagnostics.zero_solution:
                lam = 0.0 if solution.lambda_hat == 0 else math.inf
            else:
                lam = solution.lambda_hat * math.sqrt(nrm**2 + 1.0) / nrm
            return solution.model_copy(
                update={
                    "lambda_hat": lam,
                    "k_tau": lip * vector_norm(x_hat, "augmented"),
                    "norm_variant": "augmented",
                }
            )

        _, erm_min_loss = self.erm()
        tau = (1.0 + epsilon) * erm_min_loss
        ctol = self.opts.constraint_tol
        upper = lip * float(np.max(np.linalg.norm(self.data.features, axis=1))) + 1.0
        solves0 = self.solves

        zero = np.zeros(self.m)
        if self.mean_loss(zero) <= tau + ctol:
            lam_hat, x_hat, steps = self.zero_multiplier(), zero, 0
            zero_solution = True
        else:
            lam_hat, x_hat, steps = self._bisect(tau, lower, upper)
            zero_solution = False

        residual = self.mean_loss(x_hat) - tau
        metrics.BISECTION_STEPS.observe(steps)
        diagnostics = models.RS_DIAGNOSTICS(
            backend=self.backend,
            bisection_steps=steps,
            solves=self.solves - solves0,
            bracket_upper=upper,
            constraint_residual=residual,
            active=abs(residual) <= 10.0 * ctol,
            zero_solution=zero_solution,
            path_variant="x_only",
        )
        return models.RS_SOLUTION(
            x_hat=x_hat.tolist(),
            k_tau=lip * vector_norm(x_hat, "x_only"),
            lambda_hat=lam_hat,
            tau=tau,
            epsilon=epsilon,
            erm_min_loss=erm_min_loss,
            norm_variant="x_only",
            lipschitz=lip,
            diagnostics=diagnostics,
        )

    def x_only(self) -> "REGULARIZATION_PATH":
        if self.norm_variant == "x_only":
            return self
        if not hasattr(self, "_x_only"):
            self._x_only = REGULARIZATION_PATH(self.data, self.loss, self.task, "x_only", self.opts, self._w)
        return self._x_only

    def _bisect(self, tau: float, lo: float, hi: float):
        """Largest λ in [lo, hi] with empirical loss at x(λ) ≤ τ + constraint_tol."""
        ctol = self.opts.constraint_tol

        x_lo = self.solve(lo, polish=False)
        if self.mean_loss(x_lo) > tau + ctol:
            if lo == 0:
                raise BracketError(
                    "lambda = 0 violates the reference value",
                    residual=self.mean_loss(x_lo) - tau,
                    iterations=0,
                )
            logger.warning(f"warm-start lambda {lo:.6g} infeasible, restarting bracket at 0")
            return self._bisect(tau, 0.0, hi)

        steps = 0
        while self.mean_loss(x_lo) < tau - ctol and hi - lo > BRACKET_SHRINK * self.opts.rel_tol * (1.0 + lo):
            if steps >= self.opts.max_bisection_steps:
                raise ConvergenceError(
                    "bisection over lambda did not converge",
                    residual=hi - lo,
                    iterations=steps,
                )
            mid = 0.5 * (lo + hi)
            x_mid = self.solve(mid, polish=False)
            steps += 1
            if self.mean_loss(x_mid) <= tau + ctol:
                lo, x_lo = mid, x_mid
            else:
                hi = mid

        x_hat = self.solve(lo, polish=True)
        if self.mean_loss(x_hat) > tau + ctol:
            logger.warning(f"polished RS point infeasible at lambda={lo:.6g}, keeping unpolished")
            x_hat = x_lo
        logger.debug(f"rs bisection lambda={lo:.8g} steps={steps} width={hi - lo:.3e}")
        return lo, x_hat, steps

    def rs_path(self, epsilons: Sequence[float]):
        """RS solutions for ascending ε, each bracket warm-started at the previous λ̂."""
        out, lower = [], 0.0
        for eps in epsilons:
            solution = self.rs(eps, lower=lower)
            out.append(solution)
            if not solution.diagnostics.zero_solution:
                lower = self.x_only_multiplier(solution)
        return out

    def x_only_multiplier(self, solution: models.RS_SOLUTION) -> float:
        # x_only multiplier of a solution produced by this path or its augmented twin
        if solution.norm_variant == "x_only":
            return solution.lambda_hat
        nrm = float(np.linalg.norm(solution.x_hat))
        return solution.lambda_hat * nrm / math.sqrt(nrm**2 + 1.0)


# ===================================================================================================
# FUNCTIONAL API


def solve_erm(data, loss, task=models.TASK_SPEC(), opts=None):
    """Minimum-norm ERM solution.

    Returns:
        (x, min_loss)
    """
    return REGULARIZATION_PATH(data, loss, task, "x_only", opts).erm()


def solve_regularized(data, loss, task, lam: float, norm_variant="x_only", opts=None) -> np.ndarray:
    return REGULARIZATION_PATH(data, loss, task, norm_variant, opts).solve(lam)


def reference_value(data, loss, task, epsilon: float, opts=None):
    """τ_ε = (1+ε)·min empirical loss.

    `data` is a DATASET or a DISCRETE_DISTRIBUTION (weighted expected loss).

    Returns:
        (tau, erm_min_loss)
    """
    if not epsilon >= 0:
        raise ParameterError(f"epsilon must be nonnegative, got {epsilon}")
    if isinstance(data, models.DISCRETE_DISTRIBUTION):
        _, min_loss = REGULARIZATION_PATH.from_distribution(data, loss, task, "x_only", opts).erm()
    else:
        _, min_loss = solve_erm(data, loss, task, opts)
    return (1.0 + epsilon) * min_loss, min_loss


def solve_rs(data, loss, task, epsilon: float, norm_variant="x_only", opts=None) -> models.RS_SOLUTION:
    return REGULARIZATION_PATH(data, loss, task, norm_variant, opts).rs(epsilon)


def solve_dro(data, loss, task, radius: float, norm_variant="x_only", opts=None) -> models.DRO_SOLUTION:
    return REGULARIZATION_PATH(data, loss, task, norm_variant, opts).dro(radius)


def dro_worst_case_value(x, data, loss, task, radius: float, norm_variant="x_only") -> float:
    """Worst-case expectation over the radius-r Wasserstein ball: loss + r·Lip·norm(x)."""
    if not radius >= 0:
        raise ParameterError(f"radius must be nonnegative, got {radius}")
    lip = losses.require_lipschitz(loss)
    return losses.empirical_loss(x, data, loss, task) + radius * lip * vector_norm(x, norm_variant)


def solve_rs_direct(data, loss, task, epsilon: float, norm_variant="x_only", opts=None) -> models.RS_SOLUTION:
    """min norm(x) s.t. empirical loss ≤ τ_ε as one conic program.

    λ̂ is recovered as the reciprocal of the constraint's dual value.
    """
    opts = opts or models.SOLVER_OPTIONS()
    path = REGULARIZATION_PATH(data, loss, task, "x_only", opts)
    lip = losses.require_lipschitz(loss)
    if not epsilon >= 0:
        raise ParameterError(f"epsilon must be nonnegative, got {epsilon}")
    _, erm_min_loss = path.erm()
    tau = (1.0 + epsilon) * erm_min_loss
    ctol = opts.constraint_tol

    zero = np.zeros(path.m)
    if path.mean_loss(zero) <= tau + ctol:
        x_hat, lam, zero_solution = zero, path.zero_multiplier(), True
    else:
        x = cp.Variable(path.m)
        z = path._b + path._s * (path._A @ x)
        constraint = path._w @ losses.loss_expression(loss, z) <= tau + POLISH_SLACK * ctol
        problem = cp.Problem(cp.Minimize(cp.norm(x, 2)), [constraint])
        kwargs = {"solver": opts.cvxpy_solver} if opts.cvxpy_solver else {}
        try:
            problem.solve(**kwargs)
        except cp.error.SolverError as e:
            raise ConvergenceError(f"direct RS solve failed: {e}") from e
        if problem.status not in ACCEPTED_STATUSES or x.value is None:
            raise ConvergenceError(f"direct RS solve status {problem.status}")
        x_hat = np.array(x.value, dtype=float).reshape(-1)
        dual = float(constraint.dual_value) if constraint.dual_value is not None else 0.0
        lam = 1.0 / dual if dual > 0 else math.inf
        zero_solution = False

    if norm_variant == "augmented":
        nrm = float(np.linalg.norm(x_hat))
        if zero_solution:
            lam = 0.0 if lam == 0 else math.inf
        else:
            lam = lam * math.sqrt(nrm**2 + 1.0) / nrm

    residual = path.mean_loss(x_hat) - tau
    return models.RS_SOLUTION(
        x_hat=x_hat.tolist(),
        k_tau=lip * vector_norm(x_hat, norm_variant),
        lambda_hat=lam,
        tau=tau,
        epsilon=epsilon,
        erm_min_loss=erm_min_loss,
        norm_variant=norm_variant,
        lipschitz=lip,
        diagnostics=models.RS_DIAGNOSTICS(
            backend="direct",
            solves=path.solves + 1,
            constraint_residual=residual,
            active=abs(residual) <= 10.0 * ctol,
            zero_solution=zero_solution,
            path_variant=norm_variant,
        ),
    )
