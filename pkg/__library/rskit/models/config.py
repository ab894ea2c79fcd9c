from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from rskit.errors import ParameterError

# =================================================================================
# LOSSES

LossKind = Literal[
    "hinge",
    "smooth_hinge",
    "logistic",
    "l1",
    "squared",
    "huber",
    "insensitive",
    "pinball",
]

DELTA_KINDS = ("huber", "insensitive", "pinball")


class LOSS_SPEC(BaseModel):
    """Scalar convex loss L(z) with its parameters.

    `delta` parametrizes huber (δ > 0), insensitive (δ > 0) and pinball
    (δ in (0, 1)). `bound` declares |z| ≤ B for the squared loss, which makes
    it 2B-Lipschitz on that domain.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: LossKind = "l1"
    delta: Optional[float] = None
    bound: Optional[float] = Field(None, gt=0)

    @model_validator(mode="after")
    def check_parameters(self):
        if self.kind in ("huber", "insensitive"):
            if self.delta is None or not self.delta > 0:
                raise ParameterError(f"{self.kind} loss requires delta > 0, got {self.delta}")
        elif self.kind == "pinball":
            if self.delta is None or not 0 < self.delta < 1:
                raise ParameterError(f"pinball loss requires delta in (0, 1), got {self.delta}")
        elif self.delta is not None:
            raise ParameterError(f"delta is not a parameter of the {self.kind} loss")

        if self.bound is not None and self.kind != "squared":
            raise ParameterError("bound is only meaningful for the squared loss")
        return self

    def label(self) -> str:
        if self.kind in DELTA_KINDS:
            return f"{self.kind}({self.delta:g})"
        return self.kind


class TASK_SPEC(BaseModel):
    """regression: z = y - x·u ; classification: z = y·(x·u) with y in {-1, +1}."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    task: Literal["regression", "classification"] = "regression"


# =================================================================================
# TRANSPORT

CostVariant = Literal["full_l2", "feature_only", "augmented_l2"]


class COST_SPEC(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    variant: CostVariant = "full_l2"


# =================================================================================
# SOLVERS

NormVariant = Literal["x_only", "augmented"]


class SOLVER_OPTIONS(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    method: Literal["conic", "subgradient"] = "conic"
    max_iters: int = Field(20000, gt=0)
    step_rule: Literal["decaying", "polyak"] = "decaying"
    rel_tol: float = Field(1e-6, gt=0, le=1e-2)
    constraint_tol: float = Field(1e-6, gt=0, le=1e-2)
    ridge_tiebreak: float = Field(1e-8, ge=0)
    min_norm_polish: bool = True
    max_bisection_steps: int = Field(200, gt=0)
    cvxpy_solver: Optional[str] = None


# =================================================================================
# DATA GENERATION


class SYNTHETIC_CONFIG(BaseModel):
    """Linear model y = u·x + e with u ~ N(mean·1, var·I) and e ~ N(0, noise)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    m_u: int = Field(2, gt=0)
    x_star: List[float] = Field(default_factory=lambda: [2.0, -1.0])
    degree: float = Field(0.0, ge=0)
    noise_std_sq: float = Field(0.1, gt=0)
    feature_mean: float = 0.5
    feature_var: float = Field(0.5, gt=0)

    @model_validator(mode="after")
    def check_dimension(self):
        if len(self.x_star) != self.m_u:
            raise ParameterError(f"x_star has {len(self.x_star)} entries but m_u = {self.m_u}")
        return self


# =================================================================================
# INFERENCE


class REMAINDER_SCHEDULE(BaseModel):
    """Confidence sequence β_N and the concentration constants behind r_N.

    c1 and c2 default to placeholders (2, 1): they are positive constants that
    depend only on (a, m) and are not known for concrete distributions. Do not
    read coverage claims off intervals built with these defaults.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    beta_kind: Literal["constant", "exp_sqrt", "polynomial"] = "constant"
    beta: Optional[float] = Field(None, gt=0)
    gamma: Optional[float] = Field(None, gt=0)
    alpha: Optional[float] = Field(None, gt=0)
    c1: float = Field(2.0, gt=0)
    c2: float = Field(1.0, gt=0)
    a: float = Field(2.0, gt=1)
    m: int = Field(3, ge=1)

    @model_validator(mode="after")
    def check_parameter(self):
        required = {"constant": "beta", "exp_sqrt": "gamma", "polynomial": "alpha"}[self.beta_kind]
        if getattr(self, required) is None:
            raise ParameterError(f"{self.beta_kind} schedule requires {required}")
        return self


# =================================================================================
# EXPERIMENTS

Scenario = Literal[
    "sample_size",
    "shift",
    "correspondence",
    "sensitivity_dro",
    "sensitivity_rs",
    "coverage",
]


class EXPERIMENT_CONFIG(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    scenario: Scenario
    synthetic: SYNTHETIC_CONFIG = Field(default_factory=SYNTHETIC_CONFIG)
    loss: LOSS_SPEC = Field(default_factory=LOSS_SPEC)
    task: TASK_SPEC = Field(default_factory=TASK_SPEC)
    norm_variant: NormVariant = "x_only"
    n_train: int = Field(100, ge=1)
    n_grid: List[int] = Field(default_factory=list)
    epsilon_grid: List[float] = Field(default_factory=list)
    radius_grid: List[float] = Field(default_factory=list)
    degree_grid: List[float] = Field(default_factory=list)
    dims: List[int] = Field(default_factory=lambda: [2, 10])
    target_degree: float = Field(4.0, ge=0)
    support_size: int = Field(20, ge=2)
    shift_degree: float = Field(4.0, ge=0)
    replications: int = Field(200, ge=1)
    n_test: int = Field(10000, ge=1)
    seed: int = Field(0, ge=0)
    solver: SOLVER_OPTIONS = Field(default_factory=SOLVER_OPTIONS)

    @field_validator("n_grid", "epsilon_grid", "radius_grid", "degree_grid", "dims")
    @classmethod
    def check_sorted(cls, grid):
        if any(b < a for a, b in zip(grid, grid[1:])):
            raise ValueError("grid must be sorted ascending")
        return grid

    @model_validator(mode="after")
    def check_required_grids(self):
        required = {
            "sample_size": ("n_grid", "epsilon_grid"),
            "shift": ("degree_grid", "epsilon_grid"),
            "correspondence": ("epsilon_grid", "dims"),
            "sensitivity_dro": ("radius_grid",),
            "sensitivity_rs": ("epsilon_grid",),
            "coverage": ("n_grid", "epsilon_grid"),
        }[self.scenario]
        for name in required:
            if not getattr(self, name):
                raise ValueError(f"{name} must be nonempty for scenario {self.scenario}")
        if any(e < 0 for e in self.epsilon_grid) or any(r < 0 for r in self.radius_grid):
            raise ValueError("epsilon_grid and radius_grid must be nonnegative")
        if any(n < 1 for n in self.n_grid):
            raise ValueError("n_grid entries must be positive")
        return self


# =================================================================================
# RUN CONFIG (CLI)


class OUTPUT_CONFIG(BaseModel):
    model_config = ConfigDict(extra="forbid")

    path: Optional[str] = None
    format: Literal["csv", "json"] = "json"


class RUN_CONFIG(BaseModel):
    """Structured configuration file for the CLI.

    `experiment` holds overrides applied on top of the scenario defaults, so
    only keys of EXPERIMENT_CONFIG are accepted there.
    """

    model_config = ConfigDict(extra="forbid")

    seed: Optional[int] = Field(None, ge=0)
    jobs: Optional[int] = Field(None, ge=1)
    loss: LOSS_SPEC = Field(default_factory=LOSS_SPEC)
    task: TASK_SPEC = Field(default_factory=TASK_SPEC)
    norm_variant: NormVariant = "x_only"
    solver: SOLVER_OPTIONS = Field(default_factory=SOLVER_OPTIONS)
    synthetic: Optional[SYNTHETIC_CONFIG] = None
    schedule: Optional[REMAINDER_SCHEDULE] = None
    experiment: Dict[str, Any] = Field(default_factory=dict)
    output: OUTPUT_CONFIG = Field(default_factory=OUTPUT_CONFIG)

    @field_validator("experiment")
    @classmethod
    def check_experiment_keys(cls, overrides):
        unknown = sorted(set(overrides) - set(EXPERIMENT_CONFIG.model_fields))
        if unknown:
            raise ValueError(f"unknown experiment keys: {', '.join(unknown)}")
        return overrides
