from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .config import NormVariant

# =================================================================================
# SOLVER RESULTS

RESULT_CONFIG = ConfigDict(extra="forbid", ser_json_inf_nan="constants")


class ERM_SOLUTION(BaseModel):
    model_config = RESULT_CONFIG

    x: List[float]
    min_loss: float


class RS_DIAGNOSTICS(BaseModel):
    model_config = RESULT_CONFIG

    backend: str
    bisection_steps: int = 0
    solves: int = 0
    bracket_upper: float = 0.0
    constraint_residual: float = 0.0  # empirical loss at x_hat minus tau
    active: bool = False
    zero_solution: bool = False
    path_variant: NormVariant = "x_only"


class RS_SOLUTION(BaseModel):
    """Robust satisficing solution x̂ with fragility k_τ and multiplier λ̂."""

    model_config = RESULT_CONFIG

    x_hat: List[float]
    k_tau: float
    lambda_hat: float
    tau: float
    epsilon: float
    erm_min_loss: float
    norm_variant: NormVariant
    lipschitz: float
    diagnostics: RS_DIAGNOSTICS


class DRO_SOLUTION(BaseModel):
    model_config = RESULT_CONFIG

    x_hat: List[float]
    radius: float
    objective: float
    norm_variant: NormVariant


# =================================================================================
# ORACLES


class FRAGILITY_RESULT(BaseModel):
    model_config = RESULT_CONFIG

    k_tau: float
    tau: float
    mode: Literal["closed_form", "oracle"]


class WASSERSTEIN_RESULT(BaseModel):
    model_config = RESULT_CONFIG

    distance: float
    cost: str
    coupling: Optional[List[List[float]]] = None


# =================================================================================
# INFERENCE


class REMAINDER(BaseModel):
    """r_N together with the confidence level it was solved from."""

    model_config = RESULT_CONFIG

    n: int
    r_n: float
    beta_n: float
    exponent: float
    regime: Literal["small", "large"]
    degenerate: bool = False
    caveats: List[str] = Field(default_factory=list)


class CONFIDENCE_INTERVAL(BaseModel):
    model_config = RESULT_CONFIG

    lower: float
    upper: float
    level: Optional[float] = Field(None, gt=0, lt=1)
    variant: Literal["theorem1", "corollary1", "shifted"]
    regret_bound: Optional[float] = None

    @model_validator(mode="after")
    def check_order(self):
        if self.lower > self.upper:
            raise ValueError(f"lower {self.lower} exceeds upper {self.upper}")
        return self

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float, tol: float = 0.0) -> bool:
        return self.lower - tol <= value <= self.upper + tol


class INTERVAL_REPORT(BaseModel):
    """Everything the `interval` command derives from one RS solve."""

    model_config = RESULT_CONFIG

    rs: RS_SOLUTION
    remainder: REMAINDER
    lipschitz_h: float
    theorem1: CONFIDENCE_INTERVAL
    corollary1: CONFIDENCE_INTERVAL
    generalization_bound: float
    shifted: Optional[CONFIDENCE_INTERVAL] = None


# =================================================================================
# EXPERIMENTS

SWEEP_COLUMNS = ["grid_value", "method", "metric_mean", "metric_se", "replications", "failures"]


class SWEEP_ROW(BaseModel):
    model_config = RESULT_CONFIG

    grid_value: float
    method: str
    metric_mean: float
    metric_se: float
    replications: int
    failures: int = 0


class SWEEP_RESULT(BaseModel):
    model_config = RESULT_CONFIG

    rows: List[SWEEP_ROW] = Field(default_factory=list)
    diagnostics: List[Dict[str, Any]] = Field(default_factory=list)
    metadata: Dict[str, Any] = Field(default_factory=dict)

    def select(self, method: str) -> List[SWEEP_ROW]:
        return [row for row in self.rows if row.method == method]

    def methods(self) -> List[str]:
        return list(dict.fromkeys(row.method for row in self.rows))


class SENSITIVITY_SUMMARY(BaseModel):
    """Shape of a sensitivity sweep; RS grid values are on the 1+ε axis."""

    model_config = RESULT_CONFIG

    method: str
    optimum: float
    optimum_mse: float
    erm_mse: float
    crossover: Optional[float] = None
    band: float
    band_max_mse: float


class CHAIN_REPORT(BaseModel):
    """Exact-distance inequality chains evaluated on finite-support truth.

    Each `*_residual` is the largest violation across the chain's links
    (≤ 0 means every link holds).
    """

    model_config = RESULT_CONFIG

    d_w: float
    lipschitz_h: float
    j_star: float
    true_loss: float
    lower: float
    upper: float
    covered: bool
    chain_residual: float
    chain_holds: bool
    regret: float
    regret_bound: float
    regret_residual: float
    regret_holds: bool
    d_shift: Optional[float] = None
    d_target: Optional[float] = None
    j_tilde: Optional[float] = None
    shifted_true_loss: Optional[float] = None
    shifted_lower: Optional[float] = None
    shifted_upper: Optional[float] = None
    shifted_residual: Optional[float] = None
    shifted_holds: Optional[bool] = None
    shifted_regret: Optional[float] = None
    shifted_regret_bound: Optional[float] = None
    shifted_regret_residual: Optional[float] = None
    shifted_regret_holds: Optional[bool] = None
