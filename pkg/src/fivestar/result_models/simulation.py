# fivestar/result_models/simulation.py
"""
Models for the simulation harness: scenario definitions, per-replicate
outcomes and the aggregated operating characteristics.
"""

import math
from typing import Literal, Self

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

Quad = tuple[float, float, float, float]

# Hazard ratios per true stratum (highest risk first) for the preset scenarios
_PRESET_THETA: dict[str, Quad] = {
    'null': (1.0, 1.0, 1.0, 1.0),
    'alt1': (0.7, 0.7, 0.7, 0.7),
    'alt2': (0.42, 0.7, 0.86, 0.95),
    'alt3': (0.95, 0.86, 0.7, 0.42),
}


class ScenarioSpec(BaseModel):
    """
    Data-generating design of one simulated trial.

    Four true risk strata are defined by X1, X2 (binary) and X26 <= cutoff.
    Survival in stratum i and arm B is Weibull with shape kappa_i and median
    medians_b[i]; arm A scales it so that the within-stratum hazard ratio is
    theta_i (proportional hazards within each stratum).

    Attributes:
        name: Scenario label.
        theta: Hazard ratio A vs B per true stratum.
        kappa: Weibull shape per true stratum.
        medians_b: Control-arm median survival (years) per true stratum.
        prevalence: Multinomial stratum probabilities (per arm).
        n_per_arm: Subjects randomized to each arm.
        target_events: Pooled events at which follow-up stops.
        accrual: Entry times are Uniform(0, accrual).
        n_covariates: Total covariates (the first n_binary are binary).
        n_binary: Number of binary covariates.
        trio_correlation: Target pairwise correlation of X1, X2, X26.
        noise_sd: SD of the N(0, sd) draws for all other correlations.
        cutoff: Dichotomization point of X26.
    """

    model_config = ConfigDict(frozen=True, extra='forbid')

    name: str
    theta: Quad
    kappa: Quad = (2.5, 3.0, 3.5, 4.0)
    medians_b: Quad = (0.5, 0.7, 0.9, 1.1)
    prevalence: Quad = (0.25, 0.25, 0.25, 0.25)
    n_per_arm: int = Field(default=300, ge=4)
    target_events: int = Field(default=330, ge=1)
    accrual: float = Field(default=0.75, gt=0.0)
    n_covariates: int = Field(default=50, ge=26)
    n_binary: int = Field(default=25, ge=2)
    trio_correlation: float = Field(default=0.2, gt=-1.0, lt=1.0)
    noise_sd: float = Field(default=0.15, ge=0.0)
    cutoff: float = 0.4

    @field_validator('theta', 'kappa', 'medians_b')
    @classmethod
    def validate_positive(cls, v: Quad) -> Quad:
        if any(x <= 0 for x in v):
            raise ValueError(f'values must be positive, got {v}')
        return v

    @model_validator(mode='after')
    def validate_design(self) -> Self:
        if any(b <= a for a, b in zip(self.medians_b, self.medians_b[1:], strict=False)):
            raise ValueError('medians_b must be strictly ascending (highest risk first)')
        if abs(sum(self.prevalence) - 1.0) > 1e-9 or min(self.prevalence) < 0:
            raise ValueError('prevalence must be a probability vector')
        if self.target_events > 2 * self.n_per_arm:
            raise ValueError('target_events exceeds the number of subjects')
        if self.n_binary >= 26 or self.n_binary >= self.n_covariates:
            raise ValueError('X26 must be continuous: n_binary must be below 26')
        return self

    @classmethod
    def preset(cls, name: str) -> 'ScenarioSpec':
        """One of the four standard scenarios: null, alt1, alt2, alt3."""
        key: str = name.lower().replace('-', '')
        if key not in _PRESET_THETA:
            raise ValueError(f'Unknown scenario {name!r}; choose from {sorted(_PRESET_THETA)}')
        return cls(name=key, theta=_PRESET_THETA[key])

    @property
    def n(self) -> int:
        return 2 * self.n_per_arm


class TrueEffects(BaseModel):
    """
    True treatment effects of a scenario.

    Attributes:
        delta: Log time ratio per true stratum, -log(theta_i) / kappa_i.
        beta: Log hazard ratio per true stratum.
        gamma: Average time ratio exp(sum f_i delta_i).
        theta: Average hazard ratio exp(sum f_i beta_i).
    """

    model_config = ConfigDict(frozen=True)

    delta: list[float]
    beta: list[float]
    gamma: float
    theta: float

    @property
    def log_gamma(self) -> float:
        return math.log(self.gamma)


MethodName = Literal[
    '5star_tr', '5star_hr', 'logrank', 'stratified_logrank', 'maxcombo', 'rmst'
]


class ReplicateOutcome(BaseModel):
    """
    Outcome of one method on one simulated trial.

    estimate/ci_* are on the ratio scale (TR for 5star_tr, HR otherwise) and
    are None for methods without an estimand or when the method failed.
    n_enrolled is the realized trial size, which falls short of the planned
    size when subjects would enter after the final analysis time.
    """

    model_config = ConfigDict(frozen=True)

    rep: int
    method: MethodName
    failed: bool = False
    error: str | None = None
    p_value: float | None = None
    rejected: bool = False
    estimate: float | None = None
    ci_lower: float | None = None
    ci_upper: float | None = None
    seconds: float | None = None
    n_enrolled: int | None = None


class ReplicateSteps(BaseModel):
    """Step-wise bookkeeping of one replicate (covariates advanced and used)."""

    model_config = ConfigDict(frozen=True)

    rep: int
    advanced: list[str] = Field(default_factory=list)
    tree_covariates: list[str] = Field(default_factory=list)
    n_strata: int | None = None


class SimResult(BaseModel):
    """
    Operating characteristics of one method under one scenario.

    Attributes:
        rejection_rate: Share of successful replicates rejecting at the test level
            (type I error under the null, power otherwise).
        mc_se: Monte Carlo standard error of rejection_rate.
        mean_percent_bias: Mean of 100 (estimate - truth) / truth on the ratio
            scale; None for methods without an estimand.
        ci_coverage: Share of CIs containing the truth.
        failures: Replicates where the method raised.
    """

    model_config = ConfigDict(frozen=True)

    scenario: str
    method: MethodName
    reps: int
    failures: int = 0
    rejection_rate: float = Field(..., ge=0.0, le=1.0)
    mc_se: float = Field(..., ge=0.0)
    mean_percent_bias: float | None = None
    ci_coverage: float | None = Field(default=None, ge=0.0, le=1.0)
    runtime_seconds: float | None = None


class RecoveryMetrics(BaseModel):
    """
    How often the blinded steps recover the prognostic covariates.

    Attributes:
        advance_rate: Per prognostic covariate, share of replicates where the
            elastic net advanced it.
        all_advanced_rate: Share advancing all prognostic covariates.
        mean_advanced: Mean number of covariates advanced.
        tree_uses_all_rate: Share whose final tree splits on at least all the
            prognostic covariates.
        tree_only_correct_rate: Share whose tree splits on exactly them.
        mean_tree_covariates: Mean number of covariates the tree splits on.
        mean_strata: Mean number of final strata.
    """

    model_config = ConfigDict(frozen=True)

    scenario: str
    reps: int
    advance_rate: dict[str, float]
    all_advanced_rate: float
    mean_advanced: float
    tree_uses_all_rate: float
    tree_only_correct_rate: float
    mean_tree_covariates: float
    mean_strata: float


class SimSummary(BaseModel):
    """Everything written to table2.json."""

    model_config = ConfigDict(frozen=True)

    scenario: ScenarioSpec
    truth: TrueEffects
    reps: int
    seed: int
    results: list[SimResult]
    recovery: RecoveryMetrics | None = None


class SimReport(BaseModel):
    """Everything written to table2.json: one summary per scenario run."""

    model_config = ConfigDict(frozen=True)

    summaries: list[SimSummary] = Field(default_factory=list)
