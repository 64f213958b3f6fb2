# fivestar/result_models/effects.py
"""
Result models for the per-stratum treatment effects.

AftFit is one parametric fit; StratumEffect combines the fits of one stratum
by AIC model averaging and carries the supplemental hazard-ratio block.
"""

from typing import Literal, Self

from pydantic import BaseModel, ConfigDict, Field, model_validator

Distribution = Literal['weibull', 'lognormal', 'loglogistic']


class AftFit(BaseModel):
    """
    Accelerated failure time fit log T = mu + delta * I(arm A) + sigma * eps.

    Attributes:
        distribution: Error law (Weibull = extreme value on log scale).
        mu: Intercept on the log-time scale.
        delta: Treatment effect on the log-time scale (log time ratio).
        sigma: Scale (> 0).
        log_likelihood: Maximized log-likelihood on the time scale.
        aic: -2 log_likelihood + 2 * 3.
        var_delta: Variance of delta from the inverse observed information.
        converged: Gradient max-norm reached 1e-8 within the iteration limit.
    """

    model_config = ConfigDict(frozen=True)

    distribution: Distribution
    mu: float
    delta: float
    sigma: float = Field(..., gt=0.0)
    log_likelihood: float
    aic: float
    var_delta: float = Field(..., ge=0.0)
    se_mu: float
    se_delta: float
    se_sigma: float
    iterations: int
    converged: bool
    n: int
    events_a: int
    events_b: int


class HrBlock(BaseModel):
    """
    Supplemental Cox hazard ratio of arm A vs B within one stratum.

    Attributes:
        log_hr: Cox estimate beta (negative favors A).
        se: Standard error of beta.
        hr, ci_lower, ci_upper: exp(beta) with Wald limits.
        pr_hr_lt_1: Phi(-beta / se), the normal-approximation Pr(HR < 1).
        gt_p: Grambsch-Therneau global p-value, None when unavailable.
        weibull_hr: exp(-delta / sigma) from the Weibull AFT fit, if converged.
    """

    model_config = ConfigDict(frozen=True)

    log_hr: float
    se: float
    hr: float
    ci_lower: float
    ci_upper: float
    pr_hr_lt_1: float
    converged: bool
    gt_p: float | None = None
    weibull_hr: float | None = None


class StratumEffect(BaseModel):
    """
    Model-averaged treatment effect in one final stratum.

    Attributes:
        stratum: Final stratum number (1 = highest risk).
        n: Subjects in the stratum (n_a + n_b).
        delta_hat: Averaged log time ratio.
        v: Variance of delta_hat from the model-averaging formula.
        weights: AIC weight per distribution (0 for excluded fits).
        fits: Every attempted AFT fit.
        tr, tr_ci_lower, tr_ci_upper: Time ratio exp(delta_hat) and its CI.
        pr_tr_gt_1: Phi(delta_hat / sqrt(v)).
        flagged: pr_tr_gt_1 below the flag threshold.
        hr: Supplemental Cox block (None if the Cox fit failed).
    """

    model_config = ConfigDict(frozen=True)

    stratum: int = Field(..., ge=1)
    n: int
    n_a: int
    n_b: int
    events_a: int
    events_b: int
    delta_hat: float
    v: float = Field(..., gt=0.0)
    weights: dict[str, float]
    fits: list[AftFit]
    tr: float
    tr_ci_lower: float
    tr_ci_upper: float
    pr_tr_gt_1: float
    flagged: bool
    hr: HrBlock | None = None
    prelim_ranks: list[int] = Field(default_factory=list)

    @model_validator(mode='after')
    def validate_weights(self) -> Self:
        total: float = sum(self.weights.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f'model weights must sum to 1, got {total}')
        if self.tr_ci_lower > self.tr_ci_upper:
            raise ValueError('CI bounds out of order')
        return self


class ExcludedStratum(BaseModel):
    """A final stratum left out of the combined analysis, with the reason."""

    model_config = ConfigDict(frozen=True)

    stratum: int
    n: int
    reason: str
