# fivestar/result_models/amalgam.py
"""Result model for the amalgamated test and estimate across strata."""

from typing import Literal, Self

from pydantic import BaseModel, ConfigDict, Field, model_validator

Track = Literal['TR', 'HR']
WeightScheme = Literal['by-n', 'by-n-over-sd']


class AmalgamResult(BaseModel):
    """
    Combined one-tailed test and average effect over the usable strata.

    For the TR track delta_hat is the average log time ratio and estimate is
    the average time ratio exp(delta_hat). For the HR track the per-stratum
    inputs are -log HR, so delta_hat is minus the average log hazard ratio and
    estimate is the average hazard ratio exp(-delta_hat); its CI limits are
    mapped accordingly.

    Attributes:
        z_i: Sample-size weighted statistic.
        z_ii: Sample-size weighted sum of stratum z statistics.
        z_max: max(z_i, z_ii).
        rho_hat: Estimated correlation of z_i and z_ii.
        p_value: One-tailed p-value of z_max under its exact null law.
        weight_scheme: by-n when z_i attained the max (ties included), else
            by-n-over-sd.
        rejected: p_value < test_level.
        strata_used: Final strata numbers entering the sums.
    """

    model_config = ConfigDict(frozen=True)

    track: Track
    z_i: float
    z_ii: float
    z_max: float
    rho_hat: float = Field(..., gt=0.0, le=1.0 + 1e-12)
    p_value: float = Field(..., gt=0.0, lt=1.0)
    delta_hat: float
    v_delta: float = Field(..., gt=0.0)
    estimate: float
    ci_lower: float
    ci_upper: float
    weight_scheme: WeightScheme
    alpha: float
    test_level: float
    rejected: bool
    strata_used: list[int]

    @model_validator(mode='after')
    def validate_consistency(self) -> Self:
        if self.ci_lower > self.ci_upper:
            raise ValueError('CI bounds out of order')
        expected: WeightScheme = 'by-n' if self.z_i >= self.z_ii else 'by-n-over-sd'
        if self.weight_scheme != expected:
            raise ValueError('weight scheme does not match the statistic attaining the max')
        return self
