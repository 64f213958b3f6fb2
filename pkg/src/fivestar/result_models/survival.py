# fivestar/result_models/survival.py
"""
Result models for the nonparametric estimators and tests.

StepFunction holds a Kaplan-Meier or Nelson-Aalen estimate; the remaining
models hold the outcome of one two-arm comparison. All z statistics follow
one sign convention: negative z favors the test arm A, and the one-tailed
p-value is Phi(z).
"""

from collections.abc import Sequence
from functools import cached_property
from typing import Literal, Self

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

StepKind = Literal['survival', 'cumhaz']


class StepFunction(BaseModel):
    """
    Right-continuous step function with jumps at the event times.

    Attributes:
        kind: 'survival' (Kaplan-Meier, starts at 1) or 'cumhaz'
            (Nelson-Aalen, starts at 0).
        initial_value: Value on [0, first knot).
        knots: Strictly increasing distinct event times.
        values: Estimate on [knot_i, knot_{i+1}).
        variances: Greenwood-type variance at each knot.
        at_risk: Number at risk just before each knot.
        events: Number of events at each knot.
    """

    model_config = ConfigDict(frozen=True)

    kind: StepKind
    initial_value: float
    knots: list[float] = Field(default_factory=list)
    values: list[float] = Field(default_factory=list)
    variances: list[float] = Field(default_factory=list)
    at_risk: list[int] = Field(default_factory=list)
    events: list[int] = Field(default_factory=list)

    @model_validator(mode='after')
    def validate_shape(self) -> Self:
        n: int = len(self.knots)
        for name in ('values', 'variances', 'at_risk', 'events'):
            if len(getattr(self, name)) != n:
                raise ValueError(f'{name} must have one entry per knot ({n})')
        if n > 1 and np.any(np.diff(self.knots) <= 0):
            raise ValueError('knots must be strictly increasing')
        return self

    @cached_property
    def knot_array(self) -> np.ndarray:
        return np.asarray(self.knots, dtype=float)

    @cached_property
    def value_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def _lookup(
        self,
        t: float | Sequence[float] | np.ndarray,
        side: Literal['left', 'right'],
        source: np.ndarray,
        initial: float,
    ) -> np.ndarray:
        index: np.ndarray = (
            np.searchsorted(self.knot_array, np.asarray(t, dtype=float), side=side) - 1
        )
        padded: np.ndarray = np.concatenate(([initial], source))
        return padded[index + 1]

    def evaluate(self, t: float | Sequence[float] | np.ndarray) -> np.ndarray:
        """Value at t (right-continuous: a jump at t is included)."""
        return self._lookup(t, 'right', self.value_array, self.initial_value)

    def left_limit(self, t: float | Sequence[float] | np.ndarray) -> np.ndarray:
        """Value just before t (a jump at t is excluded)."""
        return self._lookup(t, 'left', self.value_array, self.initial_value)

    def variance_at(self, t: float | Sequence[float] | np.ndarray) -> np.ndarray:
        """Variance of the estimate at t (0 before the first knot)."""
        return self._lookup(t, 'right', np.asarray(self.variances, dtype=float), 0.0)

    def restricted_area(self, tau: float) -> float:
        """
        Area under the step function on [0, tau] by exact rectangle sum.

        For a survival curve this is the restricted mean survival time.
        """
        if tau <= 0:
            return 0.0
        inside: np.ndarray = self.knot_array < tau
        edges: np.ndarray = np.concatenate(([0.0], self.knot_array[inside], [tau]))
        heights: np.ndarray = np.concatenate(([self.initial_value], self.value_array[inside]))
        return float(np.sum(heights * np.diff(edges)))

    def median(self) -> float | None:
        """Smallest knot where a survival curve drops to 0.5 or below."""
        if self.kind != 'survival':
            raise ValueError('median() is defined for survival curves only')
        below: np.ndarray = np.flatnonzero(self.value_array <= 0.5)
        return float(self.knot_array[below[0]]) if below.size else None

    def to_frame(self) -> pd.DataFrame:
        """Knot table with columns time, value, variance, at_risk, events."""
        return pd.DataFrame(
            {
                'time': self.knots,
                'value': self.values,
                'variance': self.variances,
                'at_risk': self.at_risk,
                'events': self.events,
            }
        )

    def __repr__(self) -> str:
        return f'StepFunction(kind={self.kind!r}, knots={len(self.knots)})'


class WeightedLogrankResult(BaseModel):
    """
    Fleming-Harrington G(rho, gamma) weighted logrank comparison of arm A vs B.

    Attributes:
        numerator: Weighted observed-minus-expected events in arm A.
        variance: Weighted hypergeometric variance.
        z: numerator / sqrt(variance); 0 when the variance is 0.
        p_value: One-tailed Phi(z).
    """

    model_config = ConfigDict(frozen=True)

    rho: float = Field(..., ge=0.0)
    gamma: float = Field(..., ge=0.0)
    numerator: float
    variance: float = Field(..., ge=0.0)
    z: float
    p_value: float


class MaxComboResult(BaseModel):
    """
    MaxCombo test over the four Fleming-Harrington weights.

    The statistic is the minimum of the four z values (negative favors A) and
    the p-value is the probability that the minimum of a 4-variate standard
    normal with the estimated correlation falls at or below it.
    """

    model_config = ConfigDict(frozen=True)

    weights: list[tuple[float, float]]
    z_values: list[float]
    correlation: list[list[float]]
    statistic: float
    p_value: float
    method: Literal['mvn', 'permutation', 'univariate']


class RmstResult(BaseModel):
    """
    Restricted mean survival time comparison up to tau.

    difference = rmst_a - rmst_b; z = -difference / sqrt(variance) so that a
    longer restricted mean in arm A gives negative z, like every other test.
    """

    model_config = ConfigDict(frozen=True)

    tau: float = Field(..., gt=0.0)
    rmst_a: float
    rmst_b: float
    variance_a: float = Field(..., ge=0.0)
    variance_b: float = Field(..., ge=0.0)
    difference: float
    variance: float = Field(..., ge=0.0)
    z: float
    p_value: float


class StratifiedLogrankResult(BaseModel):
    """Logrank statistic summed over strata (O - E and variances added)."""

    model_config = ConfigDict(frozen=True)

    numerator: float
    variance: float = Field(..., ge=0.0)
    z: float
    p_value: float
    strata_used: list[str]
    dropped_strata: list[str] = Field(default_factory=list)
