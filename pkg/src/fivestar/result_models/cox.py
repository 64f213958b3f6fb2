# fivestar/result_models/cox.py
"""
Result models for the Cox partial-likelihood machinery.

CoxFit is an unpenalized Newton fit, GtTestResult the proportional-hazards
diagnostic on such a fit, ElasticNetFit a penalized path for one mixing
parameter, and CvSelection the outcome of cross-validating over a psi grid.
"""

from typing import Literal

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field
from scipy import stats

GtTransform = Literal['km', 'rank', 'identity', 'log']


class CoxFit(BaseModel):
    """
    Unpenalized Cox proportional hazards fit (Breslow ties).

    Attributes:
        covariates: Design column names.
        terms: Covariates the design was built from (before one-hot encoding).
        coefficients: Log hazard ratios.
        covariance: Inverse observed information at the estimate.
        log_likelihood: Log partial likelihood at the estimate.
        null_log_likelihood: Log partial likelihood at beta = 0.
        score_at_zero: Score vector at beta = 0.
        information_at_zero: Observed information at beta = 0.
        iterations: Newton iterations used.
        converged: False when the iteration limit was hit or the estimate
            diverged (|beta| > 15 on standardized covariates).
        strata: Distinct stratum labels of a stratified fit, else None.
        n: Subjects used.
        n_events: Events used.
    """

    model_config = ConfigDict(frozen=True)

    covariates: list[str]
    terms: list[str] = Field(default_factory=list)
    coefficients: list[float]
    covariance: list[list[float]]
    log_likelihood: float
    null_log_likelihood: float
    score_at_zero: list[float]
    information_at_zero: list[list[float]]
    iterations: int = Field(..., ge=0)
    converged: bool
    strata: list[str] | None = None
    n: int
    n_events: int

    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(np.asarray(self.covariance)), 0.0, None))

    def wald_z(self) -> np.ndarray:
        return np.asarray(self.coefficients) / self.standard_errors()

    def hazard_ratios(self, alpha: float = 0.05) -> pd.DataFrame:
        """Table of HR with (1 - alpha) Wald confidence limits per covariate."""
        beta: np.ndarray = np.asarray(self.coefficients)
        se: np.ndarray = self.standard_errors()
        q: float = float(stats.norm.ppf(1.0 - alpha / 2.0))
        return pd.DataFrame(
            {
                'covariate': self.covariates,
                'log_hr': beta,
                'se': se,
                'hr': np.exp(beta),
                'ci_lower': np.exp(beta - q * se),
                'ci_upper': np.exp(beta + q * se),
            }
        )

    def score_z(self) -> np.ndarray:
        """
        Per-covariate score z at beta = 0: U_j / sqrt(I_jj).

        For a single arm indicator this is the logrank z.
        """
        info: np.ndarray = np.asarray(self.information_at_zero)
        return np.asarray(self.score_at_zero) / np.sqrt(np.diag(info))

    def score_chisq(self) -> float:
        """Joint score statistic U' I^-1 U at beta = 0."""
        u: np.ndarray = np.asarray(self.score_at_zero)
        info: np.ndarray = np.asarray(self.information_at_zero)
        return float(u @ np.linalg.solve(info, u))

    def lr_statistic(self) -> float:
        """Likelihood-ratio statistic 2 (l(beta_hat) - l(0))."""
        return 2.0 * (self.log_likelihood - self.null_log_likelihood)

    def __repr__(self) -> str:
        return (
            f'CoxFit(covariates={self.covariates}, converged={self.converged}, '
            f'iterations={self.iterations})'
        )


class GtTestResult(BaseModel):
    """Grambsch-Therneau test of proportional hazards, per covariate and global."""

    model_config = ConfigDict(frozen=True)

    transform: GtTransform
    covariates: list[str]
    chisq: list[float]
    p_values: list[float]
    global_chisq: float
    global_df: int
    global_p: float


class ElasticNetFit(BaseModel):
    """
    Elastic-net Cox path for one mixing parameter.

    Coefficients are on the original covariate scale. When the path came out
    of cross-validation, cv_mean and cv_se hold the per-lambda CV deviance.

    Attributes:
        psi: Mixing parameter (1 = lasso, 0 = ridge).
        lambdas: Decreasing penalty grid.
        columns: Design column names (nominal covariates one-hot encoded).
        owners: Covariate owning each design column.
        coefficient_path: One coefficient vector per lambda.
        deviance_path: Training deviance -2 l(beta) per lambda.
        cv_mean: Mean CV deviance per lambda (None outside CV).
        cv_se: Standard error of the CV deviance per lambda.
        converged: Per-lambda convergence of the proximal Newton solver.
    """

    model_config = ConfigDict(frozen=True)

    psi: float = Field(..., ge=0.0, le=1.0)
    lambdas: list[float]
    columns: list[str]
    owners: list[str]
    coefficient_path: list[list[float]]
    deviance_path: list[float]
    cv_mean: list[float] | None = None
    cv_se: list[float] | None = None
    converged: list[bool]

    def coefficients_at(self, index: int) -> dict[str, float]:
        return dict(zip(self.columns, self.coefficient_path[index], strict=True))

    def selected_at(self, index: int) -> list[str]:
        """Covariates (original names) with a nonzero coefficient at lambda[index]."""
        selected: list[str] = []
        for owner, beta in zip(self.owners, self.coefficient_path[index], strict=True):
            if beta != 0.0 and owner not in selected:
                selected.append(owner)
        return selected

    def best_index(self, rule: Literal['lambda-min', 'lambda-1se']) -> int:
        """
        Index of the CV-selected lambda.

        lambda-min takes the smallest mean deviance (ties toward larger lambda);
        lambda-1se the largest lambda whose mean is within one se of that minimum.
        """
        if self.cv_mean is None or self.cv_se is None:
            raise ValueError('Path carries no cross-validation results')
        mean: np.ndarray = np.asarray(self.cv_mean)
        min_index: int = int(np.argmin(mean))  # first occurrence = larger lambda
        if rule == 'lambda-min':
            return min_index
        bound: float = float(mean[min_index] + self.cv_se[min_index])
        return int(np.flatnonzero(mean <= bound)[0])


class CvCell(BaseModel):
    """One (psi, lambda) cell of the CV surface."""

    model_config = ConfigDict(frozen=True)

    psi: float
    lambda_value: float
    mean_deviance: float | None
    se: float | None


class CvSelection(BaseModel):
    """
    Cross-validated choice of (psi, lambda) and the covariates it keeps.

    Attributes:
        psi: Selected mixing parameter.
        lambda_value: Selected penalty.
        rule: lambda-min or lambda-1se.
        selected_covariates: Covariates with a nonzero coefficient, in
            declaration order.
        coefficients: Coefficients at the selection (original scale).
        folds: Number of CV folds.
        seed: Seed used for the fold assignment.
        surface: CV deviance for every (psi, lambda) cell.
    """

    model_config = ConfigDict(frozen=True)

    psi: float
    lambda_value: float
    rule: Literal['lambda-min', 'lambda-1se']
    selected_covariates: list[str]
    coefficients: dict[str, float]
    folds: int
    seed: int
    surface: list[CvCell]

    def surface_frame(self) -> pd.DataFrame:
        """CV surface as a DataFrame with columns psi, lambda, mean_deviance, se."""
        return pd.DataFrame(
            {
                'psi': [cell.psi for cell in self.surface],
                'lambda': [cell.lambda_value for cell in self.surface],
                'mean_deviance': [cell.mean_deviance for cell in self.surface],
                'se': [cell.se for cell in self.surface],
            }
        )
