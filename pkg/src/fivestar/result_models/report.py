# fivestar/result_models/report.py
"""
Result models for the full analysis report and the comparator analyses.

AnalysisReport is the single JSON document written by the pipeline; its
*_frame() helpers produce the CSV tables written next to it.
"""

from typing import Self

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .amalgam import AmalgamResult
from .cox import CvCell, GtTestResult
from .effects import ExcludedStratum, StratumEffect
from .survival import MaxComboResult, RmstResult
from .tree import RiskTree, StratumAssignment


class CoxComparison(BaseModel):
    """
    Logrank test plus Cox hazard ratio for arm A vs B, optionally stratified.

    z and p_value are the (stratified) logrank statistic, which equals the Cox
    score test on the arm indicator.
    """

    model_config = ConfigDict(frozen=True)

    z: float
    p_value: float
    log_hr: float
    se: float
    hr: float
    ci_lower: float
    ci_upper: float
    converged: bool
    strata: list[str] | None = None
    dropped_strata: list[str] = Field(default_factory=list)


class ComparatorBlock(BaseModel):
    """Standard analyses run next to the stratified routine. Failed ones are in errors."""

    model_config = ConfigDict(frozen=True)

    logrank: CoxComparison | None = None
    stratified: CoxComparison | None = None
    maxcombo: MaxComboResult | None = None
    rmst: RmstResult | None = None
    gt: GtTestResult | None = None
    errors: dict[str, str] = Field(default_factory=dict)


class Step2Report(BaseModel):
    """Covariate filtering outcome."""

    model_config = ConfigDict(frozen=True)

    selected_covariates: list[str]
    psi: float | None = None
    lambda_value: float | None = None
    rule: str | None = None
    coefficients: dict[str, float] = Field(default_factory=dict)
    surface: list[CvCell] = Field(default_factory=list)


class StratumRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    stratum: int
    prelim_ranks: list[int]
    n: int
    n_events: int
    restricted_area: float


class Step3Report(BaseModel):
    """Risk stratification outcome."""

    model_config = ConfigDict(frozen=True)

    tree: RiskTree | None = None
    pool_tree: RiskTree | None = None
    assignment: StratumAssignment
    strata: list[StratumRow]


class Step4Report(BaseModel):
    model_config = ConfigDict(frozen=True)

    effects: list[StratumEffect]
    excluded: list[ExcludedStratum] = Field(default_factory=list)


class Step5Report(BaseModel):
    model_config = ConfigDict(frozen=True)

    tr: AmalgamResult
    hr: AmalgamResult | None = None


class CurvePoint(BaseModel):
    """One knot of a Kaplan-Meier curve. scope is 'overall' or 'stratum <q>'."""

    model_config = ConfigDict(frozen=True)

    scope: str
    arm: str
    time: float
    survival: float
    variance: float


class HazardPoint(BaseModel):
    """One grid point of a kernel-smoothed hazard curve."""

    model_config = ConfigDict(frozen=True)

    scope: str
    arm: str
    time: float
    hazard: float
    log_hazard: float | None


class AnalysisReport(BaseModel):
    """
    Everything produced by one run of the stratified analysis.

    Attributes:
        n, n_a, n_b, n_events: Dataset counts.
        seed: Root seed of the run.
        covariates: Pre-specified covariates.
        step2 .. step5: Outcome of each step.
        comparators: Standard analyses (empty block when disabled).
        km_curves, hazard_curves: Plot tables.
        warnings: Human-readable notes (dropped strata, flags, failures).
    """

    model_config = ConfigDict(frozen=True)

    n: int
    n_a: int
    n_b: int
    n_events: int
    seed: int
    covariates: list[str]
    step2: Step2Report
    step3: Step3Report
    step4: Step4Report
    step5: Step5Report
    comparators: ComparatorBlock = Field(default_factory=ComparatorBlock)
    km_curves: list[CurvePoint] = Field(default_factory=list)
    hazard_curves: list[HazardPoint] = Field(default_factory=list)
    warnings: list[str] = Field(default_factory=list)

    @model_validator(mode='after')
    def validate_partition(self) -> Self:
        """Stratum rows must partition the N subjects."""
        total: int = sum(row.n for row in self.step3.strata)
        if total != self.n:
            raise ValueError(f'Stratum rows cover {total} subjects, expected {self.n}')
        return self

    # -------------------------------------------------------------------------
    # Tables
    # -------------------------------------------------------------------------

    def strata_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {
                    'stratum': row.stratum,
                    'prelim_ranks': '+'.join(str(rank) for rank in row.prelim_ranks),
                    'n': row.n,
                    'n_events': row.n_events,
                    'restricted_area': row.restricted_area,
                }
                for row in self.step3.strata
            ],
            columns=['stratum', 'prelim_ranks', 'n', 'n_events', 'restricted_area'],
        )

    def forest_frame(self) -> pd.DataFrame:
        """One row per analyzed stratum plus an 'Overall' row."""
        columns: list[str] = [
            'stratum', 'n', 'tr', 'tr_ci_lower', 'tr_ci_upper', 'pr_tr_gt_1',
            'flagged', 'hr', 'hr_ci_lower', 'hr_ci_upper', 'pr_hr_lt_1', 'gt_p',
        ]  # fmt: skip
        rows: list[dict[str, object]] = []
        for effect in self.step4.effects:
            hr = effect.hr
            rows.append(
                {
                    'stratum': str(effect.stratum),
                    'n': effect.n,
                    'tr': effect.tr,
                    'tr_ci_lower': effect.tr_ci_lower,
                    'tr_ci_upper': effect.tr_ci_upper,
                    'pr_tr_gt_1': effect.pr_tr_gt_1,
                    'flagged': effect.flagged,
                    'hr': hr.hr if hr else None,
                    'hr_ci_lower': hr.ci_lower if hr else None,
                    'hr_ci_upper': hr.ci_upper if hr else None,
                    'pr_hr_lt_1': hr.pr_hr_lt_1 if hr else None,
                    'gt_p': hr.gt_p if hr else None,
                }
            )
        tr: AmalgamResult = self.step5.tr
        hr_overall: AmalgamResult | None = self.step5.hr
        rows.append(
            {
                'stratum': 'Overall',
                'n': sum(effect.n for effect in self.step4.effects),
                'tr': tr.estimate,
                'tr_ci_lower': tr.ci_lower,
                'tr_ci_upper': tr.ci_upper,
                'pr_tr_gt_1': None,
                'flagged': None,
                'hr': hr_overall.estimate if hr_overall else None,
                'hr_ci_lower': hr_overall.ci_lower if hr_overall else None,
                'hr_ci_upper': hr_overall.ci_upper if hr_overall else None,
                'pr_hr_lt_1': None,
                'gt_p': self.comparators.gt.global_p if self.comparators.gt else None,
            }
        )
        return pd.DataFrame(rows, columns=columns)

    def km_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [point.model_dump() for point in self.km_curves],
            columns=['scope', 'arm', 'time', 'survival', 'variance'],
        )

    def hazard_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [point.model_dump() for point in self.hazard_curves],
            columns=['scope', 'arm', 'time', 'hazard', 'log_hazard'],
        )

    def cv_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {
                    'psi': cell.psi,
                    'lambda': cell.lambda_value,
                    'mean_deviance': cell.mean_deviance,
                    'se': cell.se,
                }
                for cell in self.step2.surface
            ],
            columns=['psi', 'lambda', 'mean_deviance', 'se'],
        )
