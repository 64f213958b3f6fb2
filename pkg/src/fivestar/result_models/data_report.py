# fivestar/result_models/data_report.py
"""Diagnostics report produced by survdata.validate()."""

from pydantic import BaseModel, ConfigDict, Field


class CovariateSummary(BaseModel):
    """
    Summary of one covariate.

    Numeric kinds (continuous, binary) carry mean/sd/min/max; ordinal and
    nominal covariates carry level counts in declared level order.
    """

    model_config = ConfigDict(frozen=True)

    name: str
    kind: str
    mean: float | None = None
    sd: float | None = None
    minimum: float | None = None
    maximum: float | None = None
    level_counts: dict[str, int] | None = None


class ValidationReport(BaseModel):
    """
    Report-only diagnostics of a TrialDataset.

    Attributes:
        n: Subjects.
        n_by_arm: Subjects per arm ('A', 'B').
        events_by_arm: Events per arm.
        duplicate_ids: Ids appearing more than once.
        covariates: One summary per covariate.
        warnings: Conditions likely to break downstream fits.
    """

    model_config = ConfigDict(frozen=True)

    n: int
    n_events: int
    n_by_arm: dict[str, int]
    events_by_arm: dict[str, int]
    duplicate_ids: list[str] = Field(default_factory=list)
    covariates: list[CovariateSummary] = Field(default_factory=list)
    warnings: list[str] = Field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.warnings
