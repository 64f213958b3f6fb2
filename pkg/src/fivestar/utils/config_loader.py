# fivestar/utils/config_loader.py
"""
Analysis Configuration Loader with Pydantic Validation

This module loads and validates the analysis configuration from a YAML (or
JSON) file. Every tuning constant of the analysis lives here: the covariate
list, the elastic-net grid, the tree thresholds, the AFT distribution set, the
amalgamation levels, the comparator switches, report output and the
simulation harness.

Key Design Decisions:
- Pydantic models mirror the structure of config.yaml
- Validation occurs at load time so a malformed config fails before any data
  is touched
- JSON configs load through the same path (JSON is a subset of YAML)
- All sections have defaults, so a config that only declares covariates works
- A root seed feeds every random step; per-step seeds are derived from it
  unless a section pins its own
"""

import logging
import zlib
from pathlib import Path
from typing import Annotated, Any, Literal, Self, cast

import numpy as np
import yaml
from pydantic import (
    AfterValidator,
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)

from fivestar.models import CovariateSpec

# Set up a logger for this module
logger: logging.Logger = logging.getLogger(__name__)

# =============================================================================
# Type Aliases for Clarity
# =============================================================================

# Valid logging level names recognized by Python's logging module
LogLevelName = Literal['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL']

# Valid compression algorithms supported by pandas.to_parquet()
CompressionType = Literal['snappy', 'gzip', 'brotli', 'lz4', 'zstd'] | None

CvRule = Literal['lambda-min', 'lambda-1se']
PValueMethod = Literal['montecarlo', 'asymptotic']
DistributionName = Literal['weibull', 'lognormal', 'loglogistic']
MaxComboMethod = Literal['mvn', 'permutation']
ScenarioName = Literal['null', 'alt1', 'alt2', 'alt3']
MethodName = Literal[
    '5star_tr', '5star_hr', 'logrank', 'stratified_logrank', 'maxcombo', 'rmst'
]

DEFAULT_PSI_GRID: tuple[float, ...] = tuple(round(0.05 * k, 2) for k in range(1, 20))
ALL_METHODS: tuple[MethodName, ...] = (
    '5star_tr',
    '5star_hr',
    'logrank',
    'stratified_logrank',
    'maxcombo',
    'rmst',
)


def _check_alpha(v: float) -> float:
    if not 0.0 < v < 1.0:
        raise ValueError(f'Significance levels must lie in (0, 1), got {v}')
    return v


def _check_psi_grid(v: tuple[float, ...]) -> tuple[float, ...]:
    for psi in v:
        if not 0.0 <= psi <= 1.0:
            raise ValueError(f'psi values must lie in [0, 1], got {psi}')
    return v


Alpha = Annotated[float, AfterValidator(_check_alpha)]
PsiGrid = Annotated[tuple[float, ...], AfterValidator(_check_psi_grid)]


def derive_seed(root: int, tag: str) -> int:
    """
    Derive a reproducible child seed from a root seed and a step tag.

    The tag is hashed with CRC32 (stable across processes, unlike hash()) and
    mixed with the root seed through numpy's SeedSequence.

    Args:
        root: The root seed.
        tag: Short name of the consuming step, e.g. 'enet' or 'ctree'.

    Returns:
        A 32-bit unsigned integer seed.
    """
    sequence: np.random.SeedSequence = np.random.SeedSequence(
        [root, zlib.crc32(tag.encode('utf-8'))]
    )
    return int(sequence.generate_state(1)[0])


# =============================================================================
# Configuration Models (Schema)
# =============================================================================


class DataSection(BaseModel):
    """
    Schema for the 'data' section of config.yaml.

    Maps CSV columns onto the subject record fields and declares the
    pre-specified covariates (the candidate list fixed before unblinding).
    """

    model_config = ConfigDict(extra='forbid')
    id_column: str = Field(default='id', min_length=1)
    time_column: str = Field(default='time', min_length=1)
    event_column: str = Field(default='event', min_length=1)
    arm_column: str = Field(default='arm', min_length=1)

    arm_labels: tuple[str, str] = Field(
        default=('A', 'B'),
        description='CSV values of the arm column: [test arm, control arm].',
    )

    covariates: list[CovariateSpec] = Field(
        default_factory=list,
        description='Pre-specified baseline covariates, each with name, kind and '
        'levels (ordinal: lowest level first; nominal: level set).',
    )

    @field_validator('arm_labels')
    @classmethod
    def validate_arm_labels(cls, v: tuple[str, str]) -> tuple[str, str]:
        """The two arm labels must be nonempty and distinct."""
        if not v[0] or not v[1]:
            raise ValueError('Arm labels must be nonempty')
        if v[0] == v[1]:
            raise ValueError(f'Arm labels must differ, got {v[0]!r} twice')
        return v

    @field_validator('covariates')
    @classmethod
    def validate_unique_covariates(cls, v: list[CovariateSpec]) -> list[CovariateSpec]:
        names: list[str] = [spec.name for spec in v]
        duplicates: list[str] = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise ValueError(f'Duplicate covariate names: {duplicates}')
        return v

    @model_validator(mode='after')
    def validate_column_names(self) -> Self:
        """Record columns must be distinct and must not collide with covariates."""
        columns: list[str] = [
            self.id_column,
            self.time_column,
            self.event_column,
            self.arm_column,
        ]
        if len(set(columns)) != len(columns):
            raise ValueError(f'id/time/event/arm columns must be distinct: {columns}')
        clashes: set[str] = set(columns) & {spec.name for spec in self.covariates}
        if clashes:
            raise ValueError(f'Covariate names clash with record columns: {sorted(clashes)}')
        return self


class EnetSection(BaseModel):
    """
    Schema for the 'enet' section: elastic-net Cox filtering of covariates.

    The psi grid mixes the lasso and ridge penalties (psi = 1 is the lasso);
    lambda is chosen per psi by k-fold cross-validation.
    """

    model_config = ConfigDict(extra='forbid')
    psi_grid: PsiGrid = Field(default=DEFAULT_PSI_GRID, min_length=1)
    folds: int = Field(default=10, ge=2)
    rule: CvRule = Field(
        default='lambda-min',
        description='lambda-min picks the CV minimum; lambda-1se the largest '
        'lambda within one standard error of it.',
    )
    n_lambda: int = Field(default=100, ge=2)
    lambda_min_ratio: float = Field(default=0.001, gt=0.0, lt=1.0)
    n_jobs: int = Field(
        default=1,
        description='joblib workers across the psi grid (-1 = all cores).',
    )
    seed: int | None = Field(default=None, ge=0)


class CtreeSection(BaseModel):
    """
    Schema for the 'ctree' section: risk stratification by recursive partitioning.

    alpha_3a governs the tree on the covariates, alpha_3b the pooling tree on
    the ordered preliminary strata.
    """

    model_config = ConfigDict(extra='forbid')
    alpha_3a: Alpha = Field(default=0.10)
    alpha_3b: Alpha = Field(default=0.20)
    min_node: int = Field(default=40, ge=2)
    perm_reps: int = Field(default=9999, ge=1)
    pvalue_method: PValueMethod = Field(default='montecarlo')
    max_depth: int | None = Field(default=None, ge=1)
    seed: int | None = Field(default=None, ge=0)


class AftSection(BaseModel):
    """Schema for the 'aft' section: per-stratum AFT fits and model averaging."""

    model_config = ConfigDict(extra='forbid')
    distributions: tuple[DistributionName, ...] = Field(
        default=('weibull', 'lognormal', 'loglogistic'),
        min_length=1,
    )
    alpha: Alpha = Field(default=0.05)
    flag_threshold: float = Field(
        default=0.20,
        gt=0.0,
        lt=1.0,
        description='Strata with Pr(TR > 1) below this value are flagged.',
    )
    n_jobs: int = Field(default=1)

    @field_validator('distributions')
    @classmethod
    def validate_unique(cls, v: tuple[DistributionName, ...]) -> tuple[DistributionName, ...]:
        if len(set(v)) != len(v):
            raise ValueError(f'Distributions listed more than once: {list(v)}')
        return v


class AmalgamSection(BaseModel):
    """Schema for the 'amalgam' section: the combined test and estimate."""

    model_config = ConfigDict(extra='forbid')
    alpha: Alpha = Field(default=0.05, description='Two-sided CI level.')
    test_level: Alpha = Field(
        default=0.025,
        description='One-tailed level: the null is rejected when p < test_level.',
    )


class ComparatorsSection(BaseModel):
    """Schema for the 'comparators' section: the standard analyses run alongside."""

    model_config = ConfigDict(extra='forbid')
    logrank: bool = True
    stratified_logrank: bool = False
    stratify_by: list[str] = Field(
        default_factory=list,
        description='Covariate factors crossed to form comparator strata.',
    )
    maxcombo: bool = True
    maxcombo_method: MaxComboMethod = 'mvn'
    maxcombo_perm_reps: int = Field(default=2000, ge=1)
    rmst: bool = True
    rmst_tau: float | None = Field(default=None, gt=0.0)
    gt: bool = True
    alpha: Alpha = Field(default=0.05)

    @model_validator(mode='after')
    def validate_stratification(self) -> Self:
        if self.stratified_logrank and not self.stratify_by:
            raise ValueError('stratified_logrank requires at least one stratify_by factor')
        return self


class ReportSection(BaseModel):
    """Schema for the 'report' section: where and how the report tables land."""

    model_config = ConfigDict(extra='forbid')
    output_dir: Path = Field(default=Path('fivestar_output'))
    hazard_grid_points: int = Field(default=100, ge=2)
    float_format: str | None = Field(
        default=None,
        description='printf-style float format for CSV tables (None = full precision).',
    )


class SimulationSection(BaseModel):
    """
    Schema for the 'simulation' section: the operating-characteristics harness.

    The analysis overrides below apply only inside simulated replicates and
    exist to keep desk-scale runs tractable.
    """

    model_config = ConfigDict(extra='forbid')
    scenario: ScenarioName = 'alt1'
    reps: int = Field(default=2000, ge=1)
    workers: int = Field(default=1)
    methods: tuple[MethodName, ...] = Field(default=ALL_METHODS, min_length=1)
    replicate_log: bool = False
    compression: CompressionType = 'snappy'
    ctree_pvalue_method: PValueMethod = 'asymptotic'
    psi_grid: PsiGrid | None = None


class LoggingSection(BaseModel):
    """
    Schema for the 'logging' section of config.yaml.

    Console logging is always enabled; file logging is optional and typically
    runs at DEBUG to capture the per-iteration numerics.

    Log Levels (from least to most verbose):
    - ERROR (40): a step failed and is about to raise
    - WARNING (30): dropped strata, degenerate fits, non-convergence
    - INFO (20): step boundaries and headline results
    - DEBUG (10): Newton iterations, node tests, CV cells
    """

    model_config = ConfigDict(extra='forbid')
    console_level: LogLevelName | int = Field(default='INFO')
    file_path: Path | None = Field(default=None)
    file_level: LogLevelName | int | None = Field(default=None)

    @field_validator('console_level', 'file_level')
    @classmethod
    def validate_log_level(
        cls, v: LogLevelName | int | None
    ) -> LogLevelName | int | None:
        """Accept level names (checked by Literal) or the standard numeric values."""
        if v is None or isinstance(v, str):
            return v

        valid_levels: set[int] = {10, 20, 30, 40, 50}
        if v not in valid_levels:
            raise ValueError(
                f'Numeric log level must be one of {valid_levels}, got {v}'
            )
        return v

    @model_validator(mode='after')
    def validate_file_logging_consistency(self) -> Self:
        """
        A file path without a level defaults to DEBUG; a level without a path
        is an error.
        """
        if self.file_path is not None and self.file_level is None:
            self.file_level = 'DEBUG'
            logger.warning(
                'file_path provided without file_level. Defaulting to DEBUG for file logging.'
            )

        if self.file_level is not None and self.file_path is None:
            raise ValueError(
                'file_level is specified but file_path is missing. '
                'Both must be provided to enable file logging.'
            )

        return self

    def get_console_level_int(self) -> int:
        """Console level as the integer used by the logging module."""
        if isinstance(self.console_level, int):
            return self.console_level
        return cast(int, getattr(logging, self.console_level))

    def get_file_level_int(self) -> int | None:
        """File level as an integer, or None if file logging is disabled."""
        if self.file_level is None:
            return None
        if isinstance(self.file_level, int):
            return self.file_level
        return cast(int, getattr(logging, self.file_level))


class AnalysisConfig(BaseModel):
    """
    Root configuration model.

    Usage:
        config = load_config()
        specs = config.data.covariates
        alpha = config.ctree.alpha_3a
        seed = config.step_seed('ctree')
    """

    model_config = ConfigDict(extra='forbid')
    seed: int = Field(default=20240917, ge=0, description='Root seed for every random step.')
    data: DataSection = Field(default_factory=DataSection)
    enet: EnetSection = Field(default_factory=EnetSection)
    ctree: CtreeSection = Field(default_factory=CtreeSection)
    aft: AftSection = Field(default_factory=AftSection)
    amalgam: AmalgamSection = Field(default_factory=AmalgamSection)
    comparators: ComparatorsSection = Field(default_factory=ComparatorsSection)
    report: ReportSection = Field(default_factory=ReportSection)
    simulation: SimulationSection = Field(default_factory=SimulationSection)
    logging: LoggingSection = Field(default_factory=LoggingSection)

    @model_validator(mode='after')
    def validate_stratify_by(self) -> Self:
        """Comparator stratification factors must be declared covariates."""
        declared: set[str] = {spec.name for spec in self.data.covariates}
        unknown: list[str] = [
            name for name in self.comparators.stratify_by if name not in declared
        ]
        if unknown and declared:
            raise ValueError(f'stratify_by names undeclared covariates: {unknown}')
        return self

    def step_seed(self, step: Literal['enet', 'ctree', 'maxcombo']) -> int:
        """
        Seed for one random step.

        A seed pinned in the step's own section wins; otherwise the seed is
        derived from the root seed and the step name.
        """
        pinned: int | None = None
        if step == 'enet':
            pinned = self.enet.seed
        elif step == 'ctree':
            pinned = self.ctree.seed
        return pinned if pinned is not None else derive_seed(self.seed, step)

    def with_seed(self, seed: int) -> 'AnalysisConfig':
        """Return a copy with a different root seed (pinned step seeds are kept)."""
        return self.model_copy(update={'seed': seed})


# =============================================================================
# Loader Logic
# =============================================================================


def _get_default_config_path() -> Path:
    """
    Resolve the absolute path to the packaged config.yaml.

    Anchored on this module's location so it works from a checkout, an
    editable install and a wheel alike:

        src/fivestar/
        ├── config/config.yaml     <-- Target file
        └── utils/config_loader.py <-- This file
    """
    current_file: Path = Path(__file__).resolve()
    package_root: Path = current_file.parent.parent
    return package_root / 'config' / 'config.yaml'


def load_config(config_path: Path | str | None = None) -> AnalysisConfig:
    """
    Load, parse, and validate the configuration file.

    Args:
        config_path: Optional explicit path to a YAML or JSON config file. If
            None, the packaged default config is used.

    Returns:
        A fully validated AnalysisConfig.

    Raises:
        FileNotFoundError: The config file does not exist.
        yaml.YAMLError: The file is not valid YAML/JSON.
        ValidationError: The file parses but the configuration is invalid.
    """
    if config_path:
        path_obj: Path = Path(config_path)
    else:
        path_obj = _get_default_config_path()

    logger.debug('Resolving configuration from: %r', path_obj)

    if not path_obj.exists():
        error_msg: str = f'Configuration file not found at: {path_obj}'
        logger.error(error_msg)
        raise FileNotFoundError(error_msg)

    try:
        with Path.open(path_obj, encoding='utf-8') as f:
            raw_config: dict[str, Any] | None = yaml.safe_load(f)
    except yaml.YAMLError as e:
        logger.error('Failed to parse config file: %r', e)
        raise

    # An empty file means "all defaults"
    if raw_config is None:
        raw_config = {}

    try:
        config: AnalysisConfig = AnalysisConfig.model_validate(raw_config)
        logger.debug('Configuration validated successfully.')
        return config
    except ValidationError as e:
        logger.error('Configuration validation failed: %r', e)
        raise
