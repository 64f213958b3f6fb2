# fivestar/models.py
"""
Pydantic models for trial data entering the analysis.

These models describe the input side of every analysis: the pre-specified
covariate list, one record per randomized subject, and the dataset containers.
Two dataset types exist on purpose:

- TrialDataset carries the arm label of every subject.
- BlindedDataset is built from BlindedRecord objects, which have no arm field
  and forbid extra fields, so arm labels cannot be smuggled into the blinded
  steps of the analysis.

Both datasets are frozen after construction and expose cached numpy views
(times, events, covariate codes, design matrices) for the numerical modules.
"""

import math
from collections.abc import Sequence
from functools import cached_property
from typing import Literal, Self

import numpy as np
import pandas as pd
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)

from fivestar.exceptions import DataValidationError

# =============================================================================
# Type Aliases
# =============================================================================

CovariateKind = Literal['continuous', 'ordinal', 'nominal', 'binary']

# Stored covariate values: float for continuous, 0/1 for binary, level name for
# ordinal and nominal covariates.
CovariateValue = float | int | str

ArmLabel = Literal['A', 'B']

# Column name used for the treatment indicator when a design matrix is built
# from a TrialDataset.
ARM_COLUMN: str = 'arm'

_TRUE_TOKENS: frozenset[str] = frozenset({'1', '1.0', 'true', 'True', 'TRUE'})
_FALSE_TOKENS: frozenset[str] = frozenset({'0', '0.0', 'false', 'False', 'FALSE'})


def _parse_flag(raw: str, what: str) -> bool:
    """Parse a 0/1 cell (also accepting 0.0/1.0 and true/false)."""
    if raw in _TRUE_TOKENS:
        return True
    if raw in _FALSE_TOKENS:
        return False
    raise ValueError(f'{what} must be 0 or 1, got {raw!r}')


def _cell_text(value: object) -> str:
    """Text of a DataFrame cell; NaN/None become the empty string."""
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ''
    return str(value).strip()


# =============================================================================
# Covariate Specification
# =============================================================================


class CovariateSpec(BaseModel):
    """
    A pre-specified baseline covariate.

    Attributes:
        name: Identifier of the covariate (also its CSV column name).
        kind: continuous, ordinal, nominal or binary.
        levels: Ordered level names for ordinal covariates (lowest first) or the
            level set for nominal covariates. Must be absent for the other kinds.
    """

    model_config = ConfigDict(extra='forbid', frozen=True)

    name: str = Field(
        ...,
        min_length=1,
        pattern=r'^[A-Za-z_][A-Za-z0-9_.]*$',
        description='Covariate identifier, also used as the CSV column name.',
    )
    kind: CovariateKind = Field(..., description='Measurement scale of the covariate.')
    levels: tuple[str, ...] | None = Field(
        default=None,
        description='Level order (ordinal) or level set (nominal).',
    )

    @model_validator(mode='after')
    def validate_levels(self) -> Self:
        """Ordinal and nominal covariates need nonempty, unique levels; others none."""
        if self.kind in {'ordinal', 'nominal'}:
            if not self.levels:
                raise ValueError(
                    f'Covariate {self.name!r} of kind {self.kind} needs a nonempty level list'
                )
            if len(set(self.levels)) != len(self.levels):
                raise ValueError(f'Covariate {self.name!r} has duplicate levels')
        elif self.levels is not None:
            raise ValueError(
                f'Covariate {self.name!r} of kind {self.kind} must not declare levels'
            )
        return self

    def parse(self, raw: str) -> CovariateValue:
        """
        Convert a raw text cell into a stored covariate value.

        Args:
            raw: The cell content, already stripped of surrounding whitespace.

        Returns:
            float for continuous, int (0 or 1) for binary, the level name otherwise.

        Raises:
            ValueError: If the cell is empty or does not conform to the spec.
        """
        if raw == '':
            raise ValueError('missing covariate value')

        if self.kind == 'continuous':
            try:
                value: float = float(raw)
            except ValueError as e:
                raise ValueError(f'unparseable continuous value {raw!r}') from e
            if not math.isfinite(value):
                raise ValueError(f'non-finite continuous value {raw!r}')
            return value

        if self.kind == 'binary':
            return int(_parse_flag(raw, 'binary value'))

        # ordinal / nominal
        if self.levels is None or raw not in self.levels:
            raise ValueError(f'unknown level {raw!r} (declared: {list(self.levels or ())})')
        return raw

    def check(self, value: CovariateValue) -> None:
        """
        Verify that an already-typed value conforms to this spec.

        Raises:
            ValueError: If the value has the wrong type or an unknown level.
        """
        if self.kind == 'continuous':
            if isinstance(value, str) or not math.isfinite(float(value)):
                raise ValueError(f'expected a finite number, got {value!r}')
        elif self.kind == 'binary':
            if isinstance(value, str) or value not in (0, 1):
                raise ValueError(f'expected 0 or 1, got {value!r}')
        elif not isinstance(value, str) or self.levels is None or value not in self.levels:
            raise ValueError(f'unknown level {value!r}')

    def encode(self, value: CovariateValue) -> float:
        """
        Numeric code of a value.

        Continuous values are returned unchanged, binary values as 0/1, ordinal
        and nominal values as their 0-based position in the declared levels.
        """
        if self.kind in {'continuous', 'binary'}:
            return float(value)
        assert self.levels is not None
        return float(self.levels.index(str(value)))

    @property
    def is_ordered(self) -> bool:
        """True when splits take the form 'code <= threshold'."""
        return self.kind in {'continuous', 'ordinal', 'binary'}


# =============================================================================
# Subject Records
# =============================================================================


class _RecordBase(BaseModel):
    """Fields shared by blinded and unblinded subject records."""

    model_config = ConfigDict(extra='forbid', frozen=True)

    id: str = Field(..., min_length=1, description='Subject identifier.')
    time: float = Field(..., description='Observed time in study units.')
    event: bool = Field(..., description='True if the event was observed.')
    covariates: dict[str, CovariateValue] = Field(
        default_factory=dict,
        description='Covariate values keyed by covariate name.',
    )

    @field_validator('time')
    @classmethod
    def validate_time(cls, v: float) -> float:
        """Observed times must be finite and nonnegative."""
        if not math.isfinite(v):
            raise ValueError(f'non-finite time {v!r}')
        if v < 0:
            raise ValueError(f'negative time {v!r}')
        return v


class SubjectRecord(_RecordBase):
    """One randomized subject including the assigned arm (A = test, B = control)."""

    arm: ArmLabel = Field(..., description='Assigned arm: A (test) or B (control).')


class BlindedRecord(_RecordBase):
    """One subject with the arm assignment withheld."""


# =============================================================================
# Datasets
# =============================================================================


class _DatasetBase(BaseModel):
    """
    Shared behavior of the blinded and unblinded datasets.

    Subclasses declare the concrete record type. Numeric views are computed
    lazily and cached on the frozen instance.
    """

    model_config = ConfigDict(extra='forbid', frozen=True)

    specs: tuple[CovariateSpec, ...] = Field(
        default=(),
        description='Pre-specified covariates, in declaration order.',
    )
    records: Sequence[_RecordBase]

    @field_validator('specs')
    @classmethod
    def validate_unique_names(
        cls, v: tuple[CovariateSpec, ...]
    ) -> tuple[CovariateSpec, ...]:
        """Covariate names must be unique and must not shadow the arm column."""
        names: list[str] = [spec.name for spec in v]
        duplicates: set[str] = {name for name in names if names.count(name) > 1}
        if duplicates:
            raise ValueError(f'Duplicate covariate names: {sorted(duplicates)}')
        if ARM_COLUMN in names:
            raise ValueError(f'{ARM_COLUMN!r} is reserved for the treatment indicator')
        return v

    @model_validator(mode='after')
    def validate_records(self) -> Self:
        """
        Check every record against the covariate specs and require an event.

        Error messages name the 1-based row and the covariate so that problems
        can be located in the source file.
        """
        if not self.records:
            raise ValueError('Dataset contains no records')

        expected: set[str] = {spec.name for spec in self.specs}
        for row, record in enumerate(self.records, start=1):
            present: set[str] = set(record.covariates)
            if present != expected:
                missing: list[str] = sorted(expected - present)
                extra: list[str] = sorted(present - expected)
                raise ValueError(
                    f'Row {row} (id {record.id!r}): covariates do not match specs '
                    f'(missing {missing}, unexpected {extra})'
                )
            for spec in self.specs:
                try:
                    spec.check(record.covariates[spec.name])
                except ValueError as e:
                    raise ValueError(f'Row {row}, column {spec.name!r}: {e}') from e

        if not any(record.event for record in self.records):
            raise ValueError('Dataset must contain at least one event')
        return self

    # -------------------------------------------------------------------------
    # Numeric views
    # -------------------------------------------------------------------------

    @property
    def n(self) -> int:
        """Number of subjects."""
        return len(self.records)

    @cached_property
    def ids(self) -> list[str]:
        return [record.id for record in self.records]

    @cached_property
    def times(self) -> np.ndarray:
        return np.array([record.time for record in self.records], dtype=float)

    @cached_property
    def events(self) -> np.ndarray:
        return np.array([record.event for record in self.records], dtype=bool)

    @cached_property
    def covariate_names(self) -> list[str]:
        return [spec.name for spec in self.specs]

    @cached_property
    def code_matrix(self) -> np.ndarray:
        """N x p matrix of covariate codes in spec order (see CovariateSpec.encode)."""
        matrix: np.ndarray = np.empty((self.n, len(self.specs)), dtype=float)
        for j, spec in enumerate(self.specs):
            matrix[:, j] = [spec.encode(r.covariates[spec.name]) for r in self.records]
        return matrix

    def spec(self, name: str) -> CovariateSpec:
        """Look up a covariate spec by name."""
        for spec in self.specs:
            if spec.name == name:
                return spec
        raise KeyError(f'Unknown covariate {name!r}')

    def covariate_codes(self, name: str) -> np.ndarray:
        """Numeric codes of one covariate, aligned with record order."""
        return self.code_matrix[:, self.covariate_names.index(name)]

    def design_matrix(
        self, names: Sequence[str] | None = None
    ) -> tuple[np.ndarray, list[str], list[str]]:
        """
        Build a numeric design matrix for regression.

        Continuous covariates enter raw, binary as 0/1, ordinal as 0-based rank
        codes. Nominal covariates are one-hot encoded with the first declared
        level as reference.

        Args:
            names: Covariates to include (default: all, in spec order).

        Returns:
            Tuple of (matrix, column names, owning covariate name per column).
        """
        selected: list[str] = list(names) if names is not None else self.covariate_names
        columns: list[np.ndarray] = []
        column_names: list[str] = []
        owners: list[str] = []
        for name in selected:
            spec: CovariateSpec = self.spec(name)
            codes: np.ndarray = self.covariate_codes(name)
            if spec.kind == 'nominal':
                assert spec.levels is not None
                for level_index, level in enumerate(spec.levels[1:], start=1):
                    columns.append((codes == level_index).astype(float))
                    column_names.append(f'{name}[{level}]')
                    owners.append(name)
            else:
                columns.append(codes)
                column_names.append(name)
                owners.append(name)
        matrix: np.ndarray = (
            np.column_stack(columns) if columns else np.empty((self.n, 0), dtype=float)
        )
        return matrix, column_names, owners

    def _frame_columns(self) -> dict[str, list[object]]:
        columns: dict[str, list[object]] = {
            'id': list(self.ids),
            'time': self.times.tolist(),
            'event': self.events.astype(int).tolist(),
        }
        for spec in self.specs:
            columns[spec.name] = [r.covariates[spec.name] for r in self.records]
        return columns

    def to_frame(self) -> pd.DataFrame:
        """Export the dataset as a DataFrame (one row per subject)."""
        return pd.DataFrame(self._frame_columns())


class TrialDataset(_DatasetBase):
    """
    Unblinded trial data: one SubjectRecord per randomized subject.

    Attributes:
        specs: Pre-specified covariates.
        records: Subject records with arm labels.
    """

    records: list[SubjectRecord]

    @classmethod
    def from_frame(
        cls,
        frame: pd.DataFrame,
        specs: Sequence[CovariateSpec],
        *,
        id_column: str = 'id',
        time_column: str = 'time',
        event_column: str = 'event',
        arm_column: str = 'arm',
        arm_labels: tuple[str, str] = ('A', 'B'),
    ) -> 'TrialDataset':
        """
        Build a validated dataset from a DataFrame.

        Every cell is read through its text form, so a frame loaded with
        dtype=str and an in-memory frame with numeric columns behave alike.
        Missing values are rejected, never imputed.

        Args:
            frame: One row per subject.
            specs: Pre-specified covariates; one column per spec is required.
            id_column: Name of the subject id column.
            time_column: Name of the observed time column.
            event_column: Name of the event column (1 = event, 0 = censored).
            arm_column: Name of the arm column.
            arm_labels: Values of the arm column for (test arm, control arm).

        Returns:
            The validated TrialDataset, records in frame order.

        Raises:
            DataValidationError: On a missing column or any invalid cell. The
                message names the 1-based data row and the column.
        """
        required: list[str] = [id_column, time_column, event_column, arm_column]
        required += [spec.name for spec in specs]
        missing: list[str] = [column for column in required if column not in frame.columns]
        if missing:
            raise DataValidationError(f'Missing column(s): {missing}')

        arm_map: dict[str, ArmLabel] = {arm_labels[0]: 'A', arm_labels[1]: 'B'}
        records: list[SubjectRecord] = []

        for row, values in enumerate(
            frame[required].itertuples(index=False, name=None), start=1
        ):
            cells: dict[str, str] = {
                column: _cell_text(value)
                for column, value in zip(required, values, strict=True)
            }
            column: str = id_column
            try:
                if not cells[id_column]:
                    raise ValueError('missing id')

                column = time_column
                if not cells[time_column]:
                    raise ValueError('missing time')
                try:
                    time: float = float(cells[time_column])
                except ValueError as e:
                    raise ValueError(f'unparseable time {cells[time_column]!r}') from e
                if time < 0:
                    raise ValueError(f'negative time {time!r}')
                if not math.isfinite(time):
                    raise ValueError(f'non-finite time {cells[time_column]!r}')

                column = event_column
                event: bool = _parse_flag(cells[event_column], 'event')

                column = arm_column
                if cells[arm_column] not in arm_map:
                    raise ValueError(
                        f'unknown arm {cells[arm_column]!r} (expected one of {list(arm_map)})'
                    )

                covariates: dict[str, CovariateValue] = {}
                for spec in specs:
                    column = spec.name
                    covariates[spec.name] = spec.parse(cells[spec.name])
            except ValueError as e:
                raise DataValidationError(f'Row {row}, column {column!r}: {e}') from e

            records.append(
                SubjectRecord(
                    id=cells[id_column],
                    time=time,
                    event=event,
                    arm=arm_map[cells[arm_column]],
                    covariates=covariates,
                )
            )

        try:
            return cls(specs=tuple(specs), records=records)
        except ValidationError as e:
            raise DataValidationError(str(e)) from e

    @cached_property
    def arms(self) -> list[ArmLabel]:
        return [record.arm for record in self.records]

    @cached_property
    def treated(self) -> np.ndarray:
        """Boolean treatment indicator, True for arm A."""
        return np.array([arm == 'A' for arm in self.arms], dtype=bool)

    def design_matrix(
        self, names: Sequence[str] | None = None
    ) -> tuple[np.ndarray, list[str], list[str]]:
        """
        Design matrix that also understands the reserved 'arm' column.

        'arm' enters as the treatment indicator (1 = A); every other name is
        handled as in the blinded dataset.
        """
        selected: list[str] = list(names) if names is not None else self.covariate_names
        blocks: list[np.ndarray] = []
        column_names: list[str] = []
        owners: list[str] = []
        for name in selected:
            if name == ARM_COLUMN:
                blocks.append(self.treated.astype(float)[:, None])
                column_names.append(ARM_COLUMN)
                owners.append(ARM_COLUMN)
            else:
                block, block_names, block_owners = super().design_matrix([name])
                blocks.append(block)
                column_names.extend(block_names)
                owners.extend(block_owners)
        matrix: np.ndarray = (
            np.column_stack(blocks) if blocks else np.empty((self.n, 0), dtype=float)
        )
        return matrix, column_names, owners

    def subset(self, indices: Sequence[int] | np.ndarray) -> 'TrialDataset':
        """Return a new dataset restricted to the given row positions."""
        return TrialDataset(
            specs=self.specs, records=[self.records[int(i)] for i in indices]
        )

    def _frame_columns(self) -> dict[str, list[object]]:
        columns: dict[str, list[object]] = super()._frame_columns()
        arm_column: dict[str, list[object]] = {'arm': list(self.arms)}
        keys: list[str] = list(columns)
        # keep id, time, event, arm, covariates column order
        ordered: dict[str, list[object]] = {key: columns[key] for key in keys[:3]}
        ordered.update(arm_column)
        ordered.update({key: columns[key] for key in keys[3:]})
        return ordered


class BlindedDataset(_DatasetBase):
    """
    Trial data with the arm assignment withheld.

    Only BlindedRecord objects are accepted, so no accessor can return an arm
    label. Record order and ids match the TrialDataset it was built from.
    """

    records: list[BlindedRecord]

    def subset(self, indices: Sequence[int] | np.ndarray) -> 'BlindedDataset':
        """Return a new blinded dataset restricted to the given row positions."""
        return BlindedDataset(
            specs=self.specs, records=[self.records[int(i)] for i in indices]
        )
