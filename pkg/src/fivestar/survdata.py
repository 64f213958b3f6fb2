# fivestar/survdata.py
"""
Trial data ingestion, validation and the blinding contract.

load_csv() is the only entry point for files; blind() produces the arm-free
view consumed by the covariate filter and the risk stratification, and
rejoin_arms() recovers the labels afterwards by subject id.
"""

import logging
from collections import Counter
from collections.abc import Sequence
from pathlib import Path

import numpy as np
import pandas as pd

from fivestar.exceptions import DataValidationError
from fivestar.models import (
    ArmLabel,
    BlindedDataset,
    BlindedRecord,
    CovariateSpec,
    TrialDataset,
)
from fivestar.result_models.data_report import CovariateSummary, ValidationReport
from fivestar.utils.config_loader import DataSection

logger: logging.Logger = logging.getLogger(__name__)


def load_csv(
    path: Path | str,
    specs: Sequence[CovariateSpec] | None = None,
    data_config: DataSection | None = None,
) -> TrialDataset:
    """
    Load and validate a trial CSV file.

    The file needs a header row with the id, time, event and arm columns named
    in the data config plus one column per covariate spec. Extra columns are
    ignored. Cells are read as text and converted by the covariate specs, so
    the same file always yields the same dataset.

    Args:
        path: CSV file path.
        specs: Covariate specs (default: the ones declared in data_config).
        data_config: Column mapping and arm labels (default: id/time/event/arm
            columns with arms A/B).

    Returns:
        The validated TrialDataset.

    Raises:
        FileNotFoundError: If the file does not exist.
        DataValidationError: On a missing column or any invalid cell; the
            message names the 1-based data row and the column.
    """
    section: DataSection = data_config or DataSection()
    covariate_specs: Sequence[CovariateSpec] = (
        specs if specs is not None else section.covariates
    )
    file_path: Path = Path(path)

    if not file_path.exists():
        error_msg: str = f'Data file not found at: {file_path}'
        logger.error(error_msg)
        raise FileNotFoundError(error_msg)

    try:
        frame: pd.DataFrame = pd.read_csv(
            file_path, dtype=str, keep_default_na=False, skipinitialspace=True
        )
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        logger.error('Failed to parse %r: %r', file_path, e)
        raise DataValidationError(f'Unreadable CSV file {file_path}: {e}') from e

    try:
        data: TrialDataset = TrialDataset.from_frame(
            frame,
            covariate_specs,
            id_column=section.id_column,
            time_column=section.time_column,
            event_column=section.event_column,
            arm_column=section.arm_column,
            arm_labels=section.arm_labels,
        )
    except DataValidationError as e:
        logger.error('Validation of %r failed: %s', file_path, e)
        raise

    logger.info(
        'Loaded %d subjects (%d events, %d covariates) from %s',
        data.n,
        int(data.events.sum()),
        len(covariate_specs),
        file_path,
    )
    return data


def blind(data: TrialDataset) -> BlindedDataset:
    """
    Strip the arm labels.

    Subjects keep their ids, order, times, events and covariates.
    """
    records: list[BlindedRecord] = [
        BlindedRecord(
            id=record.id,
            time=record.time,
            event=record.event,
            covariates=record.covariates,
        )
        for record in data.records
    ]
    return BlindedDataset(specs=data.specs, records=records)


def rejoin_arms(blinded: BlindedDataset, data: TrialDataset) -> list[ArmLabel]:
    """
    Recover the arm label of every blinded subject by id.

    Args:
        blinded: The blinded view (any order).
        data: The unblinded dataset holding the labels.

    Returns:
        Arm labels aligned with blinded.records.

    Raises:
        DataValidationError: If ids are duplicated or do not match one-to-one.
    """
    duplicated: list[str] = _duplicates(data.ids) + _duplicates(blinded.ids)
    if duplicated:
        raise DataValidationError(
            f'Cannot rejoin arms: duplicate ids {sorted(set(duplicated))}'
        )

    arm_by_id: dict[str, ArmLabel] = dict(zip(data.ids, data.arms, strict=True))
    unmatched: list[str] = [subject for subject in blinded.ids if subject not in arm_by_id]
    if unmatched or len(blinded.ids) != len(arm_by_id):
        raise DataValidationError(
            f'Cannot rejoin arms: ids do not match one-to-one (unmatched: {unmatched[:10]})'
        )
    return [arm_by_id[subject] for subject in blinded.ids]


def validate(data: TrialDataset) -> ValidationReport:
    """
    Report-only diagnostics: arm and event counts, covariate summaries and
    duplicate ids. Nothing is raised; problems land in warnings.
    """
    warnings: list[str] = []
    treated: np.ndarray = data.treated
    events: np.ndarray = data.events

    n_by_arm: dict[str, int] = {'A': int(treated.sum()), 'B': int((~treated).sum())}
    events_by_arm: dict[str, int] = {
        'A': int(events[treated].sum()),
        'B': int(events[~treated].sum()),
    }

    for arm in ('A', 'B'):
        if n_by_arm[arm] == 0:
            warnings.append(f'Arm {arm} has no subjects')
        elif events_by_arm[arm] == 0:
            warnings.append(f'Arm {arm} has no events; downstream fits may degenerate')

    duplicate_ids: list[str] = _duplicates(data.ids)
    if duplicate_ids:
        warnings.append(f'Duplicate subject ids: {duplicate_ids}')

    summaries: list[CovariateSummary] = []
    for spec in data.specs:
        codes: np.ndarray = data.covariate_codes(spec.name)
        if spec.kind in {'continuous', 'binary'}:
            summaries.append(
                CovariateSummary(
                    name=spec.name,
                    kind=spec.kind,
                    mean=float(codes.mean()),
                    sd=float(codes.std(ddof=1)) if data.n > 1 else 0.0,
                    minimum=float(codes.min()),
                    maximum=float(codes.max()),
                )
            )
        else:
            assert spec.levels is not None
            counts: np.ndarray = np.bincount(codes.astype(int), minlength=len(spec.levels))
            summaries.append(
                CovariateSummary(
                    name=spec.name,
                    kind=spec.kind,
                    level_counts={
                        level: int(count)
                        for level, count in zip(spec.levels, counts, strict=True)
                    },
                )
            )
        if np.unique(codes).size < 2:
            warnings.append(f'Covariate {spec.name!r} is constant')

    for message in warnings:
        logger.warning(message)

    return ValidationReport(
        n=data.n,
        n_events=int(events.sum()),
        n_by_arm=n_by_arm,
        events_by_arm=events_by_arm,
        duplicate_ids=duplicate_ids,
        covariates=summaries,
        warnings=warnings,
    )


def _duplicates(ids: Sequence[str]) -> list[str]:
    return sorted(subject for subject, count in Counter(ids).items() if count > 1)
