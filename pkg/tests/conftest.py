"""Pytest configuration and shared fixtures for fivestar tests."""

from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any

import numpy as np
import pytest

from fivestar.models import CovariateSpec, CovariateValue, SubjectRecord, TrialDataset
from fivestar.utils import AnalysisConfig

TrialFactory = Callable[..., TrialDataset]


def build_trial(
    times: Sequence[float],
    events: Sequence[bool | int],
    arms: Sequence[str],
    covariates: dict[str, Sequence[CovariateValue]] | None = None,
    specs: Sequence[CovariateSpec] = (),
) -> TrialDataset:
    """Assemble a TrialDataset from parallel columns."""
    columns: dict[str, Sequence[CovariateValue]] = covariates or {}
    records: list[SubjectRecord] = [
        SubjectRecord(
            id=f's{i + 1}',
            time=float(time),
            event=bool(event),
            arm=arm,  # type: ignore[arg-type]
            covariates={name: values[i] for name, values in columns.items()},
        )
        for i, (time, event, arm) in enumerate(zip(times, events, arms, strict=True))
    ]
    return TrialDataset(specs=tuple(specs), records=records)


def simulate_trial(
    n: int = 400,
    seed: int = 1,
    log_hr: float = np.log(0.6),
    prognostic: float = np.log(3.0),
    censor_rate: float = 0.3,
) -> TrialDataset:
    """
    Weibull proportional-hazards trial with one strong binary prognostic factor.

    Covariates: x1 (binary, prognostic), z1 and z2 (continuous noise) and
    region (nominal noise).
    """
    rng: np.random.Generator = np.random.default_rng(seed)
    treated: np.ndarray = rng.permutation(np.arange(n) < n // 2)
    x1: np.ndarray = rng.integers(0, 2, n)
    z1: np.ndarray = rng.standard_normal(n)
    z2: np.ndarray = rng.standard_normal(n)
    region: np.ndarray = rng.choice(['EU', 'NA', 'APAC'], n)
    rate: np.ndarray = np.exp(log_hr * treated + prognostic * x1)
    survival: np.ndarray = (rng.exponential(1.0, n) / rate) ** (1.0 / 1.5)
    censoring: np.ndarray = rng.exponential(1.0 / censor_rate, n)
    specs: list[CovariateSpec] = [
        CovariateSpec(name='x1', kind='binary'),
        CovariateSpec(name='z1', kind='continuous'),
        CovariateSpec(name='z2', kind='continuous'),
        CovariateSpec(name='region', kind='nominal', levels=('EU', 'NA', 'APAC')),
    ]
    return build_trial(
        times=np.minimum(survival, censoring).tolist(),
        events=(survival <= censoring).tolist(),
        arms=['A' if t else 'B' for t in treated],
        covariates={
            'x1': [int(v) for v in x1],
            'z1': z1.tolist(),
            'z2': z2.tolist(),
            'region': region.tolist(),
        },
        specs=specs,
    )


@pytest.fixture
def make_trial() -> TrialFactory:
    """Factory building a TrialDataset from parallel columns."""
    return build_trial


@pytest.fixture
def small_trial() -> TrialDataset:
    """Eight subjects, both arms, one censoring per arm, one binary covariate."""
    return build_trial(
        times=[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
        events=[1, 1, 0, 1, 1, 1, 0, 1],
        arms=['B', 'A', 'B', 'A', 'B', 'A', 'B', 'A'],
        covariates={'x1': [1, 0, 1, 0, 1, 0, 0, 1]},
        specs=[CovariateSpec(name='x1', kind='binary')],
    )


@pytest.fixture(scope='session')
def ph_trial() -> TrialDataset:
    """400-subject proportional-hazards trial (HR 0.6, x1 triples the hazard)."""
    return simulate_trial()


def fast_analysis_config() -> AnalysisConfig:
    """Configuration small enough for unit tests."""
    config_dict: dict[str, Any] = {
        'seed': 11,
        'data': {
            'covariates': [
                {'name': 'x1', 'kind': 'binary'},
                {'name': 'z1', 'kind': 'continuous'},
                {'name': 'z2', 'kind': 'continuous'},
                {'name': 'region', 'kind': 'nominal', 'levels': ['EU', 'NA', 'APAC']},
            ],
        },
        'enet': {'psi_grid': [0.5, 1.0], 'folds': 5, 'n_lambda': 25},
        'ctree': {'min_node': 30, 'pvalue_method': 'asymptotic'},
        'comparators': {'stratified_logrank': True, 'stratify_by': ['x1']},
        'report': {'hazard_grid_points': 20},
        'logging': {'console_level': 'WARNING'},
    }
    return AnalysisConfig.model_validate(config_dict)


@pytest.fixture
def fast_config() -> AnalysisConfig:
    return fast_analysis_config()


@pytest.fixture
def trial_csv(tmp_path: Path, ph_trial: TrialDataset) -> Path:
    """The session trial written as a CSV file."""
    path: Path = tmp_path / 'trial.csv'
    ph_trial.to_frame().to_csv(path, index=False)
    return path
