"""Tests for the simulation harness."""

import logging
import math
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from fivestar.exceptions import DataValidationError
from fivestar.models import CovariateSpec, TrialDataset
from fivestar.result_models import (
    RecoveryMetrics,
    ReplicateOutcome,
    ReplicateSteps,
    ScenarioSpec,
    SimResult,
    SimSummary,
    TrueEffects,
)
from fivestar.simlab import (
    SUMMARY_COLUMNS,
    aggregate,
    correlation_matrix,
    gen_covariates,
    gen_trial,
    misspecified_strata,
    recovery_metrics,
    run_scenario,
    simulation_config,
    summarize,
    true_effects,
    true_strata,
    weibull_scales,
)
from fivestar.utils import AnalysisConfig, ReplicateLogHandler
from tests.conftest import TrialFactory


@pytest.fixture
def small_scenario() -> ScenarioSpec:
    return ScenarioSpec(name='small', theta=(0.7, 0.7, 0.7, 0.7), n_per_arm=60, target_events=70)


class TestScenarioSpec:
    def test_presets(self) -> None:
        spec: ScenarioSpec = ScenarioSpec.preset('Alt-2')

        assert spec.name == 'alt2'
        assert spec.theta == (0.42, 0.7, 0.86, 0.95)
        assert spec.n == 600  # noqa: PLR2004

    def test_unknown_preset(self) -> None:
        with pytest.raises(ValueError, match='Unknown scenario'):
            ScenarioSpec.preset('alt9')

    def test_x26_must_be_continuous(self) -> None:
        with pytest.raises(ValueError, match='X26'):
            ScenarioSpec(name='bad', theta=(1.0, 1.0, 1.0, 1.0), n_binary=26)

    def test_events_bounded_by_subjects(self) -> None:
        with pytest.raises(ValueError, match='target_events'):
            ScenarioSpec(name='bad', theta=(1.0, 1.0, 1.0, 1.0), n_per_arm=10, target_events=30)


class TestTruth:
    """Tests for the true estimands and Weibull scales."""

    def test_constant_hazard_ratio(self) -> None:
        truth: TrueEffects = true_effects(ScenarioSpec.preset('alt1'))

        assert truth.theta == pytest.approx(0.7, abs=1e-12)
        assert truth.delta[0] == pytest.approx(-math.log(0.7) / 2.5)
        assert truth.gamma > 1.0

    def test_heterogeneous_time_ratio(self) -> None:
        truth: TrueEffects = true_effects(ScenarioSpec.preset('alt2'))

        assert truth.gamma == pytest.approx(1.1393, abs=1e-3)
        assert truth.theta == pytest.approx(0.7001, abs=1e-3)

    def test_null_has_no_effect(self) -> None:
        truth: TrueEffects = true_effects(ScenarioSpec.preset('null'))

        assert truth.gamma == pytest.approx(1.0)
        assert truth.log_gamma == pytest.approx(0.0)

    def test_weibull_scales(self) -> None:
        spec: ScenarioSpec = ScenarioSpec.preset('alt2')
        kappa: np.ndarray = np.asarray(spec.kappa)

        eta_b, eta_a = weibull_scales(spec)

        np.testing.assert_allclose(eta_b * np.log(2.0) ** (1.0 / kappa), spec.medians_b)
        np.testing.assert_allclose((eta_b / eta_a) ** kappa, spec.theta)


class TestGenerators:
    """Tests for covariate and trial generation."""

    def test_covariates_are_seeded(self) -> None:
        first: np.ndarray = gen_covariates(200, seed=3)
        second: np.ndarray = gen_covariates(200, seed=3)

        np.testing.assert_array_equal(first, second)
        assert first.shape == (200, 50)
        assert set(np.unique(first[:, :25]).tolist()) <= {0.0, 1.0}

    def test_covariates_need_rows(self) -> None:
        with pytest.raises(DataValidationError, match='n must be'):
            gen_covariates(0, seed=1)

    def test_correlation_matrix_is_valid(self) -> None:
        matrix: np.ndarray = correlation_matrix(ScenarioSpec.preset('null'), seed=4)

        np.testing.assert_allclose(np.diag(matrix), 1.0)
        np.testing.assert_allclose(matrix, matrix.T)
        assert np.linalg.eigvalsh(matrix).min() > 0

    def test_trial_stops_at_target_events(self) -> None:
        spec: ScenarioSpec = ScenarioSpec.preset('alt1')

        data: TrialDataset = gen_trial(spec, seed=12)

        assert int(data.events.sum()) == spec.target_events
        assert data.n <= spec.n
        assert len(data.specs) == spec.n_covariates
        assert all(record.id.startswith('S') for record in data.records)
        assert data == gen_trial(spec, seed=12)

    def test_true_strata_lookup(self, make_trial: TrialFactory) -> None:
        data: TrialDataset = make_trial(
            [1.0, 2.0, 3.0, 4.0],
            [1, 1, 1, 1],
            ['A', 'B', 'A', 'B'],
            {'X1': [0, 0, 1, 1], 'X2': [0, 0, 0, 1], 'X26': [0.0, 1.0, 0.3, 1.0]},
            [
                CovariateSpec(name='X1', kind='binary'),
                CovariateSpec(name='X2', kind='binary'),
                CovariateSpec(name='X26', kind='continuous'),
            ],
        )

        np.testing.assert_array_equal(true_strata(data), [1, 2, 2, 4])

    def test_misspecified_strata_labels(self, small_scenario: ScenarioSpec) -> None:
        data: TrialDataset = gen_trial(small_scenario, seed=2)

        labels: list[str] = misspecified_strata(data)

        assert len(labels) == data.n
        assert all(label.startswith('X2=') and '|X26>0=' in label for label in labels)


class TestAggregation:
    """Tests for the operating-characteristic summaries."""

    def test_aggregate(self) -> None:
        truth: TrueEffects = true_effects(ScenarioSpec.preset('alt1'))
        outcomes: list[ReplicateOutcome] = [
            ReplicateOutcome(
                rep=0, method='logrank', p_value=0.01, rejected=True,
                estimate=0.7, ci_lower=0.6, ci_upper=0.8, seconds=0.1,
            ),
            ReplicateOutcome(
                rep=1, method='logrank', p_value=0.2, rejected=False,
                estimate=0.77, ci_lower=0.75, ci_upper=0.9, seconds=0.3,
            ),
            ReplicateOutcome(rep=2, method='logrank', failed=True, error='boom'),
        ]  # fmt: skip

        result: SimResult = aggregate('alt1', 'logrank', outcomes, truth)

        assert result.reps == 3  # noqa: PLR2004
        assert result.failures == 1
        assert result.rejection_rate == pytest.approx(0.5)
        assert result.mc_se == pytest.approx(math.sqrt(0.125))
        assert result.mean_percent_bias == pytest.approx(5.0)
        assert result.ci_coverage == pytest.approx(0.5)
        assert result.runtime_seconds == pytest.approx(0.2)

    def test_no_estimand_for_maxcombo(self) -> None:
        truth: TrueEffects = true_effects(ScenarioSpec.preset('null'))
        outcomes: list[ReplicateOutcome] = [
            ReplicateOutcome(rep=0, method='maxcombo', p_value=0.5)
        ]

        result: SimResult = aggregate('null', 'maxcombo', outcomes, truth)

        assert result.mean_percent_bias is None
        assert result.ci_coverage is None
        assert result.rejection_rate == 0.0

    def test_recovery_metrics(self) -> None:
        steps: list[ReplicateSteps] = [
            ReplicateSteps(rep=0, advanced=['X1', 'X2', 'X26', 'X7'], tree_covariates=['X1', 'X2', 'X26'], n_strata=4),
            ReplicateSteps(rep=1, advanced=['X1', 'X2'], tree_covariates=['X1'], n_strata=2),
        ]

        metrics: RecoveryMetrics | None = recovery_metrics('alt1', steps)

        assert metrics is not None
        assert metrics.advance_rate == {'X1': 1.0, 'X2': 1.0, 'X26': 0.5}
        assert metrics.all_advanced_rate == pytest.approx(0.5)
        assert metrics.mean_advanced == pytest.approx(3.0)
        assert metrics.tree_only_correct_rate == pytest.approx(0.5)
        assert metrics.mean_strata == pytest.approx(3.0)
        assert recovery_metrics('alt1', []) is None

    def test_summarize_empty(self) -> None:
        table: pd.DataFrame = summarize([])

        assert list(table.columns) == SUMMARY_COLUMNS
        assert table.empty

    def test_simulation_config_overrides(self) -> None:
        config: AnalysisConfig = AnalysisConfig.model_validate(
            {'ctree': {'seed': 4}, 'simulation': {'psi_grid': [1.0]}}
        )

        analysis: AnalysisConfig = simulation_config(config)

        assert analysis.enet.psi_grid == (1.0,)
        assert analysis.ctree.pvalue_method == 'asymptotic'
        assert analysis.ctree.seed is None
        assert not analysis.comparators.logrank
        assert not analysis.comparators.gt


class TestRunScenario:
    """Small end-to-end harness runs."""

    def test_invalid_arguments(self, small_scenario: ScenarioSpec) -> None:
        with pytest.raises(DataValidationError, match='reps'):
            run_scenario(small_scenario, reps=0)
        with pytest.raises(DataValidationError, match='Unknown method'):
            run_scenario(small_scenario, methods=['cox'], reps=1)  # type: ignore[list-item]

    def test_comparators_only(
        self, small_scenario: ScenarioSpec, tmp_path: Path, caplog: pytest.LogCaptureFixture
    ) -> None:
        with caplog.at_level(logging.DEBUG, logger='fivestar'):
            summary: SimSummary = run_scenario(
                small_scenario,
                methods=['logrank', 'rmst'],
                reps=3,
                seed=9,
                replicate_log=tmp_path / 'reps.parquet',
            )

        assert [result.method for result in summary.results] == ['logrank', 'rmst']
        assert all(result.reps == 3 for result in summary.results)  # noqa: PLR2004
        assert summary.recovery is None
        log: pd.DataFrame | None = ReplicateLogHandler(tmp_path / 'reps.parquet').load()
        assert log is not None
        assert len(log) == 6  # noqa: PLR2004
        assert log['n_enrolled'].between(1, small_scenario.n).all()
        enrolled: list[str] = [
            r.getMessage() for r in caplog.records if 'enrolled n=' in r.getMessage()
        ]
        assert len(enrolled) == 3  # noqa: PLR2004
        assert all(f'of {small_scenario.n} planned' in message for message in enrolled)

        table: pd.DataFrame = summarize([summary], tmp_path / 'tables')
        assert len(table) == 2  # noqa: PLR2004
        assert (tmp_path / 'tables' / 'table2.csv').exists()
        assert 'runtime_seconds' not in (tmp_path / 'tables' / 'table2.json').read_text(
            encoding='utf-8'
        )

    @pytest.mark.slow
    def test_results_do_not_depend_on_workers(self, small_scenario: ScenarioSpec) -> None:
        serial: SimSummary = run_scenario(small_scenario, methods=['logrank'], reps=4, seed=3)
        parallel: SimSummary = run_scenario(
            small_scenario, methods=['logrank'], reps=4, seed=3, workers=2
        )

        exclude: set[str] = {'runtime_seconds'}
        assert [r.model_dump(exclude=exclude) for r in serial.results] == [
            r.model_dump(exclude=exclude) for r in parallel.results
        ]

    @pytest.mark.slow
    def test_stratified_analysis_replicates(self, small_scenario: ScenarioSpec) -> None:
        config: AnalysisConfig = AnalysisConfig.model_validate(
            {
                'enet': {'folds': 3, 'n_lambda': 10},
                'ctree': {'min_node': 20},
                'simulation': {'psi_grid': [1.0]},
            }
        )

        summary: SimSummary = run_scenario(
            small_scenario, methods=['5star_tr', '5star_hr'], reps=2, seed=1, config=config
        )

        assert [result.method for result in summary.results] == ['5star_tr', '5star_hr']
        assert all(result.failures <= 2 for result in summary.results)  # noqa: PLR2004
