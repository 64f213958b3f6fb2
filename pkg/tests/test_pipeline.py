"""Tests for the end-to-end stratified analysis."""

import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from fivestar.coxnet import cox_fit
from fivestar.exceptions import AnalysisStepError
from fivestar.models import TrialDataset
from fivestar.pipeline import (
    REPORT_FILES,
    FiveStarPipeline,
    comparator_strata,
    cox_comparison,
    emit_report,
    run_5star,
    run_comparators,
)
from fivestar.result_models import AnalysisReport, ComparatorBlock
from fivestar.utils import AnalysisConfig
from tests.conftest import TrialFactory, build_trial, fast_analysis_config


@pytest.fixture(scope='module')
def report(ph_trial: TrialDataset) -> AnalysisReport:
    return run_5star(ph_trial, fast_analysis_config())


class TestRun5Star:
    """Tests for the five steps on the shared trial."""

    def test_counts(self, report: AnalysisReport, ph_trial: TrialDataset) -> None:
        assert report.n == ph_trial.n
        assert report.n_a + report.n_b == report.n
        assert report.n_events == int(ph_trial.events.sum())
        assert report.seed == 11  # noqa: PLR2004
        assert report.covariates == ['x1', 'z1', 'z2', 'region']

    def test_filter_keeps_prognostic_factor(self, report: AnalysisReport) -> None:
        assert 'x1' in report.step2.selected_covariates
        assert report.step2.psi in {0.5, 1.0}
        assert len(report.step2.surface) == 50  # noqa: PLR2004

    def test_strata_partition_subjects(self, report: AnalysisReport) -> None:
        assignment = report.step3.assignment

        assert assignment.c >= 2  # noqa: PLR2004
        assert sum(row.n for row in report.step3.strata) == report.n
        assert sorted(set(assignment.final_stratum)) == list(range(1, assignment.c + 1))
        assert len(report.step3.strata) == assignment.c

    def test_strata_ranked_by_risk(
        self, report: AnalysisReport, ph_trial: TrialDataset
    ) -> None:
        final: np.ndarray = np.asarray(report.step3.assignment.final_stratum)
        x1: np.ndarray = ph_trial.covariate_codes('x1')

        assert x1[final == 1].mean() > x1[final == report.step3.assignment.c].mean()

    def test_effects_and_combination(self, report: AnalysisReport) -> None:
        analyzed: set[int] = {effect.stratum for effect in report.step4.effects}
        excluded: set[int] = {item.stratum for item in report.step4.excluded}

        assert analyzed | excluded == set(range(1, report.step3.assignment.c + 1))
        assert report.step5.tr.strata_used == sorted(analyzed)
        assert report.step5.tr.estimate > 1.0
        assert report.step5.tr.rejected
        assert report.step5.hr is not None
        assert report.step5.hr.estimate < 1.0

    def test_comparators(self, report: AnalysisReport) -> None:
        block: ComparatorBlock = report.comparators

        assert block.errors == {}
        assert block.logrank is not None
        assert block.logrank.z < 0
        assert block.stratified is not None
        assert block.stratified.strata == ['x1=0', 'x1=1']
        assert block.maxcombo is not None
        assert block.rmst is not None
        assert block.gt is not None

    def test_plot_tables(self, report: AnalysisReport) -> None:
        scopes: set[tuple[str, str]] = {(p.scope, p.arm) for p in report.km_curves}

        assert {('overall', 'pooled'), ('overall', 'A'), ('overall', 'B')} <= scopes
        assert ('stratum 1', 'A') in scopes
        first = report.km_curves[0]
        assert (first.time, first.survival) == (0.0, 1.0)
        overall_hazard = [
            p for p in report.hazard_curves if (p.scope, p.arm) == ('overall', 'pooled')
        ]
        assert len(overall_hazard) == 20  # noqa: PLR2004

    def test_same_seed_same_report(self, report: AnalysisReport, ph_trial: TrialDataset) -> None:
        again: AnalysisReport = run_5star(ph_trial, fast_analysis_config())

        assert again.step3.assignment == report.step3.assignment
        assert again.step5.tr.p_value == report.step5.tr.p_value


class TestDegenerateRuns:
    """Runs that end with one stratum or fail in a named step."""

    def test_no_covariates_gives_single_stratum(self, ph_trial: TrialDataset) -> None:
        bare: TrialDataset = build_trial(
            ph_trial.times.tolist(), ph_trial.events.tolist(), ph_trial.arms
        )
        config: AnalysisConfig = AnalysisConfig.model_validate(
            {'seed': 5, 'report': {'hazard_grid_points': 10}}
        )

        result: AnalysisReport = run_5star(bare, config)

        assert result.step2.selected_covariates == []
        assert result.step3.assignment.c == 1
        assert result.step3.pool_tree is None
        assert result.step5.tr.rho_hat == pytest.approx(1.0)
        assert result.step5.tr.z_i == pytest.approx(result.step5.tr.z_ii)

    def test_arm_without_events_fails_in_step4(self, make_trial: TrialFactory) -> None:
        data: TrialDataset = make_trial(
            [1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            [1, 0, 1, 0, 1, 0],
            ['A', 'B', 'A', 'B', 'A', 'B'],
        )

        with pytest.raises(AnalysisStepError, match='step4') as excinfo:
            run_5star(data, AnalysisConfig())

        assert excinfo.value.step == 'step4'


class TestComparators:
    """Tests for the standard analyses run alongside."""

    def test_strata_labels(self, ph_trial: TrialDataset) -> None:
        labels: list[str] = comparator_strata(ph_trial, ['x1', 'z1'])
        median: float = float(np.median(ph_trial.covariate_codes('z1')))

        assert len(labels) == ph_trial.n
        assert len(set(labels)) == 4  # noqa: PLR2004
        assert all(label.startswith(('x1=0|z1', 'x1=1|z1')) for label in labels)
        assert f'x1=1|z1>{median:g}' in labels

    def test_disabled_comparators_are_skipped(
        self, small_trial: TrialDataset, fast_config: AnalysisConfig
    ) -> None:
        config: AnalysisConfig = fast_config.model_copy(
            update={
                'comparators': fast_config.comparators.model_copy(
                    update={'maxcombo': False, 'gt': False, 'stratified_logrank': False}
                )
            }
        )

        block: ComparatorBlock = run_comparators(small_trial, config)

        assert block.maxcombo is None
        assert block.gt is None
        assert block.stratified is None
        assert block.logrank is not None

    def test_failures_are_recorded(self, make_trial: TrialFactory) -> None:
        one_arm: TrialDataset = make_trial([1.0, 2.0, 3.0], [1, 1, 0], ['A', 'A', 'A'])

        block: ComparatorBlock = run_comparators(one_arm, AnalysisConfig())

        assert block.logrank is None
        assert {'logrank', 'maxcombo', 'rmst'} <= set(block.errors)

    def test_cox_comparison_interval(self, ph_trial: TrialDataset) -> None:
        fit = cox_fit(ph_trial, ['arm'])

        comparison = cox_comparison(-3.0, 0.00135, fit, alpha=0.05)

        assert comparison.hr == pytest.approx(np.exp(fit.coefficients[0]))
        assert comparison.ci_lower < comparison.hr < comparison.ci_upper
        assert comparison.dropped_strata == []


class TestReportOutput:
    """Tests for the written report."""

    def test_emit_report(self, report: AnalysisReport, tmp_path: Path) -> None:
        paths: list[Path] = emit_report(report, tmp_path / 'out')

        assert [path.name for path in paths] == list(REPORT_FILES)
        assert all(path.exists() for path in paths)
        document = json.loads((tmp_path / 'out' / 'report.json').read_text(encoding='utf-8'))
        assert document['n'] == report.n
        strata: pd.DataFrame = pd.read_csv(tmp_path / 'out' / 'strata.csv')
        assert strata['n'].sum() == report.n
        forest: pd.DataFrame = pd.read_csv(tmp_path / 'out' / 'forest.csv')
        assert 'Overall' in forest['stratum'].astype(str).tolist()

    def test_pipeline_run(
        self, trial_csv: Path, tmp_path: Path, fast_config: AnalysisConfig
    ) -> None:
        pipeline: FiveStarPipeline = FiveStarPipeline(
            config=fast_config, configure_logging=False
        )

        result: AnalysisReport = pipeline.run(trial_csv, tmp_path / 'run')

        assert result.n == 400  # noqa: PLR2004
        assert sorted(p.name for p in (tmp_path / 'run').iterdir()) == sorted(REPORT_FILES)

    def test_pipeline_rejects_bad_config(self, tmp_path: Path) -> None:
        path: Path = tmp_path / 'bad.yaml'
        path.write_text('enet:\n  folds: 1\n', encoding='utf-8')

        with pytest.raises(ValueError, match='folds'):
            FiveStarPipeline(config_path=path, configure_logging=False)
