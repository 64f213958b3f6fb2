"""Tests for the Cox fits, the PH diagnostic and the elastic-net selection."""

import numpy as np
import pytest

from fivestar.coxnet import (
    PenalizedCoxProblem,
    cox_fit,
    cv_select,
    enet_path,
    gt_test,
    make_folds,
    ridge_fit,
    score_test_p,
)
from fivestar.exceptions import DataValidationError, RankDeficiencyError
from fivestar.models import BlindedDataset, CovariateSpec, TrialDataset
from fivestar.nonparam import logrank
from fivestar.result_models import CvSelection, ElasticNetFit
from fivestar.survdata import blind
from tests.conftest import TrialFactory


@pytest.fixture(scope='module')
def blinded_trial(ph_trial: TrialDataset) -> BlindedDataset:
    return blind(ph_trial)


class TestCoxFit:
    """Tests for the unpenalized Newton-Raphson fit."""

    def test_recovers_effects(self, ph_trial: TrialDataset) -> None:
        fit = cox_fit(ph_trial, ['arm', 'x1'])

        assert fit.converged
        assert fit.covariates == ['arm', 'x1']
        assert fit.coefficients[0] == pytest.approx(np.log(0.6), abs=0.35)
        assert fit.coefficients[1] == pytest.approx(np.log(3.0), abs=0.35)
        assert fit.lr_statistic() > 0
        assert fit.n_events == int(ph_trial.events.sum())

    def test_covariance_is_symmetric_positive(self, ph_trial: TrialDataset) -> None:
        covariance: np.ndarray = np.asarray(cox_fit(ph_trial, ['arm', 'z1']).covariance)

        np.testing.assert_allclose(covariance, covariance.T, atol=1e-12)
        assert np.all(np.linalg.eigvalsh(covariance) > 0)

    def test_nominal_covariate_is_one_hot(self, ph_trial: TrialDataset) -> None:
        fit = cox_fit(ph_trial, ['region'])

        assert fit.covariates == ['region[NA]', 'region[APAC]']
        assert fit.terms == ['region']

    def test_score_test_matches_logrank(self, ph_trial: TrialDataset) -> None:
        fit = cox_fit(ph_trial, ['arm'])

        assert score_test_p(fit) == pytest.approx(logrank(ph_trial).p_value, rel=1e-6)

    def test_stratified_fit(self, ph_trial: TrialDataset) -> None:
        labels: list[str] = [f'x1={int(v)}' for v in ph_trial.covariate_codes('x1')]

        fit = cox_fit(ph_trial, ['arm'], strata=labels)

        assert fit.strata == ['x1=0', 'x1=1']
        assert fit.coefficients[0] == pytest.approx(np.log(0.6), abs=0.35)

    def test_constant_column_is_rank_deficient(self, make_trial: TrialFactory) -> None:
        data: TrialDataset = make_trial(
            [1.0, 2.0, 3.0],
            [1, 1, 0],
            ['A', 'B', 'A'],
            {'x': [1, 1, 1]},
            [CovariateSpec(name='x', kind='binary')],
        )

        with pytest.raises(RankDeficiencyError, match='rank deficient'):
            cox_fit(data, ['x'])

    def test_needs_covariates(self, ph_trial: TrialDataset) -> None:
        with pytest.raises(DataValidationError, match='at least one covariate'):
            cox_fit(ph_trial, [])


class TestGtTest:
    """Tests for the proportional hazards diagnostic."""

    @pytest.mark.parametrize('transform', ['km', 'rank', 'identity', 'log'])
    def test_transforms(self, ph_trial: TrialDataset, transform: str) -> None:
        fit = cox_fit(ph_trial, ['arm', 'x1'])

        result = gt_test(fit, ph_trial, transform=transform)  # type: ignore[arg-type]

        assert result.covariates == ['arm', 'x1']
        assert result.global_df == 2  # noqa: PLR2004
        assert all(chisq >= 0 for chisq in result.chisq)
        assert all(0.0 < p <= 1.0 for p in result.p_values)

    def test_unknown_transform(self, ph_trial: TrialDataset) -> None:
        fit = cox_fit(ph_trial, ['arm'])

        with pytest.raises(DataValidationError, match='Unknown time transform'):
            gt_test(fit, ph_trial, transform='sqrt')  # type: ignore[arg-type]

    def test_data_must_match_fit(self, ph_trial: TrialDataset) -> None:
        fit = cox_fit(ph_trial, ['arm'])
        other = cox_fit(ph_trial, ['x1'])

        with pytest.raises(DataValidationError, match='do not match'):
            gt_test(fit.model_copy(update={'terms': other.terms}), ph_trial)


class TestElasticNet:
    """Tests for the penalized path and ridge fit."""

    def test_path_starts_at_zero(self, blinded_trial: BlindedDataset) -> None:
        fit: ElasticNetFit = enet_path(blinded_trial, psi=1.0, n_lambda=20)

        assert len(fit.lambdas) == 20  # noqa: PLR2004
        assert all(beta == 0.0 for beta in fit.coefficient_path[0])
        assert fit.selected_at(0) == []
        assert 'x1' in fit.selected_at(len(fit.lambdas) - 1)
        assert all(fit.converged)

    def test_deviance_falls_along_path(self, blinded_trial: BlindedDataset) -> None:
        fit: ElasticNetFit = enet_path(blinded_trial, psi=0.5, n_lambda=15)

        slack: float = 1e-8 * fit.deviance_path[0]
        assert np.all(np.diff(fit.deviance_path) <= slack)

    def test_first_selected_covariate_is_prognostic(
        self, blinded_trial: BlindedDataset
    ) -> None:
        fit: ElasticNetFit = enet_path(blinded_trial, psi=1.0, n_lambda=30)
        first: list[str] = next(
            fit.selected_at(i) for i in range(len(fit.lambdas)) if fit.selected_at(i)
        )

        assert first == ['x1']

    def test_ridge_matches_path_at_psi_zero(self, blinded_trial: BlindedDataset) -> None:
        ridge: ElasticNetFit = ridge_fit(blinded_trial, 0.05)
        path: ElasticNetFit = enet_path(blinded_trial, psi=0.0, lambdas=[0.05])

        assert ridge.converged == [True]
        np.testing.assert_allclose(
            ridge.coefficient_path[0], path.coefficient_path[0], atol=1e-5
        )

    def test_invalid_psi(self, blinded_trial: BlindedDataset) -> None:
        with pytest.raises(DataValidationError, match='psi'):
            enet_path(blinded_trial, psi=1.5)

    def test_negative_lambda(self, blinded_trial: BlindedDataset) -> None:
        with pytest.raises(DataValidationError, match='lambda'):
            ridge_fit(blinded_trial, -0.1)


class TestCrossValidation:
    """Tests for fold construction and (psi, lambda) selection."""

    def test_every_fold_has_an_event(self, ph_trial: TrialDataset) -> None:
        fold_ids: np.ndarray = make_folds(ph_trial.events, 10, seed=4)

        assert set(fold_ids.tolist()) == set(range(10))
        assert np.all(np.bincount(fold_ids[ph_trial.events], minlength=10) > 0)
        np.testing.assert_array_equal(fold_ids, make_folds(ph_trial.events, 10, seed=4))

    def test_too_few_subjects_for_folds(self) -> None:
        with pytest.raises(DataValidationError, match='Cannot build'):
            make_folds(np.array([True, False, True]), 5, seed=0)

    def test_selects_prognostic_factor(self, blinded_trial: BlindedDataset) -> None:
        selection: CvSelection = cv_select(
            blinded_trial, psi_grid=[1.0, 0.5], folds=5, seed=2, n_lambda=25
        )

        assert selection.psi in {0.5, 1.0}
        assert 'x1' in selection.selected_covariates
        assert len(selection.surface) == 50  # noqa: PLR2004
        assert selection.surface_frame().shape == (50, 4)

    def test_one_se_rule_prefers_larger_lambda(self, blinded_trial: BlindedDataset) -> None:
        minimum: CvSelection = cv_select(
            blinded_trial, psi_grid=[1.0], folds=5, seed=2, n_lambda=25
        )
        one_se: CvSelection = cv_select(
            blinded_trial, psi_grid=[1.0], folds=5, seed=2, n_lambda=25, rule='lambda-1se'
        )

        assert one_se.lambda_value >= minimum.lambda_value

    def test_empty_grid(self, blinded_trial: BlindedDataset) -> None:
        with pytest.raises(DataValidationError, match='psi_grid'):
            cv_select(blinded_trial, psi_grid=[])


class TestPenalizedObjective:
    """Invariances and descent of the penalized fit."""

    def test_affine_rescaling_is_absorbed(
        self, ph_trial: TrialDataset, blinded_trial: BlindedDataset
    ) -> None:
        rescaled: TrialDataset = TrialDataset(
            specs=ph_trial.specs,
            records=[
                record.model_copy(
                    update={
                        'covariates': {
                            **record.covariates,
                            'z1': 4.0 * float(record.covariates['z1']) - 2.5,
                        }
                    }
                )
                for record in ph_trial.records
            ],
        )
        original: ElasticNetFit = enet_path(blinded_trial, psi=0.5, n_lambda=12)

        moved: ElasticNetFit = enet_path(blind(rescaled), psi=0.5, lambdas=original.lambdas)
        z1: int = original.columns.index('z1')
        expected: np.ndarray = np.asarray(original.coefficient_path)
        expected[:, z1] /= 4.0

        assert moved.columns == original.columns
        np.testing.assert_allclose(moved.coefficient_path, expected, atol=1e-7)
        np.testing.assert_allclose(moved.deviance_path, original.deviance_path, rtol=1e-9)

    def test_objective_trace_never_increases(self, blinded_trial: BlindedDataset) -> None:
        x, _, _ = blinded_trial.design_matrix()
        x_std: np.ndarray = (x - x.mean(axis=0)) / x.std(axis=0)
        problem: PenalizedCoxProblem = PenalizedCoxProblem(
            blinded_trial.times, blinded_trial.events, x_std, np.ones(x.shape[1], dtype=bool)
        )
        lam: float = 0.05 * problem.lambda_max(0.5)

        beta, converged, trace = problem.solve(0.5, lam)

        assert converged
        assert len(trace) > 1
        assert trace[-1] < trace[0]
        assert np.all(np.diff(trace) <= 1e-12 * abs(trace[0]))
        assert trace[-1] == pytest.approx(problem.objective(beta, 0.5, lam))

    def test_cv_is_reproducible(self, blinded_trial: BlindedDataset) -> None:
        first: CvSelection = cv_select(
            blinded_trial, psi_grid=[1.0, 0.5], folds=5, seed=9, n_lambda=15
        )
        second: CvSelection = cv_select(
            blinded_trial, psi_grid=[0.5, 1.0], folds=5, seed=9, n_lambda=15
        )

        assert first == second
