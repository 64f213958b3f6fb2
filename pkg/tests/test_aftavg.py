"""Tests for the AFT fits, model averaging and the stratum summary."""

import math

import numpy as np
import pytest

from fivestar.aftavg import (
    DISTRIBUTIONS,
    AftLikelihood,
    aft_fit,
    flag_stratum,
    model_average,
    stratum_summary,
    weibull_ph_identity_check,
)
from fivestar.exceptions import ConvergenceError, DataValidationError, DegenerateDataError
from fivestar.models import TrialDataset
from fivestar.result_models import AftFit, StratumEffect
from tests.conftest import TrialFactory, simulate_trial

LOG_TIMES_A: list[float] = [0.6, 1.1, 1.5, 2.2]
LOG_TIMES_B: list[float] = [0.0, 0.4, 1.0, 1.3]


def make_fit(distribution: str, aic: float, delta: float, var_delta: float) -> AftFit:
    """Converged fit with the given AIC, log time ratio and variance."""
    return AftFit(
        distribution=distribution,  # type: ignore[arg-type]
        mu=0.0,
        delta=delta,
        sigma=1.0,
        log_likelihood=-(aic - 6.0) / 2.0,
        aic=aic,
        var_delta=var_delta,
        se_mu=0.1,
        se_delta=math.sqrt(var_delta),
        se_sigma=0.1,
        iterations=5,
        converged=True,
        n=100,
        events_a=30,
        events_b=30,
    )


def swap_arms(data: TrialDataset, factory: TrialFactory) -> TrialDataset:
    return factory(
        data.times.tolist(),
        data.events.tolist(),
        ['B' if arm == 'A' else 'A' for arm in data.arms],
    )


@pytest.fixture(scope='module')
def no_prognosis_trial() -> TrialDataset:
    """Weibull PH trial (shape 1.5, HR 0.6) without a prognostic factor."""
    return simulate_trial(n=600, seed=5, prognostic=0.0)


@pytest.fixture
def uncensored_trial(make_trial: TrialFactory) -> TrialDataset:
    return make_trial(
        np.exp(LOG_TIMES_A + LOG_TIMES_B).tolist(),
        [1] * 8,
        ['A'] * 4 + ['B'] * 4,
    )


class TestAftFit:
    """Tests for the maximum likelihood fits."""

    def test_lognormal_without_censoring_is_least_squares(
        self, uncensored_trial: TrialDataset
    ) -> None:
        fit: AftFit = aft_fit(uncensored_trial, 'lognormal')
        log_a: np.ndarray = np.asarray(LOG_TIMES_A)
        log_b: np.ndarray = np.asarray(LOG_TIMES_B)
        residuals: np.ndarray = np.concatenate((log_a - log_a.mean(), log_b - log_b.mean()))
        sigma: float = float(np.sqrt(np.mean(residuals**2)))

        assert fit.converged
        assert fit.mu == pytest.approx(log_b.mean(), abs=1e-6)
        assert fit.delta == pytest.approx(log_a.mean() - log_b.mean(), abs=1e-6)
        assert fit.sigma == pytest.approx(sigma, rel=1e-6)
        assert fit.var_delta == pytest.approx(sigma**2 / 2.0, rel=1e-5)
        assert fit.aic == pytest.approx(-2.0 * fit.log_likelihood + 6.0)

    def test_weibull_recovers_hazard_ratio(self, no_prognosis_trial: TrialDataset) -> None:
        fit: AftFit = aft_fit(no_prognosis_trial, 'weibull')
        beta, hazard_ratio = weibull_ph_identity_check(fit)

        assert fit.converged
        assert fit.sigma == pytest.approx(1 / 1.5, abs=0.12)
        assert beta == pytest.approx(-fit.delta / fit.sigma)
        assert hazard_ratio == pytest.approx(0.6, abs=0.2)

    @pytest.mark.parametrize('distribution', DISTRIBUTIONS)
    def test_benefit_lengthens_time(
        self, no_prognosis_trial: TrialDataset, distribution: str
    ) -> None:
        fit: AftFit = aft_fit(no_prognosis_trial, distribution)  # type: ignore[arg-type]

        assert fit.converged
        assert fit.delta > 0
        assert fit.events_a + fit.events_b == int(no_prognosis_trial.events.sum())

    @pytest.mark.parametrize('distribution', DISTRIBUTIONS)
    def test_rescaling_time_shifts_only_the_intercept(
        self, no_prognosis_trial: TrialDataset, make_trial: TrialFactory, distribution: str
    ) -> None:
        factor: float = 7.0
        rescaled: TrialDataset = make_trial(
            (no_prognosis_trial.times * factor).tolist(),
            no_prognosis_trial.events.tolist(),
            no_prognosis_trial.arms,
        )

        original: AftFit = aft_fit(no_prognosis_trial, distribution)  # type: ignore[arg-type]
        scaled: AftFit = aft_fit(rescaled, distribution)  # type: ignore[arg-type]

        assert scaled.converged
        assert scaled.mu == pytest.approx(original.mu + math.log(factor), abs=1e-6)
        assert scaled.delta == pytest.approx(original.delta, abs=1e-6)
        assert scaled.sigma == pytest.approx(original.sigma, rel=1e-6)
        assert scaled.var_delta == pytest.approx(original.var_delta, rel=1e-5)

    @pytest.mark.parametrize('distribution', DISTRIBUTIONS)
    def test_swapping_arms_negates_delta(
        self, no_prognosis_trial: TrialDataset, make_trial: TrialFactory, distribution: str
    ) -> None:
        original: AftFit = aft_fit(no_prognosis_trial, distribution)  # type: ignore[arg-type]
        mirrored: TrialDataset = swap_arms(no_prognosis_trial, make_trial)
        swapped: AftFit = aft_fit(mirrored, distribution)  # type: ignore[arg-type]

        assert swapped.delta == pytest.approx(-original.delta, abs=1e-6)
        assert swapped.mu == pytest.approx(original.mu + original.delta, abs=1e-6)
        assert swapped.var_delta == pytest.approx(original.var_delta, rel=1e-5)
        assert swapped.log_likelihood == pytest.approx(original.log_likelihood, abs=1e-8)

    def test_identity_check_needs_weibull(self, uncensored_trial: TrialDataset) -> None:
        with pytest.raises(DataValidationError, match='Weibull'):
            weibull_ph_identity_check(aft_fit(uncensored_trial, 'lognormal'))

    def test_single_arm_is_degenerate(self, make_trial: TrialFactory) -> None:
        with pytest.raises(DegenerateDataError, match='arms'):
            aft_fit(make_trial([1.0, 2.0], [1, 1], ['A', 'A']), 'weibull')

    def test_arm_without_events_is_degenerate(self, make_trial: TrialFactory) -> None:
        data: TrialDataset = make_trial([1.0, 2.0, 3.0], [1, 0, 0], ['A', 'B', 'B'])

        with pytest.raises(DegenerateDataError, match='without events'):
            aft_fit(data, 'loglogistic')


class TestAftLikelihood:
    """The analytic derivatives agree with finite differences."""

    @pytest.mark.parametrize('distribution', DISTRIBUTIONS)
    def test_derivatives(self, small_trial: TrialDataset, distribution: str) -> None:
        likelihood: AftLikelihood = AftLikelihood(
            small_trial.times, small_trial.events, small_trial.treated, distribution  # type: ignore[arg-type]
        )
        theta: np.ndarray = np.array([1.2, 0.3, -0.4])
        _, gradient, hessian = likelihood.evaluate(theta)
        step: float = 1e-5

        numeric_gradient: np.ndarray = np.zeros(3)
        numeric_hessian: np.ndarray = np.zeros((3, 3))
        for j in range(3):
            shift: np.ndarray = np.zeros(3)
            shift[j] = step
            numeric_gradient[j] = (
                likelihood.log_likelihood(theta + shift)
                - likelihood.log_likelihood(theta - shift)
            ) / (2 * step)
            numeric_hessian[:, j] = (
                likelihood.evaluate(theta + shift)[1] - likelihood.evaluate(theta - shift)[1]
            ) / (2 * step)

        np.testing.assert_allclose(gradient, numeric_gradient, rtol=1e-5, atol=1e-6)
        np.testing.assert_allclose(hessian, numeric_hessian, rtol=1e-4, atol=1e-5)

    def test_unknown_distribution(self, small_trial: TrialDataset) -> None:
        with pytest.raises(DataValidationError, match='Unknown distribution'):
            AftLikelihood(small_trial.times, small_trial.events, small_trial.treated, 'gamma')  # type: ignore[arg-type]


class TestModelAverage:
    """Tests for the AIC-weighted average."""

    def test_weights_and_variance(self, no_prognosis_trial: TrialDataset) -> None:
        fits: list[AftFit] = [aft_fit(no_prognosis_trial, d) for d in DISTRIBUTIONS]

        delta_hat, variance, weights = model_average(fits)
        deltas: list[float] = [fit.delta for fit in fits]

        aic: np.ndarray = np.array([fit.aic for fit in fits])
        expected_weights: np.ndarray = np.exp(-0.5 * (aic - aic.min()))
        expected_weights /= expected_weights.sum()
        expected_delta: float = float(expected_weights @ np.asarray(deltas))
        spread: np.ndarray = np.sqrt(
            np.array([fit.var_delta for fit in fits]) + (np.asarray(deltas) - expected_delta) ** 2
        )

        assert sum(weights.values()) == pytest.approx(1.0)
        assert set(weights) == set(DISTRIBUTIONS)
        np.testing.assert_allclose([weights[d] for d in DISTRIBUTIONS], expected_weights)
        assert delta_hat == pytest.approx(expected_delta)
        assert variance == pytest.approx(float(expected_weights @ spread) ** 2)
        assert min(deltas) - 1e-12 <= delta_hat <= max(deltas) + 1e-12
        assert variance >= min(fit.var_delta for fit in fits) - 1e-12

    def test_aic_gap_of_twenty(self) -> None:
        fits: list[AftFit] = [
            make_fit('weibull', 100.0, 0.1, 0.01),
            make_fit('lognormal', 120.0, 0.2, 0.01),
            make_fit('loglogistic', 120.0, 0.3, 0.01),
        ]

        _, _, weights = model_average(fits)

        minor: float = math.exp(-10.0) / (1.0 + 2.0 * math.exp(-10.0))
        assert weights['weibull'] == pytest.approx(1.0 - 2.0 * minor, rel=1e-12)
        assert weights['weibull'] == pytest.approx(0.99991, abs=1e-5)
        assert weights['lognormal'] == pytest.approx(minor, rel=1e-12)
        assert weights['loglogistic'] == pytest.approx(4.54e-5, abs=1e-7)

    def test_between_model_spread_enters_variance(self) -> None:
        fits: list[AftFit] = [
            make_fit('weibull', 50.0, 0.0, 1.0),
            make_fit('lognormal', 50.0, 2.0, 1.0),
        ]

        delta_hat, variance, weights = model_average(fits)

        assert weights == pytest.approx({'weibull': 0.5, 'lognormal': 0.5})
        assert delta_hat == pytest.approx(1.0, abs=1e-10)
        assert variance == pytest.approx(2.0, abs=1e-10)

    def test_weights_ignore_a_common_aic_shift(self) -> None:
        fits: list[AftFit] = [
            make_fit('weibull', 210.3, 0.1, 0.02),
            make_fit('lognormal', 212.9, 0.25, 0.03),
            make_fit('loglogistic', 211.4, 0.2, 0.025),
        ]
        shifted: list[AftFit] = [
            fit.model_copy(update={'aic': fit.aic + 1234.5}) for fit in fits
        ]

        delta_hat, variance, weights = model_average(fits)
        shifted_delta, shifted_variance, shifted_weights = model_average(shifted)

        assert shifted_weights == pytest.approx(weights, rel=1e-10)
        assert shifted_delta == pytest.approx(delta_hat, rel=1e-10)
        assert shifted_variance == pytest.approx(variance, rel=1e-10)

    def test_single_fit_is_unchanged(self, uncensored_trial: TrialDataset) -> None:
        fit: AftFit = aft_fit(uncensored_trial, 'lognormal')

        delta_hat, variance, weights = model_average([fit])

        assert delta_hat == pytest.approx(fit.delta)
        assert variance == pytest.approx(fit.var_delta)
        assert weights == {'lognormal': 1.0}

    def test_unconverged_fits_get_zero_weight(self, no_prognosis_trial: TrialDataset) -> None:
        good: AftFit = aft_fit(no_prognosis_trial, 'weibull')
        bad: AftFit = aft_fit(no_prognosis_trial, 'lognormal').model_copy(
            update={'converged': False}
        )

        _, _, weights = model_average([good, bad])

        assert weights == {'weibull': 1.0, 'lognormal': 0.0}

    def test_no_converged_fit(self, uncensored_trial: TrialDataset) -> None:
        bad: AftFit = aft_fit(uncensored_trial, 'weibull').model_copy(update={'converged': False})

        with pytest.raises(ConvergenceError, match='No AFT fit converged'):
            model_average([bad])


class TestStratumSummary:
    """Tests for stratum_summary."""

    def test_summary(self, no_prognosis_trial: TrialDataset) -> None:
        effect: StratumEffect = stratum_summary(no_prognosis_trial, stratum=2, prelim_ranks=[2, 3])

        assert effect.stratum == 2  # noqa: PLR2004
        assert effect.n == no_prognosis_trial.n
        assert effect.n_a + effect.n_b == effect.n
        assert sum(effect.weights.values()) == pytest.approx(1.0)
        assert effect.tr == pytest.approx(np.exp(effect.delta_hat))
        assert effect.tr_ci_lower < effect.tr < effect.tr_ci_upper
        assert effect.pr_tr_gt_1 > 0.5  # noqa: PLR2004
        assert not effect.flagged
        assert effect.prelim_ranks == [2, 3]
        assert effect.hr is not None
        assert effect.hr.hr < 1.0
        assert effect.hr.weibull_hr is not None

    def test_harmful_arm_is_flagged(
        self, no_prognosis_trial: TrialDataset, make_trial: TrialFactory
    ) -> None:
        swapped: TrialDataset = swap_arms(no_prognosis_trial, make_trial)

        effect: StratumEffect = stratum_summary(swapped, include_hr=False)

        assert effect.flagged
        assert effect.pr_tr_gt_1 < 0.2  # noqa: PLR2004
        assert effect.hr is None

    def test_swapping_arms_negates_average(
        self, no_prognosis_trial: TrialDataset, make_trial: TrialFactory
    ) -> None:
        original: StratumEffect = stratum_summary(no_prognosis_trial, include_hr=False)
        swapped: StratumEffect = stratum_summary(
            swap_arms(no_prognosis_trial, make_trial), include_hr=False
        )

        assert swapped.delta_hat == pytest.approx(-original.delta_hat, abs=1e-6)
        assert swapped.v == pytest.approx(original.v, rel=1e-5)
        assert swapped.tr == pytest.approx(1.0 / original.tr, rel=1e-5)
        assert swapped.pr_tr_gt_1 == pytest.approx(1.0 - original.pr_tr_gt_1, abs=1e-6)

    def test_rescaling_time_keeps_the_average(
        self, no_prognosis_trial: TrialDataset, make_trial: TrialFactory
    ) -> None:
        rescaled: TrialDataset = make_trial(
            (no_prognosis_trial.times / 30.0).tolist(),
            no_prognosis_trial.events.tolist(),
            no_prognosis_trial.arms,
        )

        original: StratumEffect = stratum_summary(no_prognosis_trial, include_hr=False)
        scaled: StratumEffect = stratum_summary(rescaled, include_hr=False)

        assert scaled.delta_hat == pytest.approx(original.delta_hat, abs=1e-6)
        assert scaled.v == pytest.approx(original.v, rel=1e-5)
        assert scaled.weights == pytest.approx(original.weights, abs=1e-6)

    @pytest.mark.parametrize(('pr_tr_gt_1', 'flagged'), [(0.19, True), (0.2, False), (0.21, False)])
    def test_flag_boundary(self, pr_tr_gt_1: float, flagged: bool) -> None:
        assert flag_stratum(pr_tr_gt_1) is flagged

    def test_flag_follows_threshold(self, no_prognosis_trial: TrialDataset) -> None:
        base: StratumEffect = stratum_summary(no_prognosis_trial, include_hr=False)

        above: StratumEffect = stratum_summary(
            no_prognosis_trial, flag_threshold=base.pr_tr_gt_1 + 0.01, include_hr=False
        )
        below: StratumEffect = stratum_summary(
            no_prognosis_trial, flag_threshold=base.pr_tr_gt_1 - 0.01, include_hr=False
        )

        assert above.flagged
        assert not below.flagged

    def test_subset_of_distributions(self, no_prognosis_trial: TrialDataset) -> None:
        effect: StratumEffect = stratum_summary(
            no_prognosis_trial, distributions=['weibull'], include_hr=False
        )

        assert effect.weights == {'weibull': 1.0}
        assert len(effect.fits) == 1

    def test_degenerate_stratum(self, make_trial: TrialFactory) -> None:
        with pytest.raises(DegenerateDataError):
            stratum_summary(make_trial([1.0, 2.0], [1, 1], ['B', 'B']))
