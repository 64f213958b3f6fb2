# fivestar/aftavg.py
"""
Per-stratum treatment effects from parametric AFT models.

Each final stratum is fitted with log T = mu + delta * I(arm A) + sigma * eps
under three error laws (Weibull, log-normal, log-logistic). The fits are
averaged with AIC weights into one log time ratio and its variance, from
which the time ratio, its CI and Pr(TR > 1) follow. A Cox fit on the arm
indicator adds a supplemental hazard-ratio block.
"""

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from fivestar.coxnet import cox_fit, gt_test
from fivestar.exceptions import (
    ConvergenceError,
    DataValidationError,
    DegenerateDataError,
    NumericalError,
)
from fivestar.models import TrialDataset
from fivestar.result_models.cox import CoxFit, GtTestResult
from fivestar.result_models.effects import AftFit, Distribution, HrBlock, StratumEffect

logger: logging.Logger = logging.getLogger(__name__)

DISTRIBUTIONS: tuple[Distribution, ...] = ('weibull', 'lognormal', 'loglogistic')
N_PARAMETERS: int = 3
MAX_ITERATIONS: int = 100
GRADIENT_TOLERANCE: float = 1e-8
FLAG_THRESHOLD: float = 0.20


# =============================================================================
# Standardized error laws on the log-time scale
# =============================================================================

# Each law returns (value, first derivative, second derivative) in z.
LawTerms = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray, np.ndarray]]


def _weibull_density(z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    ez: np.ndarray = np.exp(z)
    return z - ez, 1.0 - ez, -ez


def _weibull_survival(z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    ez: np.ndarray = np.exp(z)
    return -ez, -ez, -ez


def _lognormal_density(z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return -0.5 * z**2 - 0.5 * np.log(2.0 * np.pi), -z, -np.ones_like(z)


def _lognormal_survival(z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    log_tail: np.ndarray = special.log_ndtr(-z)
    # inverse Mills ratio phi(z) / Phi(-z), computed on the log scale
    ratio: np.ndarray = np.exp(stats.norm.logpdf(z) - log_tail)
    return log_tail, -ratio, -ratio * (ratio - z)


def _loglogistic_density(z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    cdf: np.ndarray = special.expit(z)
    return z - 2.0 * np.logaddexp(0.0, z), 1.0 - 2.0 * cdf, -2.0 * cdf * (1.0 - cdf)


def _loglogistic_survival(z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    cdf: np.ndarray = special.expit(z)
    return -np.logaddexp(0.0, z), -cdf, -cdf * (1.0 - cdf)


@dataclass(frozen=True)
class _Law:
    density: LawTerms
    survival: LawTerms


_LAWS: dict[Distribution, _Law] = {
    'weibull': _Law(_weibull_density, _weibull_survival),
    'lognormal': _Law(_lognormal_density, _lognormal_survival),
    'loglogistic': _Law(_loglogistic_density, _loglogistic_survival),
}


class AftLikelihood:
    """
    Censored log-likelihood of the AFT model in theta = (mu, delta, log sigma).

    The likelihood is on the time scale: an event contributes
    log f0(z) - log sigma - log t, a censored time log S0(z).
    """

    def __init__(
        self,
        times: np.ndarray,
        events: np.ndarray,
        treated: np.ndarray,
        distribution: Distribution,
    ) -> None:
        if distribution not in _LAWS:
            raise DataValidationError(f'Unknown distribution {distribution!r}')
        keep: np.ndarray = (np.asarray(times) > 0) | np.asarray(events, dtype=bool)
        if np.any(np.asarray(times)[np.asarray(events, dtype=bool)] <= 0):
            raise DataValidationError('AFT models need positive event times')
        self.y: np.ndarray = np.log(np.asarray(times, dtype=float)[keep])
        self.events: np.ndarray = np.asarray(events, dtype=bool)[keep]
        self.treated: np.ndarray = np.asarray(treated, dtype=float)[keep]
        self.law: _Law = _LAWS[distribution]

    def _terms(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, float]:
        mu, delta, log_sigma = theta
        sigma: float = float(np.exp(log_sigma))
        z: np.ndarray = (self.y - mu - delta * self.treated) / sigma
        value: np.ndarray = np.empty_like(z)
        first: np.ndarray = np.empty_like(z)
        second: np.ndarray = np.empty_like(z)
        ev: np.ndarray = self.events
        value[ev], first[ev], second[ev] = self.law.density(z[ev])
        value[~ev], first[~ev], second[~ev] = self.law.survival(z[~ev])
        return z, value, first, second, sigma

    def log_likelihood(self, theta: np.ndarray) -> float:
        _, value, _, _, _ = self._terms(theta)
        n_events: int = int(self.events.sum())
        return float(value.sum() - n_events * theta[2] - self.y[self.events].sum())

    def evaluate(self, theta: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
        """Log-likelihood, gradient and Hessian at theta."""
        z, value, u, v, sigma = self._terms(theta)
        ev: np.ndarray = self.events.astype(float)
        arm: np.ndarray = self.treated
        ll: float = float(value.sum() - ev.sum() * theta[2] - self.y[self.events].sum())

        gradient: np.ndarray = np.array(
            [
                -np.sum(u) / sigma,
                -np.sum(arm * u) / sigma,
                -np.sum(z * u) - ev.sum(),
            ]
        )
        cross: np.ndarray = z * v + u
        h_mm: float = float(np.sum(v)) / sigma**2
        h_md: float = float(np.sum(arm * v)) / sigma**2
        h_ms: float = float(np.sum(cross)) / sigma
        h_ds: float = float(np.sum(arm * cross)) / sigma
        h_ss: float = float(np.sum(z * u + z**2 * v))
        hessian: np.ndarray = np.array(
            [
                [h_mm, h_md, h_ms],
                [h_md, h_md, h_ds],
                [h_ms, h_ds, h_ss],
            ]
        )
        return ll, gradient, hessian


# =============================================================================
# Fitting
# =============================================================================


def _arm_events(events: np.ndarray, treated: np.ndarray) -> tuple[int, int]:
    return int(events[treated].sum()), int(events[~treated].sum())


def _check_two_arms(times: np.ndarray, events: np.ndarray, treated: np.ndarray) -> None:
    if times.size == 0:
        raise DegenerateDataError('Stratum has no subjects')
    if treated.all() or not treated.any():
        raise DegenerateDataError('Stratum lacks one of the arms')
    events_a, events_b = _arm_events(events, treated)
    if events_a == 0 or events_b == 0:
        raise DegenerateDataError(
            f'Stratum has an arm without events (A: {events_a}, B: {events_b})'
        )


def fit_aft_arrays(
    times: np.ndarray, events: np.ndarray, treated: np.ndarray, distribution: Distribution
) -> AftFit:
    """
    Maximum likelihood AFT fit for raw arrays (see aft_fit).

    Raises:
        DegenerateDataError: If an arm is missing or has no events.
        ConvergenceError: If the iteration produced non-finite values.
    """
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=bool)
    treated = np.asarray(treated, dtype=bool)
    _check_two_arms(times, events, treated)

    likelihood: AftLikelihood = AftLikelihood(times, events, treated, distribution)
    log_event_times: np.ndarray = np.log(times[events])
    theta: np.ndarray = np.array(
        [
            float(log_event_times.mean()),
            0.0,
            float(np.log(max(float(log_event_times.std()), 0.1))),
        ]
    )

    value, gradient, hessian = likelihood.evaluate(theta)
    converged: bool = False
    iterations: int = 0
    for iterations in range(1, MAX_ITERATIONS + 1):
        if np.max(np.abs(gradient)) < GRADIENT_TOLERANCE:
            converged = True
            iterations -= 1
            break
        try:
            step: np.ndarray = -np.linalg.solve(hessian, gradient)
        except np.linalg.LinAlgError:
            step = gradient.copy()
        if not float(step @ gradient) > 0:
            # Hessian not negative definite here: fall back to steepest ascent
            step = gradient / max(float(np.max(np.abs(gradient))), 1.0)

        candidate: np.ndarray = theta + step
        candidate_value: float = likelihood.log_likelihood(candidate)
        halvings: int = 0
        while not candidate_value >= value - 1e-12 and halvings < 40:
            step /= 2.0
            candidate = theta + step
            candidate_value = likelihood.log_likelihood(candidate)
            halvings += 1

        theta = candidate
        value, gradient, hessian = likelihood.evaluate(theta)
        if not (np.all(np.isfinite(theta)) and np.isfinite(value)):
            raise ConvergenceError(f'{distribution} AFT fit produced non-finite values')
        logger.debug(
            '%s AFT iteration %d: loglik=%.10g max|grad|=%.3g',
            distribution,
            iterations,
            value,
            float(np.max(np.abs(gradient))),
        )
    else:
        converged = bool(np.max(np.abs(gradient)) < GRADIENT_TOLERANCE)

    if not converged:
        logger.warning('%s AFT fit did not converge in %d iterations', distribution, MAX_ITERATIONS)

    try:
        covariance: np.ndarray = np.linalg.inv(-hessian)
    except np.linalg.LinAlgError:
        covariance = np.linalg.pinv(-hessian)
        converged = False
    variances: np.ndarray = np.diag(covariance)
    if not np.all(np.isfinite(variances)) or np.any(variances <= 0):
        converged = False
        variances = np.where(np.isfinite(variances) & (variances > 0), variances, np.inf)

    sigma: float = float(np.exp(theta[2]))
    events_a, events_b = _arm_events(events, treated)
    return AftFit(
        distribution=distribution,
        mu=float(theta[0]),
        delta=float(theta[1]),
        sigma=sigma,
        log_likelihood=value,
        aic=-2.0 * value + 2.0 * N_PARAMETERS,
        var_delta=float(variances[1]) if np.isfinite(variances[1]) else 0.0,
        se_mu=_finite_or_nan(np.sqrt(variances[0])),
        se_delta=_finite_or_nan(np.sqrt(variances[1])),
        se_sigma=_finite_or_nan(sigma * np.sqrt(variances[2])),
        iterations=iterations,
        converged=converged,
        n=int(times.size),
        events_a=events_a,
        events_b=events_b,
    )


def _finite_or_nan(value: float) -> float:
    return float(value) if np.isfinite(value) else float('nan')


def aft_fit(data: TrialDataset, distribution: Distribution) -> AftFit:
    """
    Fit log T = mu + delta * I(arm A) + sigma * eps by Newton with line search.

    Starts at (mean log event time, 0, log max(sd of log event times, 0.1))
    and stops when the gradient max-norm drops below 1e-8 or after 100
    iterations (the fit is then returned with converged=False).

    Args:
        data: Subjects of one stratum.
        distribution: 'weibull', 'lognormal' or 'loglogistic'.

    Raises:
        DegenerateDataError: If an arm is missing or has no events.
        ConvergenceError: If the iteration produced non-finite values.
    """
    return fit_aft_arrays(data.times, data.events, data.treated, distribution)


def model_average(fits: Sequence[AftFit]) -> tuple[float, float, dict[str, float]]:
    """
    AIC-weighted average of the log time ratios.

    Weights are exp(-AIC/2) normalized over the converged fits (AICs shifted
    by their minimum first); the variance is
    [sum_m w_m sqrt(V_m + (delta_m - delta_hat)^2)]^2.

    Returns:
        Tuple (delta_hat, variance, weight per distribution).

    Raises:
        ConvergenceError: If no fit converged.
    """
    usable: list[AftFit] = [
        fit for fit in fits if fit.converged and np.isfinite(fit.aic) and fit.var_delta > 0
    ]
    if not usable:
        raise ConvergenceError('No AFT fit converged; cannot average')

    aic: np.ndarray = np.array([fit.aic for fit in usable])
    raw: np.ndarray = np.exp(-0.5 * (aic - aic.min()))
    weights: np.ndarray = raw / raw.sum()
    deltas: np.ndarray = np.array([fit.delta for fit in usable])
    variances: np.ndarray = np.array([fit.var_delta for fit in usable])

    delta_hat: float = float(weights @ deltas)
    variance: float = float(weights @ np.sqrt(variances + (deltas - delta_hat) ** 2)) ** 2

    weight_map: dict[str, float] = {fit.distribution: 0.0 for fit in fits}
    for fit, weight in zip(usable, weights, strict=True):
        weight_map[fit.distribution] = float(weight)
    return delta_hat, variance, weight_map


def flag_stratum(pr_tr_gt_1: float, threshold: float = FLAG_THRESHOLD) -> bool:
    """True when Pr(TR > 1) falls strictly below the threshold."""
    return pr_tr_gt_1 < threshold


def weibull_ph_identity_check(fit: AftFit) -> tuple[float, float]:
    """
    Hazard ratio implied by a Weibull AFT fit: beta = -delta / sigma, theta = e^beta.

    Raises:
        DataValidationError: If the fit is not a Weibull fit.
        ConvergenceError: If the fit did not converge.
    """
    if fit.distribution != 'weibull':
        raise DataValidationError(f'Expected a Weibull fit, got {fit.distribution!r}')
    if not fit.converged:
        raise ConvergenceError('Weibull fit did not converge')
    beta: float = -fit.delta / fit.sigma
    return beta, float(np.exp(beta))


# =============================================================================
# Stratum summaries
# =============================================================================


def _hr_block(data: TrialDataset, alpha: float, weibull: AftFit | None) -> HrBlock | None:
    try:
        fit: CoxFit = cox_fit(data, ['arm'])
    except NumericalError as e:
        logger.warning('Supplemental Cox fit failed: %s', e)
        return None
    if not fit.converged:
        logger.warning('Supplemental Cox fit did not converge; HR block omitted')
        return None

    beta: float = fit.coefficients[0]
    se: float = float(fit.standard_errors()[0])
    q: float = float(stats.norm.ppf(1.0 - alpha / 2.0))
    gt_p: float | None = None
    try:
        result: GtTestResult = gt_test(fit, data)
        gt_p = result.global_p
    except (NumericalError, np.linalg.LinAlgError) as e:
        logger.warning('Grambsch-Therneau test failed: %s', e)

    weibull_hr: float | None = None
    if weibull is not None and weibull.converged:
        weibull_hr = weibull_ph_identity_check(weibull)[1]

    return HrBlock(
        log_hr=beta,
        se=se,
        hr=float(np.exp(beta)),
        ci_lower=float(np.exp(beta - q * se)),
        ci_upper=float(np.exp(beta + q * se)),
        pr_hr_lt_1=float(stats.norm.cdf(-beta / se)),
        converged=fit.converged,
        gt_p=gt_p,
        weibull_hr=weibull_hr,
    )


def stratum_summary(
    data: TrialDataset,
    stratum: int = 1,
    alpha: float = 0.05,
    flag_threshold: float = FLAG_THRESHOLD,
    distributions: Sequence[Distribution] = DISTRIBUTIONS,
    prelim_ranks: Sequence[int] | None = None,
    include_hr: bool = True,
) -> StratumEffect:
    """
    Model-averaged time ratio of one stratum with its CI and Pr(TR > 1).

    Args:
        data: Subjects of the stratum.
        stratum: Final stratum number.
        alpha: CI level is 1 - alpha.
        flag_threshold: Flag the stratum when Pr(TR > 1) is below this.
        distributions: Error laws to fit and average.
        prelim_ranks: Preliminary ranks pooled into this stratum (reporting).
        include_hr: Add the supplemental Cox block.

    Raises:
        DegenerateDataError: If an arm is missing or has no events.
        ConvergenceError: If no AFT fit converged.
    """
    _check_two_arms(data.times, data.events, data.treated)

    fits: list[AftFit] = []
    for distribution in distributions:
        try:
            fits.append(aft_fit(data, distribution))
        except ConvergenceError as e:
            logger.warning('Stratum %d: %s fit failed: %s', stratum, distribution, e)

    delta_hat, variance, weights = model_average(fits)
    for distribution in distributions:
        weights.setdefault(distribution, 0.0)

    sd: float = float(np.sqrt(variance))
    q: float = float(stats.norm.ppf(1.0 - alpha / 2.0))
    pr_tr_gt_1: float = float(stats.norm.cdf(delta_hat / sd))
    flagged: bool = flag_stratum(pr_tr_gt_1, flag_threshold)
    if flagged:
        logger.warning('Stratum %d flagged: Pr(TR > 1) = %.3f', stratum, pr_tr_gt_1)

    weibull: AftFit | None = next((fit for fit in fits if fit.distribution == 'weibull'), None)
    events_a, events_b = _arm_events(data.events, data.treated)
    effect: StratumEffect = StratumEffect(
        stratum=stratum,
        n=data.n,
        n_a=int(data.treated.sum()),
        n_b=int((~data.treated).sum()),
        events_a=events_a,
        events_b=events_b,
        delta_hat=delta_hat,
        v=variance,
        weights=weights,
        fits=fits,
        tr=float(np.exp(delta_hat)),
        tr_ci_lower=float(np.exp(delta_hat - q * sd)),
        tr_ci_upper=float(np.exp(delta_hat + q * sd)),
        pr_tr_gt_1=pr_tr_gt_1,
        flagged=flagged,
        hr=_hr_block(data, alpha, weibull) if include_hr else None,
        prelim_ranks=list(prelim_ranks or []),
    )
    logger.info(
        'Stratum %d (n=%d): TR=%.3f (%.3f, %.3f) Pr(TR>1)=%.3f weights=%s',
        stratum,
        effect.n,
        effect.tr,
        effect.tr_ci_lower,
        effect.tr_ci_upper,
        pr_tr_gt_1,
        {name: round(weight, 4) for name, weight in weights.items()},
    )
    return effect
