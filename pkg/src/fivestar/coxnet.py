# fivestar/coxnet.py
"""
Cox partial-likelihood machinery.

BreslowLikelihood evaluates the (optionally stratified) Breslow log partial
likelihood, its score and observed information. On top of it sit:

- cox_fit: unpenalized Newton-Raphson with step halving.
- gt_test: Grambsch-Therneau score test of proportional hazards.
- enet_path / ridge_fit: elastic-net penalized fits on standardized
  covariates, solved by proximal Newton with coordinate descent.
- cv_select: k-fold cross-validation over a psi grid (joblib across psi).
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Literal

import numpy as np
from joblib import Parallel, delayed
from scipy import stats

from fivestar.exceptions import (
    ConvergenceError,
    DataValidationError,
    RankDeficiencyError,
)
from fivestar.models import BlindedDataset, TrialDataset
from fivestar.nonparam import km, one_tailed_p
from fivestar.result_models.cox import (
    CoxFit,
    CvCell,
    CvSelection,
    ElasticNetFit,
    GtTestResult,
    GtTransform,
)
from fivestar.result_models.survival import StepFunction

logger: logging.Logger = logging.getLogger(__name__)

MAX_NEWTON_ITERATIONS: int = 50
MAX_STANDARDIZED_BETA: float = 15.0
SCORE_TOLERANCE: float = 1e-8
LOGLIK_TOLERANCE: float = 1e-10
MAX_HALVINGS: int = 30
MAX_FOLD_ATTEMPTS: int = 20

CvRule = Literal['lambda-min', 'lambda-1se']


def _reverse_cumsum(values: np.ndarray) -> np.ndarray:
    return np.cumsum(values[::-1], axis=0)[::-1]


# =============================================================================
# Breslow partial likelihood
# =============================================================================


@dataclass(frozen=True)
class _Stratum:
    """Risk-set layout of one stratum, positions in time order."""

    rows: np.ndarray
    event_times: np.ndarray
    first: np.ndarray
    last: np.ndarray
    deaths: np.ndarray
    last_event_index: np.ndarray
    sorted_events: np.ndarray


class BreslowLikelihood:
    """
    Breslow log partial likelihood of a Cox model for a fixed design.

    Strata share coefficients but have their own baseline hazard (separate
    risk sets). Strata without events contribute nothing.

    Attributes:
        x: N x p design matrix.
        events: Event indicators.
        n_events: Total number of events.
    """

    def __init__(
        self,
        times: np.ndarray,
        events: np.ndarray,
        x: np.ndarray,
        strata: np.ndarray | None = None,
    ) -> None:
        self.x: np.ndarray = np.asarray(x, dtype=float)
        self.events: np.ndarray = np.asarray(events, dtype=bool)
        self.n_events: int = int(self.events.sum())
        self._event_x_sum: np.ndarray = self.x[self.events].sum(axis=0)
        self._eta_event_rows: np.ndarray = np.flatnonzero(self.events)

        time_array: np.ndarray = np.asarray(times, dtype=float)
        labels: np.ndarray = (
            np.zeros(time_array.size, dtype=int) if strata is None else np.asarray(strata)
        )
        self.strata: list[_Stratum] = []
        for label in np.unique(labels):
            members: np.ndarray = np.flatnonzero(labels == label)
            rows: np.ndarray = members[np.argsort(time_array[members], kind='stable')]
            sorted_times: np.ndarray = time_array[rows]
            sorted_events: np.ndarray = self.events[rows]
            if not sorted_events.any():
                continue
            event_times, deaths = np.unique(sorted_times[sorted_events], return_counts=True)
            self.strata.append(
                _Stratum(
                    rows=rows,
                    event_times=event_times,
                    first=np.searchsorted(sorted_times, event_times, side='left'),
                    last=np.searchsorted(sorted_times, event_times, side='right'),
                    deaths=deaths.astype(float),
                    last_event_index=np.searchsorted(event_times, sorted_times, side='right') - 1,
                    sorted_events=sorted_events,
                )
            )

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def log_likelihood(self, beta: np.ndarray) -> float:
        """Log partial likelihood at beta."""
        eta: np.ndarray = self.x @ beta
        shift: float = float(eta.max())
        weights: np.ndarray = np.exp(eta - shift)
        value: float = float(eta[self.events].sum())
        for stratum in self.strata:
            s0: np.ndarray = _reverse_cumsum(weights[stratum.rows])[stratum.first]
            value -= float(np.sum(stratum.deaths * (np.log(s0) + shift)))
        return value

    def evaluate(self, beta: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
        """
        Log partial likelihood, score and observed information at beta.

        The information uses sum_k d_k S2_k / S0_k = X' diag(w c) X, where c_i
        accumulates d_k / S0_k over the event times at which subject i is at
        risk.
        """
        eta: np.ndarray = self.x @ beta
        shift: float = float(eta.max())
        weights: np.ndarray = np.exp(eta - shift)

        value: float = float(eta[self.events].sum())
        score: np.ndarray = self._event_x_sum.copy()
        information: np.ndarray = np.zeros((self.p, self.p))
        for stratum in self.strata:
            x: np.ndarray = self.x[stratum.rows]
            w: np.ndarray = weights[stratum.rows]
            s0: np.ndarray = _reverse_cumsum(w)[stratum.first]
            s1: np.ndarray = _reverse_cumsum(w[:, None] * x)[stratum.first]
            means: np.ndarray = s1 / s0[:, None]
            d: np.ndarray = stratum.deaths

            value -= float(np.sum(d * (np.log(s0) + shift)))
            score -= d @ means
            c: np.ndarray = np.concatenate(([0.0], np.cumsum(d / s0)))[
                stratum.last_event_index + 1
            ]
            information += (x * (w * c)[:, None]).T @ x - (means * d[:, None]).T @ means
        return value, score, information

    def schoenfeld_blocks(
        self, beta: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """
        Per-event-time pieces for residual-based diagnostics.

        Returns:
            Tuple (event_times, deaths, residuals, variances): summed Schoenfeld
            residuals (K x p) and the risk-set covariance times d_k (K x p x p),
            stacked over strata.
        """
        eta: np.ndarray = self.x @ beta
        weights: np.ndarray = np.exp(eta - eta.max())
        times: list[np.ndarray] = []
        deaths: list[np.ndarray] = []
        residuals: list[np.ndarray] = []
        variances: list[np.ndarray] = []
        for stratum in self.strata:
            x: np.ndarray = self.x[stratum.rows]
            w: np.ndarray = weights[stratum.rows]
            s0: np.ndarray = _reverse_cumsum(w)[stratum.first]
            s1: np.ndarray = _reverse_cumsum(w[:, None] * x)[stratum.first]
            s2: np.ndarray = _reverse_cumsum(w[:, None, None] * x[:, :, None] * x[:, None, :])[
                stratum.first
            ]
            means: np.ndarray = s1 / s0[:, None]
            d: np.ndarray = stratum.deaths
            event_x: np.ndarray = np.vstack(
                (np.zeros(self.p), np.cumsum(x * stratum.sorted_events[:, None], axis=0))
            )
            observed: np.ndarray = event_x[stratum.last] - event_x[stratum.first]
            times.append(stratum.event_times)
            deaths.append(d)
            residuals.append(observed - d[:, None] * means)
            variances.append(
                d[:, None, None]
                * (s2 / s0[:, None, None] - means[:, :, None] * means[:, None, :])
            )
        return (
            np.concatenate(times),
            np.concatenate(deaths),
            np.vstack(residuals),
            np.concatenate(variances),
        )


# =============================================================================
# Design helpers
# =============================================================================


def _standardize(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Center and scale columns (population sd). Constant columns keep scale 1."""
    center: np.ndarray = x.mean(axis=0)
    scale: np.ndarray = x.std(axis=0)
    constant: np.ndarray = scale <= 1e-12
    scale = np.where(constant, 1.0, scale)
    return (x - center) / scale, scale, constant


def _stratum_array(labels: Sequence[object] | np.ndarray | None, n: int) -> np.ndarray | None:
    if labels is None:
        return None
    array: np.ndarray = np.asarray([str(label) for label in labels], dtype=object)
    if array.size != n:
        raise DataValidationError(f'Got {array.size} stratum labels for {n} subjects')
    return array


# =============================================================================
# Unpenalized fit
# =============================================================================


def _newton(
    likelihood: BreslowLikelihood, start: np.ndarray
) -> tuple[np.ndarray, float, np.ndarray, int, bool]:
    """Newton-Raphson with step halving. Returns (beta, loglik, information, iterations, converged)."""
    beta: np.ndarray = start.copy()
    value, score, information = likelihood.evaluate(beta)
    for iteration in range(1, MAX_NEWTON_ITERATIONS + 1):
        if np.max(np.abs(score)) < SCORE_TOLERANCE:
            return beta, value, information, iteration - 1, True
        try:
            step: np.ndarray = np.linalg.solve(information, score)
        except np.linalg.LinAlgError as e:
            raise RankDeficiencyError(f'Singular information matrix: {e}') from e

        candidate: np.ndarray = beta + step
        candidate_value: float = likelihood.log_likelihood(candidate)
        halvings: int = 0
        while not candidate_value >= value - 1e-12 and halvings < MAX_HALVINGS:
            step /= 2.0
            candidate = beta + step
            candidate_value = likelihood.log_likelihood(candidate)
            halvings += 1

        change: float = abs(candidate_value - value) / (abs(value) + 1e-10)
        beta = candidate
        value, score, information = likelihood.evaluate(beta)
        logger.debug(
            'Newton iteration %d: loglik=%.10g max|score|=%.3g halvings=%d',
            iteration,
            value,
            float(np.max(np.abs(score))),
            halvings,
        )
        if np.max(np.abs(beta)) > MAX_STANDARDIZED_BETA:
            logger.warning('Cox fit diverging (|beta| > %g); monotone likelihood', MAX_STANDARDIZED_BETA)
            return beta, value, information, iteration, False
        if change < LOGLIK_TOLERANCE:
            return beta, value, information, iteration, True
    return beta, value, information, MAX_NEWTON_ITERATIONS, bool(
        np.max(np.abs(score)) < SCORE_TOLERANCE
    )


def cox_fit(
    data: TrialDataset | BlindedDataset,
    covariates: Sequence[str],
    strata: Sequence[object] | np.ndarray | None = None,
) -> CoxFit:
    """
    Fit a Cox proportional hazards model by Newton-Raphson (Breslow ties).

    Covariates are standardized internally; coefficients, covariance, score
    and information are reported on the original scale. 'arm' may be named as
    a covariate of a TrialDataset.

    Args:
        data: Dataset holding times, events and covariates.
        covariates: Covariate names (nominal covariates are one-hot encoded).
        strata: Optional stratum label per subject (separate baselines).

    Returns:
        The CoxFit. A diverging estimate is returned with converged=False.

    Raises:
        RankDeficiencyError: If the design does not have full column rank.
        DataValidationError: If no covariates are given.
    """
    if not covariates:
        raise DataValidationError('cox_fit needs at least one covariate')
    x, columns, _ = data.design_matrix(covariates)
    labels: np.ndarray | None = _stratum_array(strata, data.n)

    x_std, scale, constant = _standardize(x)
    if constant.any() or np.linalg.matrix_rank(x_std) < x_std.shape[1]:
        raise RankDeficiencyError(
            f'Design matrix is rank deficient (constant columns: '
            f'{[c for c, flag in zip(columns, constant, strict=True) if flag]})'
        )

    likelihood: BreslowLikelihood = BreslowLikelihood(data.times, data.events, x_std, labels)
    if labels is not None:
        empty: set[str] = set(labels.tolist()) - {
            str(labels[stratum.rows[0]]) for stratum in likelihood.strata
        }
        if empty:
            logger.warning('Strata without events ignored in Cox fit: %s', sorted(empty))

    null_value, null_score, null_information = likelihood.evaluate(np.zeros(len(columns)))
    beta, value, information, iterations, converged = _newton(
        likelihood, np.zeros(len(columns))
    )
    try:
        covariance_std: np.ndarray = np.linalg.inv(information)
    except np.linalg.LinAlgError:
        covariance_std = np.linalg.pinv(information)
        converged = False

    inverse_scale: np.ndarray = 1.0 / scale
    fit: CoxFit = CoxFit(
        covariates=columns,
        terms=list(covariates),
        coefficients=(beta * inverse_scale).tolist(),
        covariance=(covariance_std * np.outer(inverse_scale, inverse_scale)).tolist(),
        log_likelihood=value,
        null_log_likelihood=null_value,
        score_at_zero=(null_score * scale).tolist(),
        information_at_zero=(null_information * np.outer(scale, scale)).tolist(),
        iterations=iterations,
        converged=converged,
        strata=sorted(set(labels.tolist())) if labels is not None else None,
        n=data.n,
        n_events=int(data.events.sum()),
    )
    logger.debug('%r', fit)
    return fit


# =============================================================================
# Proportional hazards diagnostic
# =============================================================================


def _time_transform(
    transform: GtTransform, event_times: np.ndarray, times: np.ndarray, events: np.ndarray
) -> np.ndarray:
    if transform == 'km':
        curve: StepFunction = km(times, events)
        return 1.0 - curve.left_limit(event_times)
    if transform == 'rank':
        return stats.rankdata(event_times)
    if transform == 'identity':
        return event_times.astype(float)
    if transform == 'log':
        if np.any(event_times <= 0):
            raise DataValidationError("transform='log' needs positive event times")
        return np.log(event_times)
    raise DataValidationError(f'Unknown time transform {transform!r}')


def gt_test(
    fit: CoxFit,
    data: TrialDataset | BlindedDataset,
    transform: GtTransform = 'km',
    strata: Sequence[object] | np.ndarray | None = None,
) -> GtTestResult:
    """
    Grambsch-Therneau test of proportional hazards for a fitted Cox model.

    Score test of gamma = 0 in beta_j(t) = beta_j + gamma_j g(t) at the fitted
    beta, with g the chosen time transform centered over the events. Each
    covariate gets a 1-df chi-square; the global test has p degrees of freedom.

    Args:
        fit: Converged CoxFit on data.
        data: The dataset the fit came from.
        transform: Time transform g: 'km' (1 - S(t-) of the pooled KM),
            'rank', 'identity' or 'log'.
        strata: Stratum labels used by the fit, if any.

    Raises:
        ConvergenceError: If the fit did not converge.
        DataValidationError: If the data have no events or do not match the fit.
    """
    if not fit.converged:
        raise ConvergenceError('Grambsch-Therneau test needs a converged Cox fit')
    if not data.events.any():
        raise DataValidationError('Grambsch-Therneau test needs at least one event')
    x, columns, _ = data.design_matrix(fit.terms)
    if columns != fit.covariates:
        raise DataValidationError(f'Data columns {columns} do not match the fit {fit.covariates}')

    likelihood: BreslowLikelihood = BreslowLikelihood(
        data.times, data.events, x, _stratum_array(strata, data.n)
    )
    event_times, deaths, residuals, variances = likelihood.schoenfeld_blocks(
        np.asarray(fit.coefficients)
    )
    g: np.ndarray = _time_transform(transform, event_times, data.times, data.events)
    g_centered: np.ndarray = g - np.sum(deaths * g) / np.sum(deaths)

    u: np.ndarray = g_centered @ residuals
    i11: np.ndarray = variances.sum(axis=0)
    i12: np.ndarray = np.tensordot(g_centered, variances, axes=1)
    i22: np.ndarray = np.tensordot(g_centered**2, variances, axes=1)
    schur: np.ndarray = i22 - i12 @ np.linalg.solve(i11, i12)

    chisq: np.ndarray = u**2 / np.diag(schur)
    p_values: np.ndarray = stats.chi2.sf(chisq, df=1)
    global_chisq: float = float(u @ np.linalg.solve(schur, u))
    global_df: int = len(columns)
    global_p: float = float(stats.chi2.sf(global_chisq, df=global_df))

    floor: float = 1e-300
    result: GtTestResult = GtTestResult(
        transform=transform,
        covariates=columns,
        chisq=chisq.tolist(),
        p_values=np.clip(p_values, floor, 1.0).tolist(),
        global_chisq=global_chisq,
        global_df=global_df,
        global_p=max(global_p, floor),
    )
    logger.debug('GT test (%s): global chisq=%.4f p=%.4g', transform, global_chisq, global_p)
    return result


# =============================================================================
# Penalized fits
# =============================================================================


def _soft_threshold(value: float, threshold: float) -> float:
    magnitude: float = abs(value) - threshold
    if magnitude <= 1e-12 * max(threshold, 1.0):
        return 0.0
    return float(np.sign(value) * magnitude)


class PenalizedCoxProblem:
    """
    Elastic-net penalized Cox regression on standardized covariates.

    Minimizes
        F(b) = -(2/N) l(b) + lambda * (psi |b|_1 + (1 - psi)/2 |b|_2^2)
    where l is the Breslow log partial likelihood of the standardized design.
    Constant columns are held at 0.

    Attributes:
        likelihood: Partial likelihood of the (sub)sample.
        n: Subjects in the (sub)sample.
        active: Columns free to move.
    """

    def __init__(
        self, times: np.ndarray, events: np.ndarray, x_std: np.ndarray, active: np.ndarray
    ) -> None:
        self.likelihood: BreslowLikelihood = BreslowLikelihood(times, events, x_std)
        self.n: int = int(np.asarray(times).size)
        self.active: np.ndarray = np.asarray(active, dtype=bool)

    @staticmethod
    def penalty(beta: np.ndarray, psi: float, lam: float) -> float:
        return lam * (psi * float(np.abs(beta).sum()) + 0.5 * (1.0 - psi) * float(beta @ beta))

    def objective(self, beta: np.ndarray, psi: float, lam: float) -> float:
        return -2.0 / self.n * self.likelihood.log_likelihood(beta) + self.penalty(beta, psi, lam)

    def lambda_max(self, psi: float) -> float:
        """Smallest lambda whose solution is all zero (psi floored at 1e-3)."""
        _, score, _ = self.likelihood.evaluate(np.zeros(self.likelihood.p))
        gradient: np.ndarray = 2.0 / self.n * score[self.active]
        top: float = float(np.max(np.abs(gradient))) if gradient.size else 0.0
        return top / max(psi, 1e-3)

    def _coordinate_descent(
        self,
        beta: np.ndarray,
        gradient: np.ndarray,
        hessian: np.ndarray,
        psi: float,
        lam: float,
        max_sweeps: int = 1000,
        tolerance: float = 1e-11,
    ) -> np.ndarray:
        """Minimize the penalized quadratic model around beta."""
        target: np.ndarray = beta.copy()
        residual: np.ndarray = gradient.copy()  # gradient + H (target - beta)
        l1: float = lam * psi
        l2: float = lam * (1.0 - psi)
        columns: np.ndarray = np.flatnonzero(self.active)
        for _ in range(max_sweeps):
            largest: float = 0.0
            for j in columns:
                h_jj: float = float(hessian[j, j])
                old: float = float(target[j])
                new: float = _soft_threshold(h_jj * old - float(residual[j]), l1) / max(
                    h_jj + l2, 1e-12
                )
                if new != old:
                    delta: float = new - old
                    target[j] = new
                    residual += hessian[:, j] * delta
                    largest = max(largest, abs(delta))
            if largest < tolerance:
                break
        return target

    def solve(
        self,
        psi: float,
        lam: float,
        start: np.ndarray | None = None,
        max_iterations: int = 100,
        tolerance: float = 1e-9,
    ) -> tuple[np.ndarray, bool, list[float]]:
        """
        Proximal Newton solve for one (psi, lambda).

        Returns:
            Tuple (beta, converged, objective trace). The trace is
            nonincreasing: every accepted step passes a backtracking check on
            the true penalized objective.
        """
        beta: np.ndarray = (
            np.zeros(self.likelihood.p) if start is None else np.asarray(start, dtype=float).copy()
        )
        beta[~self.active] = 0.0
        current: float = self.objective(beta, psi, lam)
        trace: list[float] = [current]

        for _ in range(max_iterations):
            _, score, information = self.likelihood.evaluate(beta)
            gradient: np.ndarray = -2.0 / self.n * score
            hessian: np.ndarray = 2.0 / self.n * information
            target: np.ndarray = self._coordinate_descent(beta, gradient, hessian, psi, lam)
            direction: np.ndarray = target - beta
            if not direction.size or float(np.max(np.abs(direction))) < tolerance:
                return beta, True, trace

            step: float = 1.0
            candidate: np.ndarray = target
            candidate_value: float = self.objective(candidate, psi, lam)
            halvings: int = 0
            while not candidate_value <= current + 1e-13 * max(abs(current), 1.0):
                if halvings >= MAX_HALVINGS:
                    # no descent left along a numerically vanishing step
                    stalled: bool = step * float(np.max(np.abs(direction))) < 1e-6
                    return beta, stalled, trace
                step /= 2.0
                candidate = beta + step * direction
                candidate_value = self.objective(candidate, psi, lam)
                halvings += 1

            moved: float = float(np.max(np.abs(candidate - beta))) if beta.size else 0.0
            decrease: float = current - candidate_value
            beta, current = candidate, candidate_value
            trace.append(current)
            if moved < tolerance or decrease < 1e-14 * max(abs(current), 1.0):
                return beta, True, trace
        return beta, False, trace

    def path(
        self, psi: float, lambdas: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        """Warm-started solutions along a decreasing lambda grid (standardized scale)."""
        coefficients: np.ndarray = np.zeros((lambdas.size, self.likelihood.p))
        converged: np.ndarray = np.zeros(lambdas.size, dtype=bool)
        beta: np.ndarray | None = None
        for index, lam in enumerate(lambdas):
            beta, ok, _ = self.solve(psi, float(lam), beta)
            coefficients[index] = beta
            converged[index] = ok
        return coefficients, converged


@dataclass(frozen=True)
class _Design:
    times: np.ndarray
    events: np.ndarray
    x_std: np.ndarray
    scale: np.ndarray
    active: np.ndarray
    columns: list[str]
    owners: list[str]

    @classmethod
    def build(cls, blinded: BlindedDataset, covariates: Sequence[str] | None) -> '_Design':
        x, columns, owners = blinded.design_matrix(covariates)
        x_std, scale, constant = _standardize(x)
        return cls(blinded.times, blinded.events, x_std, scale, ~constant, columns, owners)

    def problem(self, rows: np.ndarray | None = None) -> PenalizedCoxProblem:
        if rows is None:
            return PenalizedCoxProblem(self.times, self.events, self.x_std, self.active)
        return PenalizedCoxProblem(
            self.times[rows], self.events[rows], self.x_std[rows], self.active
        )


def lambda_grid(lambda_max: float, n_lambda: int = 100, lambda_min_ratio: float = 0.001) -> np.ndarray:
    """Decreasing log-spaced grid from lambda_max to lambda_min_ratio * lambda_max."""
    if lambda_max <= 0:
        return np.zeros(1)
    return np.geomspace(lambda_max, lambda_max * lambda_min_ratio, n_lambda)


def _check_psi(psi: float) -> None:
    if not 0.0 <= psi <= 1.0:
        raise DataValidationError(f'psi must lie in [0, 1], got {psi}')


def enet_path(
    blinded: BlindedDataset,
    psi: float,
    lambdas: Sequence[float] | np.ndarray | None = None,
    covariates: Sequence[str] | None = None,
    n_lambda: int = 100,
    lambda_min_ratio: float = 0.001,
) -> ElasticNetFit:
    """
    Elastic-net Cox path for one mixing parameter.

    Args:
        blinded: Arm-free dataset.
        psi: Mixing parameter in [0, 1] (1 = lasso).
        lambdas: Penalty grid (sorted decreasing internally; default: n_lambda
            log-spaced values from lambda_max down to lambda_min_ratio x lambda_max).
        covariates: Covariates to include (default: all).

    Returns:
        ElasticNetFit with coefficients on the original scale.

    Raises:
        DataValidationError: If psi lies outside [0, 1].
    """
    _check_psi(psi)
    design: _Design = _Design.build(blinded, covariates)
    problem: PenalizedCoxProblem = design.problem()
    grid: np.ndarray = (
        lambda_grid(problem.lambda_max(psi), n_lambda, lambda_min_ratio)
        if lambdas is None
        else np.sort(np.asarray(lambdas, dtype=float))[::-1]
    )
    if np.any(grid < 0):
        raise DataValidationError('lambda values must be >= 0')
    coefficients, converged = problem.path(psi, grid)
    deviance: list[float] = [
        -2.0 * problem.likelihood.log_likelihood(beta) for beta in coefficients
    ]
    logger.debug('Elastic net path psi=%g: %d lambdas, %d converged', psi, grid.size, converged.sum())
    return ElasticNetFit(
        psi=psi,
        lambdas=grid.tolist(),
        columns=design.columns,
        owners=design.owners,
        coefficient_path=(coefficients / design.scale).tolist(),
        deviance_path=deviance,
        converged=converged.tolist(),
    )


def ridge_fit(
    blinded: BlindedDataset,
    lam: float,
    covariates: Sequence[str] | None = None,
) -> ElasticNetFit:
    """
    Ridge-penalized Cox fit (psi = 0) by direct Newton-Raphson.

    Maximizes l(b) - N lambda / 4 |b|^2 on standardized covariates, the same
    objective as enet_path with psi = 0.
    """
    if lam < 0:
        raise DataValidationError(f'lambda must be >= 0, got {lam}')
    design: _Design = _Design.build(blinded, covariates)
    problem: PenalizedCoxProblem = design.problem()
    active: np.ndarray = design.active
    beta: np.ndarray = np.zeros(design.x_std.shape[1])
    converged: bool = False

    def penalized(b: np.ndarray) -> float:
        return problem.likelihood.log_likelihood(b) - problem.n * lam / 4.0 * float(b @ b)

    current: float = penalized(beta)
    for _ in range(MAX_NEWTON_ITERATIONS):
        _, score, information = problem.likelihood.evaluate(beta)
        gradient: np.ndarray = (score - problem.n * lam / 2.0 * beta)[active]
        if np.max(np.abs(gradient), initial=0.0) < SCORE_TOLERANCE:
            converged = True
            break
        hessian: np.ndarray = (information + problem.n * lam / 2.0 * np.eye(beta.size))[
            np.ix_(active, active)
        ]
        step: np.ndarray = np.zeros_like(beta)
        step[active] = np.linalg.solve(hessian, gradient)
        candidate: np.ndarray = beta + step
        candidate_value: float = penalized(candidate)
        halvings: int = 0
        while not candidate_value >= current - 1e-12 and halvings < MAX_HALVINGS:
            step /= 2.0
            candidate = beta + step
            candidate_value = penalized(candidate)
            halvings += 1
        beta, current = candidate, candidate_value

    return ElasticNetFit(
        psi=0.0,
        lambdas=[lam],
        columns=design.columns,
        owners=design.owners,
        coefficient_path=[(beta / design.scale).tolist()],
        deviance_path=[-2.0 * problem.likelihood.log_likelihood(beta)],
        converged=[converged],
    )


# =============================================================================
# Cross-validation
# =============================================================================


def make_folds(events: np.ndarray, folds: int, seed: int) -> np.ndarray:
    """
    Random fold id per subject with at least one event in every fold.

    Folds are re-drawn up to 20 times before giving up.

    Raises:
        DataValidationError: If there are fewer subjects than folds or no
            valid assignment was found.
    """
    n: int = events.size
    if folds < 2 or n < folds:
        raise DataValidationError(f'Cannot build {folds} folds from {n} subjects')
    rng: np.random.Generator = np.random.default_rng(seed)
    for attempt in range(1, MAX_FOLD_ATTEMPTS + 1):
        fold_ids: np.ndarray = rng.permutation(n) % folds
        counts: np.ndarray = np.bincount(fold_ids[events], minlength=folds)
        if np.all(counts > 0):
            return fold_ids
        logger.debug('Fold attempt %d left a fold without events; redrawing', attempt)
    raise DataValidationError(
        f'Could not build {folds} folds with an event in each after {MAX_FOLD_ATTEMPTS} attempts'
    )


def _cv_for_psi(
    design: _Design,
    psi: float,
    fold_ids: np.ndarray,
    n_lambda: int,
    lambda_min_ratio: float,
) -> ElasticNetFit:
    """Full-data path plus per-lambda CV deviance for one psi."""
    full: PenalizedCoxProblem = design.problem()
    lambdas: np.ndarray = lambda_grid(full.lambda_max(psi), n_lambda, lambda_min_ratio)
    coefficients, converged = full.path(psi, lambdas)

    folds: int = int(fold_ids.max()) + 1
    fold_deviance: np.ndarray = np.zeros((folds, lambdas.size))
    fold_events: np.ndarray = np.zeros(folds)
    for k in range(folds):
        held_out: np.ndarray = fold_ids == k
        training: PenalizedCoxProblem = design.problem(np.flatnonzero(~held_out))
        path, path_converged = training.path(psi, lambdas)
        fold_events[k] = float(design.events[held_out].sum())
        for index, beta in enumerate(path):
            if not path_converged[index]:
                fold_deviance[k, index] = np.inf
                continue
            full_value: float = full.likelihood.log_likelihood(beta)
            training_value: float = training.likelihood.log_likelihood(beta)
            fold_deviance[k, index] = -2.0 * (full_value - training_value) / fold_events[k]

    weights: np.ndarray = fold_events / fold_events.sum()
    finite: np.ndarray = np.all(np.isfinite(fold_deviance), axis=0)
    mean: np.ndarray = np.full(lambdas.size, np.inf)
    se: np.ndarray = np.full(lambdas.size, np.inf)
    mean[finite] = weights @ fold_deviance[:, finite]
    spread: np.ndarray = weights @ (fold_deviance[:, finite] - mean[finite]) ** 2
    se[finite] = np.sqrt(spread / (folds - 1))

    logger.debug(
        'CV psi=%g: best mean deviance %.6g', psi, float(mean.min()) if mean.size else np.inf
    )
    return ElasticNetFit(
        psi=psi,
        lambdas=lambdas.tolist(),
        columns=design.columns,
        owners=design.owners,
        coefficient_path=(coefficients / design.scale).tolist(),
        deviance_path=[-2.0 * full.likelihood.log_likelihood(beta) for beta in coefficients],
        cv_mean=mean.tolist(),
        cv_se=se.tolist(),
        converged=converged.tolist(),
    )


def cv_select(
    blinded: BlindedDataset,
    psi_grid: Sequence[float],
    folds: int = 10,
    rule: CvRule = 'lambda-min',
    seed: int = 0,
    covariates: Sequence[str] | None = None,
    n_lambda: int = 100,
    lambda_min_ratio: float = 0.001,
    n_jobs: int = 1,
) -> CvSelection:
    """
    Choose (psi, lambda) by k-fold cross-validated partial-likelihood deviance.

    The fold deviance at lambda is -2 [l_full(b_-k) - l_-k(b_-k)] divided by
    the fold's events; folds are averaged with event weights. lambda-min picks
    the smallest mean (ties toward larger lambda, then smaller psi);
    lambda-1se applies the one-standard-error rule within the best psi.
    A lambda where any fold failed to converge gets an infinite deviance.

    Args:
        blinded: Arm-free dataset.
        psi_grid: Mixing parameters to try.
        folds: Number of folds.
        rule: 'lambda-min' or 'lambda-1se'.
        seed: Fold assignment seed.
        covariates: Candidate covariates (default: all).
        n_lambda: Lambda grid length per psi.
        lambda_min_ratio: Grid floor as a fraction of lambda_max.
        n_jobs: joblib workers across the psi grid.

    Returns:
        CvSelection with the surviving covariates in declaration order.

    Raises:
        DataValidationError: On an invalid psi or a failed fold construction.
        ConvergenceError: If no (psi, lambda) cell produced a finite deviance.
    """
    grid: list[float] = sorted(set(float(psi) for psi in psi_grid))
    if not grid:
        raise DataValidationError('psi_grid must not be empty')
    for psi in grid:
        _check_psi(psi)

    fold_ids: np.ndarray = make_folds(blinded.events, folds, seed)
    design: _Design = _Design.build(blinded, covariates)
    logger.info(
        'Cross-validating elastic net: %d psi values x %d lambdas, %d folds, %d columns',
        len(grid),
        n_lambda,
        folds,
        len(design.columns),
    )
    fits: list[ElasticNetFit] = Parallel(n_jobs=n_jobs)(
        delayed(_cv_for_psi)(design, psi, fold_ids, n_lambda, lambda_min_ratio) for psi in grid
    )

    best_fit: ElasticNetFit | None = None
    best_value: float = np.inf
    for fit in fits:
        assert fit.cv_mean is not None
        value: float = float(np.min(fit.cv_mean))
        if value < best_value:
            best_fit, best_value = fit, value
    if best_fit is None:
        raise ConvergenceError('No (psi, lambda) cell produced a finite CV deviance')

    index: int = best_fit.best_index(rule)
    coefficients: dict[str, float] = best_fit.coefficients_at(index)
    chosen: set[str] = set(best_fit.selected_at(index))
    declared: list[str] = list(covariates) if covariates is not None else blinded.covariate_names
    selected: list[str] = [name for name in declared if name in chosen]

    surface: list[CvCell] = []
    for fit in fits:
        assert fit.cv_mean is not None and fit.cv_se is not None
        for lam, mean, se in zip(fit.lambdas, fit.cv_mean, fit.cv_se, strict=True):
            finite: bool = bool(np.isfinite(mean))
            surface.append(
                CvCell(
                    psi=fit.psi,
                    lambda_value=lam,
                    mean_deviance=mean if finite else None,
                    se=se if finite else None,
                )
            )

    logger.info(
        'Selected psi=%g lambda=%.4g (%s); %d covariates advanced: %s',
        best_fit.psi,
        best_fit.lambdas[index],
        rule,
        len(selected),
        selected,
    )
    return CvSelection(
        psi=best_fit.psi,
        lambda_value=best_fit.lambdas[index],
        rule=rule,
        selected_covariates=selected,
        coefficients=coefficients,
        folds=folds,
        seed=seed,
        surface=surface,
    )


def score_test_p(fit: CoxFit, column: str = 'arm') -> float:
    """One-tailed score-test p-value Phi(z) for one column of a fit."""
    return one_tailed_p(float(fit.score_z()[fit.covariates.index(column)]))
