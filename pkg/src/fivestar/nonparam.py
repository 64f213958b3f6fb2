# fivestar/nonparam.py
"""
Nonparametric survival estimators and two-arm tests.

Everything here works on distinct event times with Breslow tie handling:
events at a time are processed before censorings at the same time, and the
two-arm tests use hypergeometric moments per distinct event time.

Sign convention for every test: negative z favors arm A, and the one-tailed
p-value is Phi(z).
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import stats

from fivestar.exceptions import DataValidationError, DegenerateDataError
from fivestar.models import BlindedDataset, TrialDataset
from fivestar.result_models.survival import (
    MaxComboResult,
    RmstResult,
    StepFunction,
    StratifiedLogrankResult,
    WeightedLogrankResult,
)

logger: logging.Logger = logging.getLogger(__name__)

MAXCOMBO_WEIGHTS: tuple[tuple[float, float], ...] = ((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0))

_P_FLOOR: float = 1e-300


def one_tailed_p(z: float) -> float:
    """Phi(z), kept strictly inside (0, 1)."""
    p: float = float(stats.norm.cdf(z))
    return min(max(p, _P_FLOOR), float(np.nextafter(1.0, 0.0)))


# =============================================================================
# Event tables
# =============================================================================


@dataclass(frozen=True)
class _EventTable:
    """
    Risk-set bookkeeping at the distinct event times of one sample.

    Positions refer to the time-sorted sample: subjects first..N-1 are at risk
    at event time k, and positions first..last-1 share that time.
    """

    order: np.ndarray
    sorted_times: np.ndarray
    sorted_events: np.ndarray
    event_times: np.ndarray
    first: np.ndarray
    last: np.ndarray
    at_risk: np.ndarray
    deaths: np.ndarray

    @classmethod
    def build(cls, times: np.ndarray, events: np.ndarray) -> '_EventTable':
        order: np.ndarray = np.argsort(times, kind='stable')
        sorted_times: np.ndarray = times[order]
        sorted_events: np.ndarray = events[order]
        event_times, deaths = np.unique(sorted_times[sorted_events], return_counts=True)
        first: np.ndarray = np.searchsorted(sorted_times, event_times, side='left')
        last: np.ndarray = np.searchsorted(sorted_times, event_times, side='right')
        return cls(
            order=order,
            sorted_times=sorted_times,
            sorted_events=sorted_events,
            event_times=event_times,
            first=first,
            last=last,
            at_risk=(times.size - first).astype(float),
            deaths=deaths.astype(float),
        )

    def group_counts(self, flags: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """
        At-risk and event counts of a subgroup at each event time.

        Args:
            flags: Membership in sorted order, shape (..., N); leading axes
                are evaluated independently (used for label permutations).

        Returns:
            Tuple (at_risk, deaths), each of shape (..., K).
        """
        member: np.ndarray = flags.astype(float)
        pad: list[tuple[int, int]] = [(0, 0)] * (member.ndim - 1) + [(1, 0)]
        cum_members: np.ndarray = np.pad(np.cumsum(member, axis=-1), pad)
        cum_deaths: np.ndarray = np.pad(np.cumsum(member * self.sorted_events, axis=-1), pad)
        total: np.ndarray = cum_members[..., -1:]
        at_risk: np.ndarray = total - cum_members[..., self.first]
        deaths: np.ndarray = cum_deaths[..., self.last] - cum_deaths[..., self.first]
        return at_risk, deaths


def _as_arrays(
    times: Sequence[float] | np.ndarray, events: Sequence[bool] | np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    time_array: np.ndarray = np.asarray(times, dtype=float)
    event_array: np.ndarray = np.asarray(events, dtype=bool)
    if time_array.size == 0:
        raise DataValidationError('Cannot estimate from empty input')
    if time_array.shape != event_array.shape:
        raise DataValidationError(
            f'times and events differ in shape: {time_array.shape} vs {event_array.shape}'
        )
    return time_array, event_array


# =============================================================================
# Estimators
# =============================================================================


def km(times: Sequence[float] | np.ndarray, events: Sequence[bool] | np.ndarray) -> StepFunction:
    """
    Kaplan-Meier product-limit estimate with Greenwood variance.

    Args:
        times: Follow-up times.
        events: Event indicators (True = event, False = censored).

    Returns:
        Survival StepFunction with one knot per distinct event time.

    Raises:
        DataValidationError: On empty input.
    """
    time_array, event_array = _as_arrays(times, events)
    table: _EventTable = _EventTable.build(time_array, event_array)
    n: np.ndarray = table.at_risk
    d: np.ndarray = table.deaths

    survival: np.ndarray = np.cumprod(1.0 - d / n)
    survivors: np.ndarray = n - d
    # once everyone at risk has died the curve stays at 0 with no uncertainty
    terms: np.ndarray = np.divide(d, n * survivors, out=np.zeros_like(d), where=survivors > 0)
    variance: np.ndarray = survival**2 * np.cumsum(terms)

    return StepFunction(
        kind='survival',
        initial_value=1.0,
        knots=table.event_times.tolist(),
        values=survival.tolist(),
        variances=variance.tolist(),
        at_risk=n.astype(int).tolist(),
        events=d.astype(int).tolist(),
    )


def nelson_aalen(
    times: Sequence[float] | np.ndarray, events: Sequence[bool] | np.ndarray
) -> StepFunction:
    """Nelson-Aalen cumulative hazard with variance sum d/n^2."""
    time_array, event_array = _as_arrays(times, events)
    table: _EventTable = _EventTable.build(time_array, event_array)
    n: np.ndarray = table.at_risk
    d: np.ndarray = table.deaths
    return StepFunction(
        kind='cumhaz',
        initial_value=0.0,
        knots=table.event_times.tolist(),
        values=np.cumsum(d / n).tolist(),
        variances=np.cumsum(d / n**2).tolist(),
        at_risk=n.astype(int).tolist(),
        events=d.astype(int).tolist(),
    )


def logrank_score_array(times: np.ndarray, events: np.ndarray) -> np.ndarray:
    """
    Logrank (martingale) scores event_i - Lambda(t_i) for raw arrays.

    Lambda is the pooled Nelson-Aalen estimate of the given sample, including
    its jump at t_i.
    """
    time_array, event_array = _as_arrays(times, events)
    if not event_array.any():
        raise DataValidationError('Logrank scores need at least one event')
    cumhaz: StepFunction = nelson_aalen(time_array, event_array)
    return event_array.astype(float) - cumhaz.evaluate(time_array)


def logrank_scores(blinded: BlindedDataset) -> np.ndarray:
    """
    Pooled logrank score of every subject, in record order.

    Raises:
        DataValidationError: If the dataset has no events.
    """
    return logrank_score_array(blinded.times, blinded.events)


def smoothed_hazard(
    times: Sequence[float] | np.ndarray,
    events: Sequence[bool] | np.ndarray,
    grid: Sequence[float] | np.ndarray | None = None,
    bandwidth: float | None = None,
    grid_points: int = 100,
) -> pd.DataFrame:
    """
    Epanechnikov kernel smooth of the Nelson-Aalen increments.

    Args:
        times: Follow-up times.
        events: Event indicators.
        grid: Evaluation times (default: grid_points equally spaced points
            from 0 to the last event time).
        bandwidth: Kernel half-width (default: 1.5 x the interquartile range
            of the event times, or a quarter of the last event time when the
            IQR is 0).
        grid_points: Size of the default grid.

    Returns:
        DataFrame with columns time, hazard and log_hazard (NaN where the
        hazard is 0).
    """
    cumhaz: StepFunction = nelson_aalen(times, events)
    knots: np.ndarray = cumhaz.knot_array
    columns: list[str] = ['time', 'hazard', 'log_hazard']
    if knots.size == 0:
        return pd.DataFrame(columns=columns)

    increments: np.ndarray = np.diff(np.concatenate(([0.0], cumhaz.value_array)))
    if bandwidth is None:
        q1, q3 = np.percentile(knots, [25, 75])
        bandwidth = 1.5 * float(q3 - q1)
        if bandwidth <= 0:
            bandwidth = max(float(knots[-1]) / 4.0, 1e-8)
    if bandwidth <= 0:
        raise DataValidationError(f'bandwidth must be positive, got {bandwidth}')

    points: np.ndarray = (
        np.linspace(0.0, float(knots[-1]), grid_points)
        if grid is None
        else np.asarray(grid, dtype=float)
    )
    u: np.ndarray = (points[:, None] - knots[None, :]) / bandwidth
    kernel: np.ndarray = np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u**2), 0.0)
    hazard: np.ndarray = kernel @ increments / bandwidth
    with np.errstate(divide='ignore'):
        log_hazard: np.ndarray = np.where(hazard > 0, np.log(np.where(hazard > 0, hazard, 1.0)), np.nan)
    return pd.DataFrame({'time': points, 'hazard': hazard, 'log_hazard': log_hazard})


# =============================================================================
# Two-arm tests
# =============================================================================


@dataclass(frozen=True)
class _TwoArmTable:
    """Pooled event table plus arm A counts and the pooled KM left limits."""

    table: _EventTable
    at_risk_a: np.ndarray
    deaths_a: np.ndarray
    survival_left: np.ndarray

    @classmethod
    def build(cls, times: np.ndarray, events: np.ndarray, treated: np.ndarray) -> '_TwoArmTable':
        if treated.all() or not treated.any():
            raise DataValidationError('Two-arm comparison needs subjects in both arms')
        if not events.any():
            raise DataValidationError('Two-arm comparison needs at least one event')
        table: _EventTable = _EventTable.build(times, events)
        at_risk_a, deaths_a = table.group_counts(treated[table.order])
        survival: np.ndarray = np.cumprod(1.0 - table.deaths / table.at_risk)
        survival_left: np.ndarray = np.concatenate(([1.0], survival[:-1]))
        return cls(table, at_risk_a, deaths_a, survival_left)

    def weights(self, rho: float, gamma: float) -> np.ndarray:
        return self.survival_left**rho * (1.0 - self.survival_left) ** gamma

    def hypergeometric(
        self, at_risk_a: np.ndarray | None = None, deaths_a: np.ndarray | None = None
    ) -> tuple[np.ndarray, np.ndarray]:
        """Observed-minus-expected and variance terms per event time."""
        n: np.ndarray = self.table.at_risk
        d: np.ndarray = self.table.deaths
        n_a: np.ndarray = self.at_risk_a if at_risk_a is None else at_risk_a
        d_a: np.ndarray = self.deaths_a if deaths_a is None else deaths_a
        share: np.ndarray = n_a / n
        excess: np.ndarray = d_a - d * share
        factor: np.ndarray = np.divide(n - d, n - 1.0, out=np.zeros_like(n), where=n > 1)
        variance: np.ndarray = d * share * (1.0 - share) * factor
        return excess, variance


def _standardize(numerator: float, variance: float, what: str) -> tuple[float, float]:
    if variance <= 0:
        logger.warning('%s has zero variance; reporting z = 0 and p = 0.5', what)
        return 0.0, 0.5
    z: float = numerator / float(np.sqrt(variance))
    return z, one_tailed_p(z)


def weighted_logrank(data: TrialDataset, rho: float = 0.0, gamma: float = 0.0) -> WeightedLogrankResult:
    """
    Fleming-Harrington G(rho, gamma) weighted logrank test of arm A vs B.

    Weights are S(t-)^rho * (1 - S(t-))^gamma with S the pooled Kaplan-Meier
    left limit. (0, 0) is the ordinary logrank test.

    Raises:
        DataValidationError: If only one arm is present.
    """
    if rho < 0 or gamma < 0:
        raise DataValidationError(f'rho and gamma must be >= 0, got ({rho}, {gamma})')
    two_arm: _TwoArmTable = _TwoArmTable.build(data.times, data.events, data.treated)
    weights: np.ndarray = two_arm.weights(rho, gamma)
    excess, variance_terms = two_arm.hypergeometric()
    numerator: float = float(np.sum(weights * excess))
    variance: float = float(np.sum(weights**2 * variance_terms))
    z, p_value = _standardize(numerator, variance, f'G({rho:g},{gamma:g}) logrank')
    logger.debug('G(%g,%g): O-E=%.4f V=%.4f z=%.4f', rho, gamma, numerator, variance, z)
    return WeightedLogrankResult(
        rho=rho, gamma=gamma, numerator=numerator, variance=variance, z=z, p_value=p_value
    )


def logrank(data: TrialDataset) -> WeightedLogrankResult:
    """Unweighted logrank test, G(0, 0)."""
    return weighted_logrank(data, 0.0, 0.0)


def _maxcombo_z(
    two_arm: _TwoArmTable, weight_matrix: np.ndarray, treated_sorted: np.ndarray
) -> np.ndarray:
    """Four weighted z values for each row of permuted arm labels (B x N -> B x 4)."""
    at_risk_a, deaths_a = two_arm.table.group_counts(treated_sorted)
    excess, variance_terms = two_arm.hypergeometric(at_risk_a, deaths_a)
    numerators: np.ndarray = excess @ weight_matrix.T
    variances: np.ndarray = variance_terms @ (weight_matrix**2).T
    return np.divide(
        numerators,
        np.sqrt(variances),
        out=np.zeros_like(numerators),
        where=variances > 0,
    )


def maxcombo(
    data: TrialDataset,
    method: str = 'mvn',
    seed: int | None = None,
    perm_reps: int = 2000,
) -> MaxComboResult:
    """
    MaxCombo test: the minimum of the G(0,0), G(1,0), G(1,1) and G(0,1) z values.

    Args:
        data: Trial data with both arms.
        method: 'mvn' integrates the 4-variate normal with the estimated
            correlation (randomized quasi-Monte Carlo, absolute error target
            5e-4); 'permutation' compares against perm_reps arm-label
            permutations.
        seed: Seed for the integration or the permutations.
        perm_reps: Number of permutations for method='permutation'.

    Raises:
        DataValidationError: With a single arm or fewer than 2 events.
        DegenerateDataError: If any of the four statistics has zero variance.
    """
    if method not in {'mvn', 'permutation'}:
        raise DataValidationError(f"method must be 'mvn' or 'permutation', got {method!r}")
    if int(data.events.sum()) < 2:
        raise DataValidationError('MaxCombo needs at least two events')

    two_arm: _TwoArmTable = _TwoArmTable.build(data.times, data.events, data.treated)
    weight_matrix: np.ndarray = np.vstack([two_arm.weights(r, g) for r, g in MAXCOMBO_WEIGHTS])
    excess, variance_terms = two_arm.hypergeometric()

    numerators: np.ndarray = weight_matrix @ excess
    covariance: np.ndarray = (weight_matrix * variance_terms) @ weight_matrix.T
    variances: np.ndarray = np.diag(covariance).copy()
    if np.any(variances <= 0):
        raise DegenerateDataError(
            f'MaxCombo statistic with zero variance (variances {variances.tolist()})'
        )
    z_values: np.ndarray = numerators / np.sqrt(variances)
    scale: np.ndarray = np.sqrt(np.outer(variances, variances))
    correlation: np.ndarray = np.clip(covariance / scale, -1.0, 1.0)
    np.fill_diagonal(correlation, 1.0)
    statistic: float = float(z_values.min())

    off_diagonal: np.ndarray = correlation[~np.eye(4, dtype=bool)]
    result_method: str = method
    if np.all(off_diagonal > 1.0 - 1e-8):
        p_value: float = one_tailed_p(statistic)
        result_method = 'univariate'
    elif method == 'mvn':
        # P(min Z <= m) = 1 - P(-Z < -m) for the symmetric zero-mean normal
        distribution = stats.multivariate_normal(
            mean=np.zeros(4),
            cov=correlation,
            allow_singular=True,
            seed=seed,
            abseps=5e-4,
            releps=0.0,
        )
        upper: float = float(distribution.cdf(np.full(4, -statistic)))
        p_value = float(np.clip(1.0 - upper, _P_FLOOR, np.nextafter(1.0, 0.0)))
    else:
        rng: np.random.Generator = np.random.default_rng(seed)
        base: np.ndarray = data.treated[two_arm.table.order]
        exceed: int = 0
        chunk: int = 500
        for start in range(0, perm_reps, chunk):
            size: int = min(chunk, perm_reps - start)
            permuted: np.ndarray = np.vstack([rng.permutation(base) for _ in range(size)])
            minima: np.ndarray = _maxcombo_z(two_arm, weight_matrix, permuted).min(axis=1)
            exceed += int(np.sum(minima <= statistic + 1e-12))
        p_value = (exceed + 1) / (perm_reps + 1)

    logger.debug('MaxCombo z=%s min=%.4f p=%.4g (%s)', z_values.round(4), statistic, p_value, result_method)
    return MaxComboResult(
        weights=list(MAXCOMBO_WEIGHTS),
        z_values=z_values.tolist(),
        correlation=correlation.tolist(),
        statistic=statistic,
        p_value=p_value,
        method=result_method,  # type: ignore[arg-type]
    )


def _feasible_horizon(curve: StepFunction, times: np.ndarray) -> float:
    """Largest tau at which an arm's curve is estimated (inf once it reaches 0)."""
    if curve.values and curve.values[-1] == 0.0:
        return float('inf')
    return float(times.max())


def _rmst_variance(curve: StepFunction, tau: float) -> float:
    """Greenwood-type variance of the area under a KM curve on [0, tau]."""
    knots: np.ndarray = curve.knot_array
    inside: np.ndarray = knots <= tau
    if not inside.any():
        return 0.0
    n: np.ndarray = np.asarray(curve.at_risk, dtype=float)[inside]
    d: np.ndarray = np.asarray(curve.events, dtype=float)[inside]
    tail_areas: np.ndarray = np.array(
        [curve.restricted_area(tau) - curve.restricted_area(t) for t in knots[inside]]
    )
    survivors: np.ndarray = n - d
    terms: np.ndarray = np.divide(
        tail_areas**2 * d, n * survivors, out=np.zeros_like(n), where=survivors > 0
    )
    return float(terms.sum())


def rmst_compare(data: TrialDataset, tau: float | None = None) -> RmstResult:
    """
    Compare restricted mean survival times of arm A and arm B up to tau.

    The area under each arm's Kaplan-Meier curve is an exact rectangle sum.
    An arm's curve is usable up to its last observed time, or indefinitely
    once it has dropped to 0.

    Args:
        data: Trial data with both arms.
        tau: Horizon (default: the smaller of the two arms' last observed times).

    Raises:
        DataValidationError: If only one arm is present or tau lies outside the
            range where both curves are estimated.
    """
    treated: np.ndarray = data.treated
    if treated.all() or not treated.any():
        raise DataValidationError('RMST comparison needs subjects in both arms')

    times: np.ndarray = data.times
    events: np.ndarray = data.events
    curve_a: StepFunction = km(times[treated], events[treated])
    curve_b: StepFunction = km(times[~treated], events[~treated])

    if tau is None:
        tau = float(min(times[treated].max(), times[~treated].max()))
    feasible: float = min(
        _feasible_horizon(curve_a, times[treated]), _feasible_horizon(curve_b, times[~treated])
    )
    if tau <= 0 or tau > feasible:
        raise DataValidationError(f'tau={tau} outside the feasible range (0, {feasible}]')

    rmst_a: float = curve_a.restricted_area(tau)
    rmst_b: float = curve_b.restricted_area(tau)
    variance_a: float = _rmst_variance(curve_a, tau)
    variance_b: float = _rmst_variance(curve_b, tau)
    difference: float = rmst_a - rmst_b
    variance: float = variance_a + variance_b
    z, p_value = _standardize(-difference, variance, f'RMST comparison at tau={tau:g}')

    return RmstResult(
        tau=tau,
        rmst_a=rmst_a,
        rmst_b=rmst_b,
        variance_a=variance_a,
        variance_b=variance_b,
        difference=difference,
        variance=variance,
        z=z,
        p_value=p_value,
    )


def stratified_logrank(
    data: TrialDataset, labels: Sequence[object] | np.ndarray
) -> StratifiedLogrankResult:
    """
    Logrank test stratified by the given labels.

    Per-stratum observed-minus-expected counts and variances are summed.
    Strata with fewer than two subjects, a missing arm or no events carry no
    information and are dropped with a warning.

    Args:
        data: Trial data.
        labels: Stratum label per subject, aligned with data.records.

    Raises:
        DataValidationError: If labels do not match the dataset size.
        DegenerateDataError: If every stratum is dropped.
    """
    label_array: np.ndarray = np.asarray([str(label) for label in labels], dtype=object)
    if label_array.size != data.n:
        raise DataValidationError(f'Got {label_array.size} stratum labels for {data.n} subjects')

    numerator: float = 0.0
    variance: float = 0.0
    used: list[str] = []
    dropped: list[str] = []
    for label in sorted(set(label_array.tolist())):
        mask: np.ndarray = label_array == label
        treated: np.ndarray = data.treated[mask]
        events: np.ndarray = data.events[mask]
        if mask.sum() < 2 or treated.all() or not treated.any() or not events.any():
            dropped.append(label)
            logger.warning('Stratum %r dropped from the stratified logrank test', label)
            continue
        two_arm: _TwoArmTable = _TwoArmTable.build(data.times[mask], events, treated)
        excess, variance_terms = two_arm.hypergeometric()
        numerator += float(excess.sum())
        variance += float(variance_terms.sum())
        used.append(label)

    if not used:
        raise DegenerateDataError('Every stratum is degenerate; no stratified logrank test')

    z, p_value = _standardize(numerator, variance, 'Stratified logrank')
    return StratifiedLogrankResult(
        numerator=numerator,
        variance=variance,
        z=z,
        p_value=p_value,
        strata_used=used,
        dropped_strata=dropped,
    )
