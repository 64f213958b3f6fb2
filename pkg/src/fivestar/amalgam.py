# fivestar/amalgam.py
"""
Amalgamation of stratum effects into one test and one average effect.

Two combined statistics are formed from the per-stratum estimates: Z_I
weights the estimates by stratum size, Z_II weights the stratum z
statistics by stratum size. Their maximum is referred to its exact null law,
the maximum of two standard normals with correlation rho, evaluated by
deterministic quadrature. The average effect uses the weights of whichever
statistic attained the maximum.

Positive statistics favor arm A on both tracks: the TR track feeds log time
ratios, the HR track feeds minus the log hazard ratios.
"""

import logging
import math
from collections.abc import Sequence
from typing import Literal

import numpy as np
from scipy import integrate, optimize, stats

from fivestar.exceptions import DataValidationError, DegenerateDataError
from fivestar.result_models.amalgam import AmalgamResult, Track, WeightScheme
from fivestar.result_models.effects import StratumEffect

logger: logging.Logger = logging.getLogger(__name__)

_QUAD_TOLERANCE: float = 1e-13


def _check_rho(rho: float) -> float:
    if not -1e-12 <= rho <= 1.0 + 1e-12:
        raise DataValidationError(f'rho must lie in [0, 1], got {rho}')
    return min(max(rho, 0.0), 1.0)


def _bivariate_diagonal_cdf(h: float, rho: float) -> float:
    """
    Phi2(h, h; rho) for the standard bivariate normal.

    Uses Phi(h)^2 + (1 / 2 pi) int_0^asin(rho) exp(-h^2 / (1 + sin t)) dt.
    """
    marginal: float = float(stats.norm.cdf(h))
    if rho <= 0.0:
        return marginal**2
    upper: float = math.asin(min(rho, 1.0))
    integral, _ = integrate.quad(
        lambda t: math.exp(-(h**2) / (1.0 + math.sin(t))),
        0.0,
        upper,
        epsabs=_QUAD_TOLERANCE,
        epsrel=_QUAD_TOLERANCE,
        limit=200,
    )
    return marginal**2 + integral / (2.0 * math.pi)


def zmax_p(z_max: float, rho: float) -> float:
    """
    One-tailed p-value Pr(max(Z1, Z2) >= z_max) for standard normals with correlation rho.

    Computed as 2 Phi(-z) - Phi2(-z, -z; rho), which avoids cancellation in
    the upper tail. rho = 1 gives the normal tail 1 - Phi(z).

    Raises:
        DataValidationError: If rho lies outside [0, 1].
    """
    rho = _check_rho(rho)
    if rho >= 1.0:
        p: float = float(stats.norm.sf(z_max))
    else:
        p = 2.0 * float(stats.norm.sf(z_max)) - _bivariate_diagonal_cdf(-z_max, rho)
    return min(max(p, 1e-300), float(np.nextafter(1.0, 0.0)))


def zmax_density(z: float | np.ndarray, rho: float) -> np.ndarray:
    """Density 2 phi(z) Phi(sqrt((1 - rho) / (1 + rho)) z) of the maximum."""
    rho = _check_rho(rho)
    z_array: np.ndarray = np.asarray(z, dtype=float)
    return 2.0 * stats.norm.pdf(z_array) * stats.norm.cdf(math.sqrt((1.0 - rho) / (1.0 + rho)) * z_array)


def zmax_quantile(alpha: float, rho: float) -> float:
    """
    Upper-alpha point of the maximum: the z with zmax_p(z, rho) = alpha.

    Raises:
        DataValidationError: If alpha or rho are out of range.
    """
    if not 0.0 < alpha < 1.0:
        raise DataValidationError(f'alpha must lie in (0, 1), got {alpha}')
    rho = _check_rho(rho)
    if rho >= 1.0:
        return float(stats.norm.isf(alpha))
    # the maximum lies between the single normal and the independent case
    lower: float = float(stats.norm.isf(alpha)) - 1.0
    upper: float = float(stats.norm.isf(1.0 - math.sqrt(1.0 - alpha))) + 1.0
    return float(
        optimize.brentq(
            lambda z: zmax_p(z, rho) - alpha, lower, upper, xtol=1e-14, rtol=1e-14, maxiter=200
        )
    )


def _usable(estimates: np.ndarray, variances: np.ndarray) -> np.ndarray:
    return np.isfinite(estimates) & np.isfinite(variances) & (variances > 0)


def combine_statistics(
    sizes: Sequence[float], estimates: Sequence[float], variances: Sequence[float]
) -> tuple[float, float, float]:
    """
    Z_I, Z_II and their correlation rho_hat for raw stratum inputs.

    Raises:
        DegenerateDataError: If no stratum has a finite estimate and positive variance.
    """
    n: np.ndarray = np.asarray(sizes, dtype=float)
    delta: np.ndarray = np.asarray(estimates, dtype=float)
    v: np.ndarray = np.asarray(variances, dtype=float)
    keep: np.ndarray = _usable(delta, v)
    if not keep.any():
        raise DegenerateDataError('No usable strata to combine')
    n, delta, v = n[keep], delta[keep], v[keep]

    z_stratum: np.ndarray = delta / np.sqrt(v)
    spread_i: float = math.sqrt(float(np.sum(n**2 * v)))
    spread_ii: float = math.sqrt(float(np.sum(n**2)))
    z_i: float = float(np.sum(n * delta)) / spread_i
    z_ii: float = float(np.sum(n * z_stratum)) / spread_ii
    rho_hat: float = float(np.sum(n**2 * np.sqrt(v))) / (spread_i * spread_ii)
    return z_i, z_ii, min(rho_hat, 1.0)


def combine_z(effects: Sequence[StratumEffect]) -> tuple[float, float, float]:
    """
    Z_I = sum n_q d_q / sqrt(sum n_q^2 V_q), Z_II = sum n_q Z_q / sqrt(sum n_q^2)
    and rho_hat = sum n_q^2 sqrt(V_q) / sqrt(sum n_q^2 V_q * sum n_q^2).

    Raises:
        DegenerateDataError: If there are no usable strata.
    """
    return combine_statistics(
        [effect.n for effect in effects],
        [effect.delta_hat for effect in effects],
        [effect.v for effect in effects],
    )


def amalgamate_arrays(
    sizes: Sequence[float],
    estimates: Sequence[float],
    variances: Sequence[float],
    strata: Sequence[int],
    track: Track = 'TR',
    alpha: float = 0.05,
    test_level: float = 0.025,
) -> AmalgamResult:
    """
    Combined test and average effect for raw stratum inputs (see amalgamate).

    Estimates must follow the "positive favors A" orientation.
    """
    z_i, z_ii, rho_hat = combine_statistics(sizes, estimates, variances)
    n: np.ndarray = np.asarray(sizes, dtype=float)
    delta: np.ndarray = np.asarray(estimates, dtype=float)
    v: np.ndarray = np.asarray(variances, dtype=float)
    keep: np.ndarray = _usable(delta, v)
    n, delta, v = n[keep], delta[keep], v[keep]
    used: list[int] = [int(s) for s, k in zip(strata, keep, strict=True) if k]

    scheme: WeightScheme = 'by-n' if z_i >= z_ii else 'by-n-over-sd'
    weights: np.ndarray = n if scheme == 'by-n' else n / np.sqrt(v)
    delta_hat: float = float(np.sum(weights * delta) / np.sum(weights))
    v_delta: float = float(np.sum(weights**2 * v) / np.sum(weights) ** 2)

    z_max: float = max(z_i, z_ii)
    p_value: float = zmax_p(z_max, rho_hat)
    half_width: float = zmax_quantile(alpha / 2.0, rho_hat) * math.sqrt(v_delta)
    low: float = delta_hat - half_width
    high: float = delta_hat + half_width
    if track == 'TR':
        estimate, ci_lower, ci_upper = math.exp(delta_hat), math.exp(low), math.exp(high)
    else:
        estimate, ci_lower, ci_upper = math.exp(-delta_hat), math.exp(-high), math.exp(-low)

    result: AmalgamResult = AmalgamResult(
        track=track,
        z_i=z_i,
        z_ii=z_ii,
        z_max=z_max,
        rho_hat=rho_hat,
        p_value=p_value,
        delta_hat=delta_hat,
        v_delta=v_delta,
        estimate=estimate,
        ci_lower=ci_lower,
        ci_upper=ci_upper,
        weight_scheme=scheme,
        alpha=alpha,
        test_level=test_level,
        rejected=p_value < test_level,
        strata_used=used,
    )
    logger.info(
        '%s track: Z_I=%.4f Z_II=%.4f rho=%.4f p=%.4g estimate=%.4f (%.4f, %.4f) [%s]',
        track,
        z_i,
        z_ii,
        rho_hat,
        p_value,
        estimate,
        ci_lower,
        ci_upper,
        scheme,
    )
    return result


def amalgamate(
    effects: Sequence[StratumEffect],
    alpha: float = 0.05,
    test_level: float = 0.025,
    track: Literal['TR', 'HR'] = 'TR',
) -> AmalgamResult:
    """
    Combine stratum effects into the overall one-tailed test and average effect.

    The weights are n_q when Z_I attains the maximum (ties included) and
    n_q / sqrt(V_q) otherwise; the CI is delta_hat -/+ z_{max, alpha/2}
    sqrt(V(delta_hat)) and is exponentiated onto the ratio scale. On the HR
    track the per-stratum inputs are (-log HR, Var log HR) from the
    supplemental Cox blocks and the estimate is reported as a hazard ratio.

    Args:
        effects: Usable stratum effects.
        alpha: CI level is 1 - alpha.
        test_level: Reject when the p-value is below this (default alpha / 2).
        track: 'TR' or 'HR'.

    Raises:
        DegenerateDataError: If no stratum is usable (for HR: none has a Cox block).
    """
    if track == 'TR':
        return amalgamate_arrays(
            [effect.n for effect in effects],
            [effect.delta_hat for effect in effects],
            [effect.v for effect in effects],
            [effect.stratum for effect in effects],
            track='TR',
            alpha=alpha,
            test_level=test_level,
        )

    with_hr: list[StratumEffect] = [effect for effect in effects if effect.hr is not None]
    if not with_hr:
        raise DegenerateDataError('No stratum has a hazard-ratio estimate')
    return amalgamate_arrays(
        [effect.n for effect in with_hr],
        [-effect.hr.log_hr for effect in with_hr if effect.hr is not None],
        [effect.hr.se**2 for effect in with_hr if effect.hr is not None],
        [effect.stratum for effect in with_hr],
        track='HR',
        alpha=alpha,
        test_level=test_level,
    )
