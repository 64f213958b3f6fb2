"""Tests for the combined test and average effect."""

import math

import numpy as np
import pytest
from scipy import integrate, stats

from fivestar.amalgam import (
    amalgamate,
    amalgamate_arrays,
    combine_statistics,
    combine_z,
    zmax_density,
    zmax_p,
    zmax_quantile,
)
from fivestar.exceptions import DataValidationError, DegenerateDataError
from fivestar.result_models import AmalgamResult, HrBlock, StratumEffect


def make_effect(
    stratum: int, n: int, delta_hat: float, v: float, log_hr: float | None = None
) -> StratumEffect:
    sd: float = math.sqrt(v)
    hr: HrBlock | None = None
    if log_hr is not None:
        hr = HrBlock(
            log_hr=log_hr,
            se=sd,
            hr=math.exp(log_hr),
            ci_lower=math.exp(log_hr - 1.96 * sd),
            ci_upper=math.exp(log_hr + 1.96 * sd),
            pr_hr_lt_1=float(stats.norm.cdf(-log_hr / sd)),
            converged=True,
        )
    return StratumEffect(
        stratum=stratum,
        n=n,
        n_a=n // 2,
        n_b=n - n // 2,
        events_a=n // 4,
        events_b=n // 4,
        delta_hat=delta_hat,
        v=v,
        weights={'weibull': 1.0},
        fits=[],
        tr=math.exp(delta_hat),
        tr_ci_lower=math.exp(delta_hat - 1.96 * sd),
        tr_ci_upper=math.exp(delta_hat + 1.96 * sd),
        pr_tr_gt_1=float(stats.norm.cdf(delta_hat / sd)),
        flagged=False,
        hr=hr,
    )


class TestZmaxLaw:
    """Tests for the null law of the maximum of two correlated normals."""

    def test_reference_value(self) -> None:
        assert 0.0010 <= zmax_p(3.05, 0.992) <= 0.0013  # noqa: PLR2004

    def test_independent_case(self) -> None:
        z: float = 1.7
        assert zmax_p(z, 0.0) == pytest.approx(1.0 - stats.norm.cdf(z) ** 2, rel=1e-10)

    def test_perfect_correlation_is_single_normal(self) -> None:
        assert zmax_p(2.0, 1.0) == pytest.approx(stats.norm.sf(2.0), rel=1e-12)

    def test_p_decreases_with_correlation(self) -> None:
        values: list[float] = [zmax_p(2.0, rho) for rho in (0.0, 0.5, 0.9, 1.0)]

        assert values == sorted(values, reverse=True)

    @pytest.mark.parametrize('rho', [0.0, 0.3, 0.95])
    def test_density_integrates_to_one(self, rho: float) -> None:
        total, _ = integrate.quad(lambda z: float(zmax_density(z, rho)), -np.inf, np.inf)

        assert total == pytest.approx(1.0, abs=1e-8)

    @pytest.mark.parametrize('rho', [0.0, 0.5, 0.992])
    def test_density_matches_tail(self, rho: float) -> None:
        tail, _ = integrate.quad(lambda z: float(zmax_density(z, rho)), 1.5, np.inf)

        assert tail == pytest.approx(zmax_p(1.5, rho), abs=1e-8)

    @pytest.mark.parametrize(('alpha', 'rho'), [(0.025, 0.0), (0.025, 0.8), (0.001, 0.99)])
    def test_quantile_inverts_tail(self, alpha: float, rho: float) -> None:
        assert zmax_p(zmax_quantile(alpha, rho), rho) == pytest.approx(alpha, rel=1e-8)

    def test_example_anchor(self) -> None:
        assert 0.0085 <= zmax_p(2.36, 0.998) <= 0.0105  # noqa: PLR2004
        assert zmax_p(2.36, 0.998) > stats.norm.sf(2.36)

    def test_quantile_for_independent_statistics(self) -> None:
        expected: float = float(stats.norm.ppf(math.sqrt(0.975)))

        assert zmax_quantile(0.025, 0.0) == pytest.approx(expected, rel=1e-8)
        assert zmax_quantile(0.025, 0.0) == pytest.approx(2.239, abs=1e-3)

    def test_quantile_at_full_correlation(self) -> None:
        assert zmax_quantile(0.025, 1.0) == pytest.approx(1.959964, abs=1e-6)

    def test_rho_out_of_range(self) -> None:
        with pytest.raises(DataValidationError, match='rho'):
            zmax_p(1.0, 1.5)

    def test_alpha_out_of_range(self) -> None:
        with pytest.raises(DataValidationError, match='alpha'):
            zmax_quantile(0.0, 0.5)


class TestCombine:
    """Tests for Z_I, Z_II and the average effect."""

    def test_two_strata(self) -> None:
        z_i, z_ii, rho_hat = combine_statistics([100, 50], [0.3, 0.1], [0.04, 0.09])

        assert z_i == pytest.approx(1.4)
        assert z_ii == pytest.approx((150 + 50 / 3) / math.sqrt(12500))
        assert rho_hat == pytest.approx(2750 / (25 * math.sqrt(12500)))

    def test_worked_two_strata_example(self) -> None:
        z_i, z_ii, rho_hat = combine_statistics([100, 200], [0.2, 0.1], [0.01, 0.04])

        assert z_i == pytest.approx(40 / math.sqrt(1700), abs=1e-10)
        assert z_i == pytest.approx(0.9701, abs=1e-4)
        assert z_ii == pytest.approx(300 / math.sqrt(50000), abs=1e-10)
        assert z_ii == pytest.approx(1.3416, abs=1e-4)
        assert rho_hat == pytest.approx(9000 / (math.sqrt(1700) * math.sqrt(50000)), abs=1e-10)
        assert rho_hat == pytest.approx(0.9762, abs=1e-4)

    def test_worked_example_from_stratum_effects(self) -> None:
        effects: list[StratumEffect] = [
            make_effect(1, 100, 0.2, 0.01),
            make_effect(2, 200, 0.1, 0.04),
        ]

        z_i, z_ii, rho_hat = combine_z(effects)

        assert (z_i, z_ii, rho_hat) == pytest.approx((0.97014, 1.34164, 0.97619), abs=1e-5)

    def test_single_stratum_has_unit_correlation(self) -> None:
        z_i, z_ii, rho_hat = combine_statistics([80], [0.2], [0.01])

        assert z_i == pytest.approx(2.0)
        assert z_ii == pytest.approx(2.0)
        assert rho_hat == pytest.approx(1.0)

    def test_unusable_strata_are_skipped(self) -> None:
        z_i, _, _ = combine_statistics([80, 40], [0.2, np.nan], [0.01, 0.02])

        assert z_i == pytest.approx(2.0)

    def test_nothing_usable(self) -> None:
        with pytest.raises(DegenerateDataError, match='No usable strata'):
            combine_statistics([10], [0.1], [0.0])

    def test_average_uses_winning_weights(self) -> None:
        result: AmalgamResult = amalgamate_arrays(
            [100, 50], [0.3, 0.1], [0.04, 0.09], strata=[1, 2]
        )

        assert result.weight_scheme == 'by-n-over-sd'
        assert result.z_max == pytest.approx(result.z_ii)
        assert result.delta_hat == pytest.approx(0.25)
        assert result.v_delta == pytest.approx(0.028125)
        assert result.estimate == pytest.approx(math.exp(0.25))
        assert result.p_value == pytest.approx(zmax_p(result.z_max, result.rho_hat))
        assert result.strata_used == [1, 2]

    def test_equal_variances_make_schemes_agree(self) -> None:
        result: AmalgamResult = amalgamate_arrays(
            [60, 40], [0.2, 0.1], [0.02, 0.02], strata=[1, 2]
        )

        assert result.z_i == pytest.approx(result.z_ii)
        assert result.delta_hat == pytest.approx(0.16)

    def test_single_stratum_interval(self) -> None:
        result: AmalgamResult = amalgamate_arrays([80], [0.2], [0.01], strata=[1])

        assert result.ci_lower == pytest.approx(math.exp(0.2 - 1.959964 * 0.1), rel=1e-6)
        assert result.ci_upper == pytest.approx(math.exp(0.2 + 1.959964 * 0.1), rel=1e-6)
        assert result.p_value == pytest.approx(stats.norm.sf(2.0), rel=1e-6)
        assert result.rejected


class TestAmalgamate:
    """Tests for amalgamate on stratum effects."""

    def test_tr_track(self) -> None:
        effects: list[StratumEffect] = [
            make_effect(1, 100, 0.3, 0.04),
            make_effect(2, 50, 0.1, 0.09),
        ]

        result: AmalgamResult = amalgamate(effects)

        assert result.track == 'TR'
        assert result.delta_hat == pytest.approx(0.25)
        assert result.ci_lower < result.estimate < result.ci_upper

    def test_hr_track_reports_hazard_ratio(self) -> None:
        effects: list[StratumEffect] = [
            make_effect(1, 100, 0.3, 0.04, log_hr=-0.4),
            make_effect(2, 50, 0.1, 0.09, log_hr=-0.2),
            make_effect(3, 30, 0.0, 0.20),
        ]

        result: AmalgamResult = amalgamate(effects, track='HR')

        assert result.track == 'HR'
        assert result.strata_used == [1, 2]
        assert result.estimate < 1.0
        assert result.estimate == pytest.approx(math.exp(-result.delta_hat))
        assert result.ci_lower < result.estimate < result.ci_upper

    def test_combine_z_reads_stratum_effects(self) -> None:
        effects: list[StratumEffect] = [
            make_effect(1, 100, 0.3, 0.04),
            make_effect(2, 50, 0.1, 0.09),
        ]

        assert combine_z(effects) == pytest.approx(
            combine_statistics([100, 50], [0.3, 0.1], [0.04, 0.09])
        )

    def test_hr_track_needs_cox_blocks(self) -> None:
        with pytest.raises(DegenerateDataError, match='hazard-ratio'):
            amalgamate([make_effect(1, 100, 0.3, 0.04)], track='HR')
