# fivestar/simlab.py
"""
Monte Carlo harness for the operating characteristics of the stratified
analysis and its comparators.

A scenario (ScenarioSpec) describes a 1:1 randomized trial whose population
is a mixture of four true risk strata defined by X1, X2 and X26 > cutoff.
Every replicate draws one trial, runs the requested methods and records
rejection, estimate and CI; run_scenario aggregates them into type I error or
power, mean percent bias and CI coverage, plus step-wise recovery of the
prognostic covariates.

Replicates are seeded from (seed, replicate index) only, so the results do
not depend on the number of workers.
"""

import logging
import math
import time
from collections.abc import Sequence
from pathlib import Path

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from fivestar.coxnet import cox_fit
from fivestar.exceptions import DataValidationError, DegenerateDataError, FiveStarError
from fivestar.models import CovariateSpec, CovariateValue, SubjectRecord, TrialDataset
from fivestar.nonparam import logrank, maxcombo, rmst_compare, stratified_logrank
from fivestar.pipeline import cox_comparison, run_5star
from fivestar.result_models import (
    AmalgamResult,
    AnalysisReport,
    RecoveryMetrics,
    ReplicateOutcome,
    ReplicateSteps,
    ScenarioSpec,
    SimReport,
    SimResult,
    SimSummary,
    TrueEffects,
)
from fivestar.utils import AnalysisConfig, ReplicateLogHandler, ReportFileHandler, derive_seed
from fivestar.utils.config_loader import ALL_METHODS, MethodName

logger: logging.Logger = logging.getLogger(__name__)

PROGNOSTIC: tuple[str, ...] = ('X1', 'X2', 'X26')

# True stratum (0 = highest risk) indexed by 4 * X1 + 2 * X2 + [X26 > cutoff]
_STRATUM_LOOKUP: np.ndarray = np.array([0, 1, 0, 2, 1, 3, 2, 3])

_BATCH: int = 4096
_MAX_BATCHES: int = 1000
_MIN_EIGENVALUE: float = 1e-6

SUMMARY_COLUMNS: list[str] = [
    'scenario',
    'method',
    'reps',
    'failures',
    'rejection_pct',
    'mc_se_pct',
    'mean_percent_bias',
    'ci_coverage_pct',
    'runtime_seconds',
]


# =============================================================================
# Covariates
# =============================================================================


def covariate_names(spec: ScenarioSpec) -> list[str]:
    return [f'X{j}' for j in range(1, spec.n_covariates + 1)]


def covariate_specs(spec: ScenarioSpec) -> list[CovariateSpec]:
    """X1..X{n_binary} binary, the rest continuous."""
    return [
        CovariateSpec(name=name, kind='binary' if j < spec.n_binary else 'continuous')
        for j, name in enumerate(covariate_names(spec))
    ]


def _latent_correlation(target: np.ndarray, binary: np.ndarray) -> np.ndarray:
    """
    Latent Gaussian correlations whose realized correlations hit the targets.

    A pair of latent normals thresholded at zero has correlation
    (2 / pi) asin(r); one thresholded and one kept has r sqrt(2 / pi).
    """
    both: np.ndarray = np.logical_and.outer(binary, binary)
    one: np.ndarray = np.logical_xor.outer(binary, binary)
    latent: np.ndarray = target.copy()
    latent[both] = np.sin(np.pi * target[both] / 2.0)
    latent[one] = np.clip(target[one] * math.sqrt(math.pi / 2.0), -0.99, 0.99)
    return latent


def _nearest_correlation(matrix: np.ndarray) -> np.ndarray:
    """Clip eigenvalues and rescale to unit diagonal."""
    values, vectors = np.linalg.eigh(matrix)
    if values.min() >= _MIN_EIGENVALUE:
        return matrix
    logger.debug('Projecting correlation matrix to PSD (min eigenvalue %.3g)', values.min())
    clipped: np.ndarray = (vectors * np.maximum(values, _MIN_EIGENVALUE)) @ vectors.T
    scale: np.ndarray = 1.0 / np.sqrt(np.diag(clipped))
    result: np.ndarray = clipped * np.outer(scale, scale)
    np.fill_diagonal(result, 1.0)
    return result


def correlation_matrix(spec: ScenarioSpec, seed: int) -> np.ndarray:
    """
    Latent correlation matrix of the covariates.

    Target correlations are trio_correlation within (X1, X2, X26) and
    N(0, noise_sd) draws elsewhere; they are mapped to the latent scale and
    projected to the nearest valid correlation matrix when needed.
    """
    p: int = spec.n_covariates
    rng: np.random.Generator = np.random.default_rng(seed)
    upper: np.ndarray = np.triu(rng.normal(0.0, spec.noise_sd, size=(p, p)), k=1)
    target: np.ndarray = np.clip(upper + upper.T, -0.95, 0.95)
    trio: list[int] = [0, 1, 25]
    for a in trio:
        for b in trio:
            if a != b:
                target[a, b] = spec.trio_correlation
    np.fill_diagonal(target, 1.0)

    binary: np.ndarray = np.arange(p) < spec.n_binary
    latent: np.ndarray = _latent_correlation(target, binary)
    np.fill_diagonal(latent, 1.0)
    return _nearest_correlation(latent)


def _draw(rng: np.random.Generator, size: int, factor: np.ndarray, n_binary: int) -> np.ndarray:
    x: np.ndarray = rng.standard_normal((size, factor.shape[0])) @ factor.T
    x[:, :n_binary] = (x[:, :n_binary] > 0.0).astype(float)
    return x


def gen_covariates(
    n: int,
    seed: int,
    spec: ScenarioSpec | None = None,
    correlation: np.ndarray | None = None,
) -> np.ndarray:
    """
    Draw an n x p covariate matrix.

    Binary columns are latent normals thresholded at zero (mean 0.5), the
    continuous columns are standard normal.

    Args:
        n: Number of rows.
        seed: Seed of the draw.
        spec: Covariate design (default: the standard scenario design).
        correlation: Latent correlation matrix; derived from seed when None.
    """
    if n < 1:
        raise DataValidationError(f'n must be at least 1, got {n}')
    design: ScenarioSpec = spec or ScenarioSpec.preset('null')
    latent: np.ndarray = (
        correlation
        if correlation is not None
        else correlation_matrix(design, derive_seed(seed, 'correlation'))
    )
    factor: np.ndarray = np.linalg.cholesky(latent)
    return _draw(np.random.default_rng(seed), n, factor, design.n_binary)


def stratum_codes(x: np.ndarray, cutoff: float = 0.4) -> np.ndarray:
    """0-based true stratum per row of a covariate matrix."""
    cell: np.ndarray = 4 * x[:, 0].astype(int) + 2 * x[:, 1].astype(int) + (x[:, 25] > cutoff)
    return _STRATUM_LOOKUP[cell]


def true_strata(data: TrialDataset, cutoff: float = 0.4) -> np.ndarray:
    """
    True stratum (1 = highest risk) of every subject, recomputed from X1, X2, X26.
    """
    columns: np.ndarray = np.zeros((data.n, 26))
    columns[:, 0] = data.covariate_codes('X1')
    columns[:, 1] = data.covariate_codes('X2')
    columns[:, 25] = data.covariate_codes('X26')
    return stratum_codes(columns, cutoff) + 1


def true_effects(spec: ScenarioSpec) -> TrueEffects:
    """
    Per-stratum log time ratios -log(theta_i) / kappa_i and the averaged estimands.

    gamma = exp(sum f_i delta_i) and theta = exp(sum f_i log(theta_i)) with
    f the stratum prevalences.
    """
    f: np.ndarray = np.asarray(spec.prevalence)
    beta: np.ndarray = np.log(np.asarray(spec.theta))
    delta: np.ndarray = -beta / np.asarray(spec.kappa)
    return TrueEffects(
        delta=delta.tolist(),
        beta=beta.tolist(),
        gamma=float(np.exp(np.sum(f * delta))),
        theta=float(np.exp(np.sum(f * beta))),
    )


def weibull_scales(spec: ScenarioSpec) -> tuple[np.ndarray, np.ndarray]:
    """
    Weibull scales (arm B, arm A) per stratum.

    The control scale m / ln(2)^(1 / kappa) makes m the control median; the
    test scale multiplies it by theta^(-1 / kappa).
    """
    kappa: np.ndarray = np.asarray(spec.kappa)
    eta_b: np.ndarray = np.asarray(spec.medians_b) / np.log(2.0) ** (1.0 / kappa)
    eta_a: np.ndarray = eta_b * np.asarray(spec.theta) ** (-1.0 / kappa)
    return eta_b, eta_a


# =============================================================================
# Trials
# =============================================================================


def _conditional_rows(
    rng: np.random.Generator, needed: np.ndarray, spec: ScenarioSpec, factor: np.ndarray
) -> list[np.ndarray]:
    """Rows drawn from the covariate law conditional on each true stratum (rejection sampling)."""
    pools: list[list[np.ndarray]] = [[] for _ in needed]
    have: np.ndarray = np.zeros(len(needed), dtype=int)
    for _ in range(_MAX_BATCHES):
        if np.all(have >= needed):
            break
        x: np.ndarray = _draw(rng, _BATCH, factor, spec.n_binary)
        codes: np.ndarray = stratum_codes(x, spec.cutoff)
        for i in range(len(needed)):
            short: int = int(needed[i] - have[i])
            if short > 0:
                taken: np.ndarray = x[codes == i][:short]
                pools[i].append(taken)
                have[i] += len(taken)
    if np.any(have < needed):
        raise DegenerateDataError(f'Could not fill the true strata: have {have}, need {needed}')
    return [np.vstack(pool) if pool else np.empty((0, factor.shape[0])) for pool in pools]


def gen_trial(
    spec: ScenarioSpec, seed: int, correlation: np.ndarray | None = None
) -> TrialDataset:
    """
    Simulate one trial of a scenario.

    Stratum sizes are multinomial per arm; covariates are drawn from their
    joint law conditional on the assigned stratum. Entry is Uniform(0,
    accrual), survival is Weibull per stratum and arm, and follow-up stops at
    the calendar time of the target_events-th pooled event. Subjects entering
    after that time are not enrolled.

    Args:
        spec: The scenario.
        seed: Seed of this trial.
        correlation: Latent covariate correlation (derived from seed when None).

    Returns:
        The simulated TrialDataset with exactly target_events events.
    """
    rng: np.random.Generator = np.random.default_rng(seed)
    latent: np.ndarray = (
        correlation
        if correlation is not None
        else correlation_matrix(spec, derive_seed(seed, 'correlation'))
    )
    factor: np.ndarray = np.linalg.cholesky(latent)

    counts_a: np.ndarray = rng.multinomial(spec.n_per_arm, spec.prevalence)
    counts_b: np.ndarray = rng.multinomial(spec.n_per_arm, spec.prevalence)
    pools: list[np.ndarray] = _conditional_rows(rng, counts_a + counts_b, spec, factor)

    x_parts: list[np.ndarray] = []
    strata_parts: list[np.ndarray] = []
    treated_parts: list[np.ndarray] = []
    for i, pool in enumerate(pools):
        x_parts.append(pool)
        strata_parts.append(np.full(len(pool), i))
        treated_parts.append(np.arange(len(pool)) < counts_a[i])
    order: np.ndarray = rng.permutation(spec.n)
    x: np.ndarray = np.vstack(x_parts)[order]
    stratum: np.ndarray = np.concatenate(strata_parts)[order]
    treated: np.ndarray = np.concatenate(treated_parts)[order]

    entry: np.ndarray = rng.uniform(0.0, spec.accrual, spec.n)
    eta_b, eta_a = weibull_scales(spec)
    shape: np.ndarray = np.asarray(spec.kappa)[stratum]
    scale: np.ndarray = np.where(treated, eta_a[stratum], eta_b[stratum])
    survival: np.ndarray = scale * rng.weibull(shape)

    calendar: np.ndarray = entry + survival
    stop: float = float(np.sort(calendar)[spec.target_events - 1])
    enrolled: np.ndarray = entry < stop
    observed: np.ndarray = np.minimum(survival, stop - entry)
    event: np.ndarray = calendar <= stop
    if not enrolled.all():
        logger.debug(
            '%d subjects enter after the final analysis time; enrolled %d of %d',
            int((~enrolled).sum()),
            int(enrolled.sum()),
            spec.n,
        )

    names: list[str] = covariate_names(spec)
    records: list[SubjectRecord] = []
    for k in np.flatnonzero(enrolled):
        covariates: dict[str, CovariateValue] = {
            name: int(x[k, j]) if j < spec.n_binary else float(x[k, j])
            for j, name in enumerate(names)
        }
        records.append(
            SubjectRecord(
                id=f'S{k + 1:04d}',
                time=float(observed[k]),
                event=bool(event[k]),
                arm='A' if treated[k] else 'B',
                covariates=covariates,
            )
        )
    data: TrialDataset = TrialDataset(specs=tuple(covariate_specs(spec)), records=records)
    assert int(data.events.sum()) == spec.target_events
    return data


def misspecified_strata(data: TrialDataset) -> list[str]:
    """
    Crossed X2, X26 > 0 and X3 labels of the misspecified stratified comparator.

    X26 is cut at zero instead of the true cutoff and X3 carries no prognosis.
    """
    x2: np.ndarray = data.covariate_codes('X2')
    x26: np.ndarray = data.covariate_codes('X26')
    x3: np.ndarray = data.covariate_codes('X3')
    return [
        f'X2={int(a)}|X26>0={int(b > 0)}|X3={int(c)}'
        for a, b, c in zip(x2, x26, x3, strict=True)
    ]


# =============================================================================
# Replicates
# =============================================================================


def replicate_seed(seed: int, rep: int) -> int:
    return int(np.random.SeedSequence([seed, rep]).generate_state(1)[0])


def simulation_config(config: AnalysisConfig) -> AnalysisConfig:
    """
    Analysis settings used inside replicates.

    Applies the simulation overrides, runs every step single-threaded,
    unpins step seeds (each replicate derives its own) and turns the
    built-in comparators off; simlab runs them itself.
    """
    section = config.simulation
    enet_update: dict[str, object] = {'n_jobs': 1, 'seed': None}
    if section.psi_grid is not None:
        enet_update['psi_grid'] = section.psi_grid
    return config.model_copy(
        update={
            'enet': config.enet.model_copy(update=enet_update),
            'ctree': config.ctree.model_copy(
                update={'pvalue_method': section.ctree_pvalue_method, 'seed': None}
            ),
            'aft': config.aft.model_copy(update={'n_jobs': 1}),
            'comparators': config.comparators.model_copy(
                update={
                    'logrank': False,
                    'stratified_logrank': False,
                    'maxcombo': False,
                    'rmst': False,
                    'gt': False,
                }
            ),
        }
    )


def _track_outcome(
    rep: int, method: MethodName, track: AmalgamResult | None, seconds: float
) -> ReplicateOutcome:
    if track is None:
        return ReplicateOutcome(
            rep=rep, method=method, failed=True, error='track unavailable', seconds=seconds
        )
    return ReplicateOutcome(
        rep=rep,
        method=method,
        p_value=track.p_value,
        rejected=track.rejected,
        estimate=track.estimate,
        ci_lower=track.ci_lower,
        ci_upper=track.ci_upper,
        seconds=seconds,
    )


def _comparator_outcome(
    rep: int, method: MethodName, data: TrialDataset, config: AnalysisConfig
) -> ReplicateOutcome:
    test_level: float = config.amalgam.test_level
    alpha: float = config.amalgam.alpha
    start: float = time.perf_counter()
    try:
        if method in ('logrank', 'stratified_logrank'):
            labels: list[str] | None = (
                misspecified_strata(data) if method == 'stratified_logrank' else None
            )
            test = logrank(data) if labels is None else stratified_logrank(data, labels)
            comparison = cox_comparison(
                test.z, test.p_value, cox_fit(data, ['arm'], strata=labels), alpha
            )
            return ReplicateOutcome(
                rep=rep,
                method=method,
                p_value=comparison.p_value,
                rejected=comparison.p_value < test_level,
                estimate=comparison.hr,
                ci_lower=comparison.ci_lower,
                ci_upper=comparison.ci_upper,
                seconds=time.perf_counter() - start,
            )
        if method == 'maxcombo':
            p_value: float = maxcombo(
                data,
                method=config.comparators.maxcombo_method,
                seed=config.step_seed('maxcombo'),
                perm_reps=config.comparators.maxcombo_perm_reps,
            ).p_value
        else:
            p_value = rmst_compare(data, config.comparators.rmst_tau).p_value
    except (FiveStarError, ValueError, np.linalg.LinAlgError) as e:
        logger.debug('Replicate %d: %s failed: %s', rep, method, e)
        return ReplicateOutcome(rep=rep, method=method, failed=True, error=str(e))
    return ReplicateOutcome(
        rep=rep,
        method=method,
        p_value=p_value,
        rejected=p_value < test_level,
        seconds=time.perf_counter() - start,
    )


def run_replicate(
    spec: ScenarioSpec,
    methods: Sequence[MethodName],
    rep: int,
    seed: int,
    config: AnalysisConfig,
    correlation: np.ndarray,
) -> tuple[list[ReplicateOutcome], ReplicateSteps | None]:
    """
    Simulate trial number rep and run every requested method on it.

    config must already carry the simulation overrides (simulation_config).
    Method failures are recorded in the outcomes, never raised.
    """
    rep_seed: int = replicate_seed(seed, rep)
    data: TrialDataset = gen_trial(spec, derive_seed(rep_seed, 'data'), correlation)
    n_a: int = int(data.treated.sum())
    logger.debug(
        'Replicate %d: enrolled n=%d of %d planned (A %d, B %d)',
        rep,
        data.n,
        spec.n,
        n_a,
        data.n - n_a,
    )
    analysis: AnalysisConfig = config.with_seed(rep_seed)
    outcomes: list[ReplicateOutcome] = []
    steps: ReplicateSteps | None = None

    five_star: list[MethodName] = [m for m in methods if m in ('5star_tr', '5star_hr')]
    if five_star:
        start: float = time.perf_counter()
        try:
            report: AnalysisReport = run_5star(data, analysis)
        except FiveStarError as e:
            logger.debug('Replicate %d: stratified analysis failed: %s', rep, e)
            outcomes.extend(
                ReplicateOutcome(rep=rep, method=method, failed=True, error=str(e))
                for method in five_star
            )
        else:
            seconds: float = time.perf_counter() - start
            tree = report.step3.tree
            steps = ReplicateSteps(
                rep=rep,
                advanced=report.step2.selected_covariates,
                tree_covariates=tree.split_covariates() if tree is not None else [],
                n_strata=report.step3.assignment.c,
            )
            tracks: dict[str, AmalgamResult | None] = {
                '5star_tr': report.step5.tr,
                '5star_hr': report.step5.hr,
            }
            outcomes.extend(_track_outcome(rep, m, tracks[m], seconds) for m in five_star)

    outcomes.extend(
        _comparator_outcome(rep, method, data, analysis)
        for method in methods
        if method not in ('5star_tr', '5star_hr')
    )
    return [o.model_copy(update={'n_enrolled': data.n}) for o in outcomes], steps


# =============================================================================
# Aggregation
# =============================================================================


def _estimand(method: MethodName, truth: TrueEffects) -> float | None:
    if method == '5star_tr':
        return truth.gamma
    if method in ('5star_hr', 'logrank', 'stratified_logrank'):
        return truth.theta
    return None


def aggregate(
    scenario: str, method: MethodName, outcomes: Sequence[ReplicateOutcome], truth: TrueEffects
) -> SimResult:
    """
    Operating characteristics of one method from its replicate outcomes.

    Rates are taken over successful replicates. Bias is 100 (estimate - truth)
    / truth on the ratio scale, averaged over replicates.
    """
    ok: list[ReplicateOutcome] = [o for o in outcomes if not o.failed]
    rate: float = float(np.mean([o.rejected for o in ok])) if ok else 0.0
    mc_se: float = math.sqrt(rate * (1.0 - rate) / len(ok)) if ok else 0.0

    bias: float | None = None
    coverage: float | None = None
    target: float | None = _estimand(method, truth)
    estimated: list[ReplicateOutcome] = [o for o in ok if o.estimate is not None]
    if target is not None and estimated:
        bias = float(np.mean([100.0 * (o.estimate - target) / target for o in estimated]))  # type: ignore[operator]
        coverage = float(
            np.mean([o.ci_lower <= target <= o.ci_upper for o in estimated])  # type: ignore[operator]
        )
    timed: list[float] = [o.seconds for o in ok if o.seconds is not None]

    return SimResult(
        scenario=scenario,
        method=method,
        reps=len(outcomes),
        failures=len(outcomes) - len(ok),
        rejection_rate=rate,
        mc_se=mc_se,
        mean_percent_bias=bias,
        ci_coverage=coverage,
        runtime_seconds=float(np.mean(timed)) if timed else None,
    )


def recovery_metrics(
    scenario: str, steps: Sequence[ReplicateSteps], prognostic: Sequence[str] = PROGNOSTIC
) -> RecoveryMetrics | None:
    """How often the blinded steps recover the prognostic covariates; None without steps."""
    if not steps:
        return None
    truth: set[str] = set(prognostic)
    advanced: list[set[str]] = [set(s.advanced) for s in steps]
    used: list[set[str]] = [set(s.tree_covariates) for s in steps]
    return RecoveryMetrics(
        scenario=scenario,
        reps=len(steps),
        advance_rate={
            name: float(np.mean([name in chosen for chosen in advanced])) for name in prognostic
        },
        all_advanced_rate=float(np.mean([truth <= chosen for chosen in advanced])),
        mean_advanced=float(np.mean([len(chosen) for chosen in advanced])),
        tree_uses_all_rate=float(np.mean([truth <= names for names in used])),
        tree_only_correct_rate=float(np.mean([truth == names for names in used])),
        mean_tree_covariates=float(np.mean([len(names) for names in used])),
        mean_strata=float(np.mean([s.n_strata or 0 for s in steps])),
    )


def run_scenario(
    spec: ScenarioSpec,
    methods: Sequence[MethodName] = ALL_METHODS,
    reps: int = 2000,
    seed: int = 0,
    workers: int = 1,
    config: AnalysisConfig | None = None,
    replicate_log: Path | str | None = None,
) -> SimSummary:
    """
    Run reps simulated trials of a scenario and aggregate per method.

    Args:
        spec: The scenario.
        methods: Methods to run, reported in this order.
        reps: Number of replicates.
        seed: Root seed; replicate r uses SeedSequence([seed, r]).
        workers: joblib workers (-1 = all cores).
        config: Analysis settings (packaged defaults when None); its
            simulation section supplies the runtime overrides.
        replicate_log: Optional Parquet path for the per-replicate outcomes.

    Returns:
        SimSummary with one SimResult per method and the recovery metrics
        when a stratified method ran.

    Raises:
        DataValidationError: If reps < 1 or a method is unknown.
    """
    if reps < 1:
        raise DataValidationError(f'reps must be at least 1, got {reps}')
    unknown: list[str] = [m for m in methods if m not in ALL_METHODS]
    if unknown:
        raise DataValidationError(f'Unknown method(s) {unknown}; choose from {list(ALL_METHODS)}')

    base: AnalysisConfig = config if config is not None else AnalysisConfig()
    analysis: AnalysisConfig = simulation_config(base)
    correlation: np.ndarray = correlation_matrix(spec, derive_seed(seed, 'correlation'))
    truth: TrueEffects = true_effects(spec)

    logger.info(
        'Simulating scenario %s: %d reps, seed %d, %d workers, methods %s',
        spec.name,
        reps,
        seed,
        workers,
        list(methods),
    )
    runs: list[tuple[list[ReplicateOutcome], ReplicateSteps | None]] = Parallel(n_jobs=workers)(
        delayed(run_replicate)(spec, methods, rep, seed, analysis, correlation)
        for rep in range(reps)
    )
    outcomes: list[ReplicateOutcome] = [o for run in runs for o in run[0]]
    steps: list[ReplicateSteps] = [run[1] for run in runs if run[1] is not None]

    if replicate_log is not None:
        handler: ReplicateLogHandler = ReplicateLogHandler(
            Path(replicate_log), base.simulation.compression
        )
        handler.save(pd.DataFrame([o.model_dump() for o in outcomes]))

    results: list[SimResult] = [
        aggregate(spec.name, method, [o for o in outcomes if o.method == method], truth)
        for method in methods
    ]
    for result in results:
        logger.info(
            '%s %s: rejection %.4f (se %.4f), failures %d',
            spec.name,
            result.method,
            result.rejection_rate,
            result.mc_se,
            result.failures,
        )
    return SimSummary(
        scenario=spec,
        truth=truth,
        reps=reps,
        seed=seed,
        results=results,
        recovery=recovery_metrics(spec.name, steps),
    )


def _percent(value: float | None) -> float | None:
    return None if value is None else round(100.0 * value, 2)


def summarize(
    summaries: Sequence[SimSummary],
    output_dir: Path | str | None = None,
    float_format: str | None = None,
) -> pd.DataFrame:
    """
    Table of scenario x method operating characteristics.

    Rates are percentages rounded to 0.01 in the table; table2.json keeps the
    raw values and leaves out runtimes so that it only depends on the inputs.

    Args:
        summaries: One SimSummary per scenario run.
        output_dir: When given, table2.csv and table2.json are written there.
        float_format: printf-style float format for the CSV.

    Returns:
        The table (header only when summaries is empty).
    """
    rows: list[dict[str, object]] = [
        {
            'scenario': result.scenario,
            'method': result.method,
            'reps': result.reps,
            'failures': result.failures,
            'rejection_pct': _percent(result.rejection_rate),
            'mc_se_pct': _percent(result.mc_se),
            'mean_percent_bias': (
                None if result.mean_percent_bias is None else round(result.mean_percent_bias, 2)
            ),
            'ci_coverage_pct': _percent(result.ci_coverage),
            'runtime_seconds': result.runtime_seconds,
        }
        for summary in summaries
        for result in summary.results
    ]
    table: pd.DataFrame = pd.DataFrame(rows, columns=SUMMARY_COLUMNS)

    if output_dir is not None:
        handler: ReportFileHandler = ReportFileHandler(Path(output_dir), float_format)
        handler.write_csv('table2.csv', table)
        handler.write_json(
            'table2.json',
            SimReport(summaries=list(summaries)),
            exclude={'summaries': {'__all__': {'results': {'__all__': {'runtime_seconds'}}}}},
        )
    return table
