# fivestar/pipeline.py
"""
End-to-end stratified analysis of one trial.

FiveStarPipeline loads and validates the configuration once, then runs the
five steps on a TrialDataset:

1.  **Pre-specification**: the covariate specs of the dataset (validated at
    load time) plus report-only diagnostics.
2.  **Covariate filtering**: cross-validated elastic-net Cox regression on
    the blinded data keeps the prognostic covariates.
3.  **Risk stratification**: a conditional inference tree on the blinded
    data forms preliminary strata, which are ranked by restricted KM area and
    pooled over consecutive ranks.
4.  **Stratum effects**: arm labels are joined back and each final stratum
    gets a model-averaged AFT time ratio plus a Cox hazard ratio.
5.  **Amalgamation**: stratum effects are combined into one one-tailed test
    and one average time ratio (and hazard ratio).

Steps 2 and 3 only ever see the output of blind(). Failures are re-raised as
AnalysisStepError tagged with the step name.
"""

import logging
from collections.abc import Callable, Iterator
from contextlib import contextmanager
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed
from scipy import stats

from fivestar.aftavg import stratum_summary
from fivestar.amalgam import amalgamate
from fivestar.coxnet import cox_fit, cv_select, gt_test
from fivestar.exceptions import (
    AnalysisStepError,
    ConvergenceError,
    DegenerateDataError,
    FiveStarError,
)
from fivestar.models import BlindedDataset, TrialDataset
from fivestar.nonparam import (
    km,
    logrank,
    maxcombo,
    rmst_compare,
    smoothed_hazard,
    stratified_logrank,
)
from fivestar.result_models import (
    AmalgamResult,
    AnalysisReport,
    ComparatorBlock,
    CoxComparison,
    CoxFit,
    CurvePoint,
    CvSelection,
    ExcludedStratum,
    HazardPoint,
    RiskTree,
    Step2Report,
    Step3Report,
    Step4Report,
    Step5Report,
    StepFunction,
    StratumAssignment,
    StratumEffect,
    StratumRow,
    ValidationReport,
)
from fivestar.strata import apply_pooling, ctree_grow, order_strata, pooling_tree
from fivestar.survdata import blind, load_csv, rejoin_arms, validate
from fivestar.utils import AnalysisConfig, ReportFileHandler, derive_seed, load_config, setup_logger

logger: logging.Logger = logging.getLogger(__name__)

REPORT_FILES: tuple[str, ...] = (
    'report.json',
    'strata.csv',
    'forest.csv',
    'km_curves.csv',
    'cv_surface.csv',
    'hazard_curves.csv',
)


@contextmanager
def _step(name: str) -> Iterator[None]:
    """Tag any analysis failure with the step it happened in."""
    try:
        yield
    except AnalysisStepError:
        raise
    except (FiveStarError, ValueError, np.linalg.LinAlgError) as e:
        logger.error('%s failed: %s', name, e)
        raise AnalysisStepError(name, str(e)) from e


# =============================================================================
# Steps
# =============================================================================


def _filter_covariates(blinded: BlindedDataset, config: AnalysisConfig) -> tuple[Step2Report, CvSelection | None]:
    if not blinded.covariate_names:
        logger.warning('No pre-specified covariates; skipping covariate filtering')
        return Step2Report(selected_covariates=[]), None
    section = config.enet
    selection: CvSelection = cv_select(
        blinded,
        section.psi_grid,
        folds=section.folds,
        rule=section.rule,
        seed=config.step_seed('enet'),
        n_lambda=section.n_lambda,
        lambda_min_ratio=section.lambda_min_ratio,
        n_jobs=section.n_jobs,
    )
    report: Step2Report = Step2Report(
        selected_covariates=selection.selected_covariates,
        psi=selection.psi,
        lambda_value=selection.lambda_value,
        rule=selection.rule,
        coefficients=selection.coefficients,
        surface=selection.surface,
    )
    return report, selection


def _stratify(
    blinded: BlindedDataset, covariates: list[str], config: AnalysisConfig
) -> tuple[RiskTree, RiskTree | None, StratumAssignment]:
    section = config.ctree
    seed: int = config.step_seed('ctree')
    tree: RiskTree = ctree_grow(
        blinded,
        covariates,
        alpha=section.alpha_3a,
        min_node=section.min_node,
        perm_reps=section.perm_reps,
        seed=seed,
        pvalue_method=section.pvalue_method,
        max_depth=section.max_depth,
    )
    prelim: StratumAssignment = order_strata(blinded, tree)
    pool: RiskTree | None = pooling_tree(
        blinded,
        prelim,
        alpha=section.alpha_3b,
        min_node=section.min_node,
        perm_reps=section.perm_reps,
        seed=derive_seed(seed, 'pooling'),
        pvalue_method=section.pvalue_method,
    )
    return tree, pool, apply_pooling(blinded, prelim, pool)


def _strata_rows(blinded: BlindedDataset, assignment: StratumAssignment) -> list[StratumRow]:
    final: np.ndarray = np.asarray(assignment.final_stratum)
    rows: list[StratumRow] = []
    for index, group in enumerate(assignment.final_groups, start=1):
        members: np.ndarray = final == index
        rows.append(
            StratumRow(
                stratum=index,
                prelim_ranks=group,
                n=int(members.sum()),
                n_events=int(blinded.events[members].sum()),
                restricted_area=assignment.final_areas[index - 1],
            )
        )
    return rows


def _degenerate_reason(data: TrialDataset, members: np.ndarray) -> str | None:
    treated: np.ndarray = data.treated[members]
    events: np.ndarray = data.events[members]
    if treated.all() or not treated.any():
        return 'one arm is absent'
    if not events[treated].any() or not events[~treated].any():
        return 'an arm has no events'
    return None


def _stratum_effect(
    data: TrialDataset,
    members: np.ndarray,
    stratum: int,
    group: list[int],
    config: AnalysisConfig,
) -> StratumEffect | ExcludedStratum:
    reason: str | None = _degenerate_reason(data, members)
    if reason is None:
        try:
            return stratum_summary(
                data.subset(np.flatnonzero(members)),
                stratum=stratum,
                alpha=config.aft.alpha,
                flag_threshold=config.aft.flag_threshold,
                distributions=config.aft.distributions,
                prelim_ranks=group,
            )
        except (DegenerateDataError, ConvergenceError) as e:
            reason = str(e)
    logger.warning('Stratum %d excluded from the combined analysis: %s', stratum, reason)
    return ExcludedStratum(stratum=stratum, n=int(members.sum()), reason=reason)


def _estimate_effects(
    data: TrialDataset, assignment: StratumAssignment, config: AnalysisConfig
) -> Step4Report:
    final: np.ndarray = np.asarray(assignment.final_stratum)
    outcomes: list[StratumEffect | ExcludedStratum] = Parallel(n_jobs=config.aft.n_jobs)(
        delayed(_stratum_effect)(data, final == index, index, group, config)
        for index, group in enumerate(assignment.final_groups, start=1)
    )
    effects: list[StratumEffect] = [o for o in outcomes if isinstance(o, StratumEffect)]
    excluded: list[ExcludedStratum] = [o for o in outcomes if isinstance(o, ExcludedStratum)]
    if not effects:
        raise DegenerateDataError('Every final stratum is degenerate; nothing to combine')
    return Step4Report(effects=effects, excluded=excluded)


def _combine(step4: Step4Report, config: AnalysisConfig) -> tuple[Step5Report, list[str]]:
    notes: list[str] = []
    tr: AmalgamResult = amalgamate(
        step4.effects,
        alpha=config.amalgam.alpha,
        test_level=config.amalgam.test_level,
        track='TR',
    )
    hr: AmalgamResult | None = None
    try:
        hr = amalgamate(
            step4.effects,
            alpha=config.amalgam.alpha,
            test_level=config.amalgam.test_level,
            track='HR',
        )
    except DegenerateDataError as e:
        notes.append(f'Hazard-ratio track unavailable: {e}')
        logger.warning('Hazard-ratio track unavailable: %s', e)
    return Step5Report(tr=tr, hr=hr), notes


# =============================================================================
# Plot tables
# =============================================================================


def _curve_points(scope: str, arm: str, curve: StepFunction) -> list[CurvePoint]:
    points: list[CurvePoint] = [
        CurvePoint(scope=scope, arm=arm, time=0.0, survival=curve.initial_value, variance=0.0)
    ]
    points.extend(
        CurvePoint(scope=scope, arm=arm, time=time, survival=value, variance=variance)
        for time, value, variance in zip(curve.knots, curve.values, curve.variances, strict=True)
    )
    return points


def _groups(data: TrialDataset, assignment: StratumAssignment) -> list[tuple[str, np.ndarray]]:
    final: np.ndarray = np.asarray(assignment.final_stratum)
    groups: list[tuple[str, np.ndarray]] = [('overall', np.ones(data.n, dtype=bool))]
    groups.extend(
        (f'stratum {index}', final == index) for index in range(1, assignment.c + 1)
    )
    return groups


def _plot_tables(
    data: TrialDataset, assignment: StratumAssignment, grid_points: int
) -> tuple[list[CurvePoint], list[HazardPoint]]:
    km_points: list[CurvePoint] = []
    hazard_points: list[HazardPoint] = []
    treated: np.ndarray = data.treated
    for scope, members in _groups(data, assignment):
        arms: list[tuple[str, np.ndarray]] = [('A', members & treated), ('B', members & ~treated)]
        if scope == 'overall':
            arms.insert(0, ('pooled', members))
        for arm, mask in arms:
            if not mask.any():
                continue
            km_points.extend(_curve_points(scope, arm, km(data.times[mask], data.events[mask])))
            if not data.events[mask].any():
                continue
            table = smoothed_hazard(data.times[mask], data.events[mask], grid_points=grid_points)
            hazard_points.extend(
                HazardPoint(
                    scope=scope,
                    arm=arm,
                    time=float(row.time),
                    hazard=float(row.hazard),
                    log_hazard=None if np.isnan(row.log_hazard) else float(row.log_hazard),
                )
                for row in table.itertuples(index=False)
            )
    return km_points, hazard_points


# =============================================================================
# Public operations
# =============================================================================


def cox_comparison(
    z: float,
    p_value: float,
    fit: CoxFit,
    alpha: float,
    strata: list[str] | None = None,
    dropped: list[str] | None = None,
) -> CoxComparison:
    """Package a logrank z/p with the arm hazard ratio of a Cox fit and its Wald CI."""
    beta: float = fit.coefficients[0]
    se: float = float(fit.standard_errors()[0])
    q: float = float(stats.norm.ppf(1.0 - alpha / 2.0))
    return CoxComparison(
        z=z,
        p_value=p_value,
        log_hr=beta,
        se=se,
        hr=float(np.exp(beta)),
        ci_lower=float(np.exp(beta - q * se)),
        ci_upper=float(np.exp(beta + q * se)),
        converged=fit.converged,
        strata=strata,
        dropped_strata=dropped or [],
    )


def comparator_strata(data: TrialDataset, factors: list[str]) -> list[str]:
    """
    Cross the given covariates into one stratum label per subject.

    Continuous covariates are dichotomized at their median.
    """
    parts: list[list[str]] = []
    for name in factors:
        spec = data.spec(name)
        codes: np.ndarray = data.covariate_codes(name)
        if spec.kind == 'continuous':
            median: float = float(np.median(codes))
            parts.append([f'{name}>{median:g}' if c > median else f'{name}<={median:g}' for c in codes])
        else:
            parts.append([f'{name}={record.covariates[name]}' for record in data.records])
    return ['|'.join(labels) for labels in zip(*parts, strict=True)]


def run_comparators(data: TrialDataset, config: AnalysisConfig) -> ComparatorBlock:
    """
    Standard analyses next to the stratified routine.

    Each comparator runs independently; a failure is recorded in the block's
    errors instead of aborting the others.
    """
    section = config.comparators
    results: dict[str, object] = {}
    errors: dict[str, str] = {}

    def attempt(name: str, enabled: bool, compute: Callable[[], object]) -> None:
        if not enabled:
            return
        try:
            results[name] = compute()
        except (FiveStarError, ValueError, np.linalg.LinAlgError) as e:
            errors[name] = str(e)
            logger.warning('Comparator %s failed: %s', name, e)

    def unstratified() -> CoxComparison:
        test = logrank(data)
        return cox_comparison(test.z, test.p_value, cox_fit(data, ['arm']), section.alpha)

    def stratified() -> CoxComparison:
        labels: list[str] = comparator_strata(data, section.stratify_by)
        test = stratified_logrank(data, labels)
        fit: CoxFit = cox_fit(data, ['arm'], strata=labels)
        return cox_comparison(
            test.z, test.p_value, fit, section.alpha, test.strata_used, test.dropped_strata
        )

    def ph_diagnostic() -> object:
        fit: CoxFit = cox_fit(data, ['arm'])
        return gt_test(fit, data)

    attempt('logrank', section.logrank, unstratified)
    attempt('stratified', section.stratified_logrank, stratified)
    attempt(
        'maxcombo',
        section.maxcombo,
        lambda: maxcombo(
            data,
            method=section.maxcombo_method,
            seed=config.step_seed('maxcombo'),
            perm_reps=section.maxcombo_perm_reps,
        ),
    )
    attempt('rmst', section.rmst, lambda: rmst_compare(data, section.rmst_tau))
    attempt('gt', section.gt, ph_diagnostic)

    return ComparatorBlock.model_validate({**results, 'errors': errors})


def run_5star(data: TrialDataset, config: AnalysisConfig) -> AnalysisReport:
    """
    Run the five-step stratified analysis.

    Args:
        data: Validated trial data.
        config: Analysis configuration.

    Returns:
        The complete AnalysisReport (comparators included when enabled).

    Raises:
        AnalysisStepError: If a step fails; .step names it.
    """
    warnings: list[str] = []

    logger.info('Step 1: %d subjects, %d pre-specified covariates', data.n, len(data.specs))
    with _step('step1'):
        diagnostics: ValidationReport = validate(data)
        warnings.extend(diagnostics.warnings)
        blinded: BlindedDataset = blind(data)

    logger.info('Step 2: covariate filtering on blinded data')
    with _step('step2'):
        step2, _ = _filter_covariates(blinded, config)

    logger.info('Step 3: risk stratification on %s', step2.selected_covariates)
    with _step('step3'):
        tree, pool, assignment = _stratify(blinded, step2.selected_covariates, config)
        step3: Step3Report = Step3Report(
            tree=tree,
            pool_tree=pool,
            assignment=assignment,
            strata=_strata_rows(blinded, assignment),
        )

    logger.info('Step 4: unblinding and per-stratum effects for %d strata', assignment.c)
    with _step('step4'):
        if rejoin_arms(blinded, data) != data.arms:
            raise AnalysisStepError('step4', 'Arm labels do not rejoin in record order')
        step4: Step4Report = _estimate_effects(data, assignment, config)
        warnings.extend(
            f'Stratum {item.stratum} excluded: {item.reason}' for item in step4.excluded
        )
        warnings.extend(
            f'Stratum {effect.stratum} flagged: Pr(TR > 1) = {effect.pr_tr_gt_1:.3f}'
            for effect in step4.effects
            if effect.flagged
        )

    logger.info('Step 5: amalgamation over %d strata', len(step4.effects))
    with _step('step5'):
        step5, notes = _combine(step4, config)
        warnings.extend(notes)

    comparators: ComparatorBlock = run_comparators(data, config)
    warnings.extend(f'Comparator {name} failed: {error}' for name, error in comparators.errors.items())
    km_curves, hazard_curves = _plot_tables(data, assignment, config.report.hazard_grid_points)

    treated: np.ndarray = data.treated
    report: AnalysisReport = AnalysisReport(
        n=data.n,
        n_a=int(treated.sum()),
        n_b=int((~treated).sum()),
        n_events=int(data.events.sum()),
        seed=config.seed,
        covariates=data.covariate_names,
        step2=step2,
        step3=step3,
        step4=step4,
        step5=step5,
        comparators=comparators,
        km_curves=km_curves,
        hazard_curves=hazard_curves,
        warnings=warnings,
    )
    logger.info(
        'Analysis complete: c=%d, TR=%.3f (%.3f, %.3f), p=%.4g',
        assignment.c,
        step5.tr.estimate,
        step5.tr.ci_lower,
        step5.tr.ci_upper,
        step5.tr.p_value,
    )
    return report


def emit_report(
    report: AnalysisReport, output_dir: Path | str, float_format: str | None = None
) -> list[Path]:
    """
    Write report.json and the CSV tables into output_dir.

    Returns:
        Paths written, in REPORT_FILES order.

    Raises:
        OSError: If a file cannot be written.
    """
    handler: ReportFileHandler = ReportFileHandler(Path(output_dir), float_format)
    return [
        handler.write_json('report.json', report),
        handler.write_csv('strata.csv', report.strata_frame()),
        handler.write_csv('forest.csv', report.forest_frame()),
        handler.write_csv('km_curves.csv', report.km_frame()),
        handler.write_csv('cv_surface.csv', report.cv_frame()),
        handler.write_csv('hazard_curves.csv', report.hazard_frame()),
    ]


class FiveStarPipeline:
    """
    Configured runner for the stratified analysis.

    The configuration is loaded and validated once at construction, so a bad
    config fails before any data is touched, and the package logger is set up
    from its logging section.

    Attributes:
        config: The validated AnalysisConfig.
    """

    def __init__(
        self,
        config: AnalysisConfig | None = None,
        config_path: Path | str | None = None,
        configure_logging: bool = True,
    ) -> None:
        """
        Args:
            config: A ready AnalysisConfig (takes precedence over config_path).
            config_path: YAML/JSON config file; the packaged default when None.
            configure_logging: Set up the 'fivestar' logger from the config.
        """
        self.config: AnalysisConfig = config if config is not None else load_config(config_path)
        if configure_logging:
            setup_logger(config=self.config)

    def load(self, data_path: Path | str) -> TrialDataset:
        """Load a trial CSV with the configured column map and covariate specs."""
        return load_csv(data_path, data_config=self.config.data)

    def run_5star(self, data: TrialDataset) -> AnalysisReport:
        return run_5star(data, self.config)

    def run_comparators(self, data: TrialDataset) -> ComparatorBlock:
        return run_comparators(data, self.config)

    def emit_report(self, report: AnalysisReport, output_dir: Path | str | None = None) -> list[Path]:
        target: Path = Path(output_dir) if output_dir is not None else self.config.report.output_dir
        return emit_report(report, target, self.config.report.float_format)

    def run(self, data_path: Path | str, output_dir: Path | str | None = None) -> AnalysisReport:
        """Load, analyze and write the report in one call."""
        data: TrialDataset = self.load(data_path)
        report: AnalysisReport = self.run_5star(data)
        self.emit_report(report, output_dir)
        return report
