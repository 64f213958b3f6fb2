# fivestar/result_models/__init__.py
"""
Result models produced by the analysis modules.

One module per result family; everything is a frozen pydantic model so
results can be serialized to the report JSON and parsed back unchanged.
"""

from fivestar.result_models.amalgam import AmalgamResult
from fivestar.result_models.cox import (
    CoxFit,
    CvCell,
    CvSelection,
    ElasticNetFit,
    GtTestResult,
)
from fivestar.result_models.data_report import CovariateSummary, ValidationReport
from fivestar.result_models.effects import (
    AftFit,
    ExcludedStratum,
    HrBlock,
    StratumEffect,
)
from fivestar.result_models.report import (
    AnalysisReport,
    ComparatorBlock,
    CoxComparison,
    CurvePoint,
    HazardPoint,
    Step2Report,
    Step3Report,
    Step4Report,
    Step5Report,
    StratumRow,
)
from fivestar.result_models.simulation import (
    RecoveryMetrics,
    ReplicateOutcome,
    ReplicateSteps,
    ScenarioSpec,
    SimReport,
    SimResult,
    SimSummary,
    TrueEffects,
)
from fivestar.result_models.survival import (
    MaxComboResult,
    RmstResult,
    StepFunction,
    StratifiedLogrankResult,
    WeightedLogrankResult,
)
from fivestar.result_models.tree import (
    RiskTree,
    SplitRule,
    StratumAssignment,
    TreeNode,
)

__all__: list[str] = [
    'AftFit',
    'AmalgamResult',
    'AnalysisReport',
    'ComparatorBlock',
    'CovariateSummary',
    'CoxComparison',
    'CoxFit',
    'CurvePoint',
    'CvCell',
    'CvSelection',
    'ElasticNetFit',
    'ExcludedStratum',
    'GtTestResult',
    'HazardPoint',
    'HrBlock',
    'MaxComboResult',
    'RecoveryMetrics',
    'ReplicateOutcome',
    'ReplicateSteps',
    'RiskTree',
    'RmstResult',
    'ScenarioSpec',
    'SimReport',
    'SimResult',
    'SimSummary',
    'SplitRule',
    'Step2Report',
    'Step3Report',
    'Step4Report',
    'Step5Report',
    'StepFunction',
    'StratifiedLogrankResult',
    'StratumAssignment',
    'StratumEffect',
    'StratumRow',
    'TreeNode',
    'TrueEffects',
    'ValidationReport',
    'WeightedLogrankResult',
]
