# fivestar/__init__.py

from .aftavg import aft_fit, model_average, stratum_summary
from .amalgam import amalgamate, zmax_p, zmax_quantile
from .coxnet import cox_fit, cv_select, enet_path, gt_test
from .models import CovariateSpec, TrialDataset
from .nonparam import km, logrank, maxcombo, rmst_compare, stratified_logrank, weighted_logrank
from .pipeline import FiveStarPipeline, emit_report, run_5star, run_comparators
from .simlab import gen_trial, run_scenario, summarize
from .strata import ctree_grow, order_strata, pool_strata
from .survdata import blind, load_csv, validate

__all__: list[str] = [
    # pipeline.py
    'FiveStarPipeline',
    'aft_fit',
    'amalgamate',
    'blind',
    'cox_fit',
    'ctree_grow',
    'cv_select',
    'emit_report',
    'enet_path',
    'gen_trial',
    'gt_test',
    'km',
    'load_csv',
    'logrank',
    'maxcombo',
    'model_average',
    'order_strata',
    'pool_strata',
    'rmst_compare',
    'run_5star',
    'run_comparators',
    'run_scenario',
    'stratified_logrank',
    'stratum_summary',
    'summarize',
    'validate',
    'weighted_logrank',
    'zmax_p',
    'zmax_quantile',
    # models.py
    'CovariateSpec',
    'TrialDataset',
]
