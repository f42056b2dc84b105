from __future__ import absolute_import

from loadlab.analytics import HouseholdLedger
from loadlab.analytics import TrendSeries
from loadlab.analytics import analyze
from loadlab.assign import label_full_dataset
from loadlab.cluster import BranchAndBound
from loadlab.cluster import ClusterModel
from loadlab.cluster import k_sweep
from loadlab.cluster import solve_exact
from loadlab.cluster import solve_pam
from loadlab.config import load_config
from loadlab.dtw import DistanceMatrix
from loadlab.dtw import distance_matrix
from loadlab.dtw import dtw_distance
from loadlab.exceptions import LoadlabException
from loadlab.ingest import integrate_hourly
from loadlab.pipeline import run_pipeline
from loadlab.profiles import DailyProfile
from loadlab.sampling import StratificationPlan
from loadlab.sampling import two_stage_sample
from loadlab.synth import ARCHETYPES
from loadlab.synth import generate_fleet

__author__ = 'loadlab developers'
__email__ = 'loadlab@users.noreply.github.com'
__version__ = '0.1.0'

__all__ = (
    'ARCHETYPES',
    'BranchAndBound',
    'ClusterModel',
    'DailyProfile',
    'DistanceMatrix',
    'HouseholdLedger',
    'LoadlabException',
    'StratificationPlan',
    'TrendSeries',
    'analyze',
    'distance_matrix',
    'dtw_distance',
    'generate_fleet',
    'integrate_hourly',
    'k_sweep',
    'label_full_dataset',
    'load_config',
    'run_pipeline',
    'solve_exact',
    'solve_pam',
    'two_stage_sample',
)
