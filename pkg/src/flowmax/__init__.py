"""Monte Carlo laboratory for extremes of diagonal flows on lattice spaces."""

from .config import ExperimentConfig, load_config, parse_config, serialize_config
from .engine import (
    SparseSchedule,
    build_schedule,
    check_growth_conditions,
    ensemble_run,
    ensemble_samples,
    iid_oracle_run,
    marginal_samples,
    normalizing_level,
    oracle_samples,
    run_trajectory,
)
from .lattice import LatticeFrame, delta_observable, gauss_reduce, lll_reduce, shortest_vector
from .laws import GumbelLaw, gumbel_cdf, iid_exact_kth_cdf, kth_target_cdf, siegel_constant
from .reporting import ReportBundle, emit_report, execute_experiment, write_csv, write_report
from .sampling import sample_haar_sl2
from .stats import dkw_epsilon, empirical_cdf, ks_distance, tail_fit

__version__ = "0.1.0"
