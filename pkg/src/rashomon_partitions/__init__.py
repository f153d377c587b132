"""Exact enumeration of Rashomon partition sets over factorial feature spaces."""

from .analysis import (approximation_error_bound, cate, conditional_mean_effects, effect_binning,
                       empirical_sup_cdf_error, mean_effect_gap, posterior_masses, rps_summary)
from .crossprofile import PartialResultError, pool_adjacent_profiles
from .estimator import RashomonPartitionRegressor
from .hasse import (FeatureSpace, Partition, PartitionMatrix, check_global_partition,
                    check_profile_partition, count_pools_inclusion_exclusion, pools_from_sigma)
from .io import RunConfig, ingest_csv, load_config, read_artifact, write_artifact
from .loss import Dataset, EmptyPoolError, LossConfig, OutcomeModel, max_pools, q_value
from .rashomon import RashomonSet, enumerate_rps, reference_objective
from .search import brute_force_profile, enumerate_profile

__version__ = "0.1.0"

__all__ = [
    "Dataset", "EmptyPoolError", "FeatureSpace", "LossConfig", "OutcomeModel", "PartialResultError",
    "Partition", "PartitionMatrix", "RashomonPartitionRegressor", "RashomonSet", "RunConfig",
    "approximation_error_bound", "brute_force_profile", "cate", "check_global_partition",
    "check_profile_partition", "conditional_mean_effects", "count_pools_inclusion_exclusion",
    "effect_binning", "empirical_sup_cdf_error", "enumerate_profile", "enumerate_rps", "ingest_csv",
    "load_config", "max_pools", "mean_effect_gap", "pool_adjacent_profiles", "pools_from_sigma",
    "posterior_masses", "q_value", "read_artifact", "reference_objective", "rps_summary", "write_artifact",
]
