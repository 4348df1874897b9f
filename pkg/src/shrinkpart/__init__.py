"""Shrinkage partition distributions: anchored random partitions with
item-wise shrinkage, their oracles, and MCMC for dependent partitions in a
clustered regression model."""

__version__ = "0.1.0"

from .baselines import Ewens, EwensPitman, FixedPartition, JensenLiu, UniformPartition
from .bell import bell, extended_bell, log_extended_bell
from .exceptions import CapacityError, ConfigError, DomainError
from .partitions import (adjusted_rand_index, binder_distance, canonicalize,
                         enumerate_partitions, vi_distance)
from .sp import SpParams, sp_log_pmf, sp_marginal_log_pmf, sp_sample, sp_sample_many

__all__ = [
    "CapacityError", "ConfigError", "DomainError", "Ewens", "EwensPitman", "FixedPartition",
    "JensenLiu", "SpParams", "UniformPartition", "adjusted_rand_index", "bell",
    "binder_distance", "canonicalize", "enumerate_partitions", "extended_bell",
    "log_extended_bell", "sp_log_pmf", "sp_marginal_log_pmf", "sp_sample", "sp_sample_many",
    "vi_distance",
]
