"""Stationary measures of randomly perturbed maps and their zero-noise limits."""

from .config import ExperimentConfig, parse_config
from .domain import DomainDescriptor
from .ergodic import (DegenerateSetReport, DominationReport, LyapunovEstimate, basin_fraction,
                      degenerate_sets, domination_check, entropy_formula_rhs, lyapunov_spectrum)
from .errors import (BoundaryAmbiguousError, CatalogError, ConfigError, ConstructionError,
                     ConvergenceError, DiscretizationError, DomainError, KernelError, MetricError,
                     NumericalError, UnsupportedMapError, ZeroNoiseError)
from .grid import Grid, GridMeasure
from .maps import CATALOG, MapSystem, SplittingHint, build_catalog_map, eval_map, jacobian
from .noise import NoiseKernel, RandomOrbit, check_nd1, make_kernel, random_orbit
from .sweep import SweepReport, run_zero_noise_sweep
from .transfer import (UlamOperator, build_ulam, empirical_measure, exact_ulam_1d,
                       measure_distance, stationary_measure)

__all__ = [
    "BoundaryAmbiguousError", "CATALOG", "CatalogError", "ConfigError", "ConstructionError",
    "ConvergenceError", "DegenerateSetReport", "DiscretizationError", "DomainDescriptor",
    "DomainError", "DominationReport", "ExperimentConfig", "Grid", "GridMeasure", "KernelError",
    "LyapunovEstimate", "MapSystem", "MetricError", "NoiseKernel", "NumericalError",
    "RandomOrbit", "SplittingHint", "SweepReport", "UlamOperator", "UnsupportedMapError",
    "ZeroNoiseError", "basin_fraction", "build_catalog_map", "build_ulam", "check_nd1",
    "degenerate_sets", "domination_check", "empirical_measure", "entropy_formula_rhs",
    "eval_map", "exact_ulam_1d", "jacobian", "lyapunov_spectrum", "make_kernel",
    "measure_distance", "parse_config", "random_orbit", "run_zero_noise_sweep",
    "stationary_measure",
]
