"""Fourier scattering transform over Gabor-type uniform covering frames."""

__version__ = "0.1.0"

from .frame import (ConfigurationError, LatticeSpec, UniformCoveringFrame, build_frame,
                    build_window_profile, full_lattice_set, gradient_l1_norm,
                    truncation_set, verify_partition)
from .transform import (ScatterConfig, ScatteringTree, filter_convolve, mirror_path,
                        propagate, scatter, tree_distance, tree_norm)
from .analysis import (energy_ledger, estimate_decay, path_concentration,
                       threshold_census, translation_distance)

__all__ = [
    "ConfigurationError",
    "LatticeSpec",
    "UniformCoveringFrame",
    "build_frame",
    "build_window_profile",
    "full_lattice_set",
    "gradient_l1_norm",
    "truncation_set",
    "verify_partition",
    "ScatterConfig",
    "ScatteringTree",
    "filter_convolve",
    "mirror_path",
    "propagate",
    "scatter",
    "tree_distance",
    "tree_norm",
    "energy_ledger",
    "estimate_decay",
    "path_concentration",
    "threshold_census",
    "translation_distance",
]
