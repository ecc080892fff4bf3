"""Thermal symmetry breaking of fermions with bond-dependent non-reciprocal hopping."""

from .errors import ConfigError, SpectralError
from .model import BC, ModelParams, SpinConfig, build_hopping, ising_energy, make_domain_wall_pair, uniform_config

__version__ = "0.1.0"

__all__ = [
    "BC",
    "ConfigError",
    "ModelParams",
    "SpectralError",
    "SpinConfig",
    "build_hopping",
    "ising_energy",
    "make_domain_wall_pair",
    "uniform_config",
    "__version__",
]
