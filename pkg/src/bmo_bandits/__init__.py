"""Continuum-armed bandits with BMO (bounded mean oscillation) rewards."""
from .cube_stats import AlgoConfig, IndexParams, compute_psi
from .dyadic import DyadicCube
from .envs import builtin
from .kernels import backend

__all__ = ["AlgoConfig", "IndexParams", "compute_psi", "DyadicCube", "builtin", "backend"]
__version__ = "0.1.0"
