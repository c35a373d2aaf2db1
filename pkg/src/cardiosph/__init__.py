"""Total-Lagrangian SPH for cardiac electrophysiology and electromechanics."""
from .errors import (CardioSPHError, ConfigError, DecompositionError, InvertedElementError, ModelDomainError,
                     NumericalFailure, SingularMatrixError, SingularMomentError, STLParseError)
from .kernels import SmoothingKernel
from .particles import NeighborList, ParticleSet, build_neighbor_lists, compute_correction_matrices

__version__ = "0.1.0"
