"""Douglas-Rachford splitting for phase retrieval and blind ptychography.

Modules
-------
grids     complex grid primitives and NPY I/O
forward   scan schemes, measurement operators, simulated data, connectivity
prox      losses, proximal maps and relaxed reflectors
solvers   AAR / Gaussian-DRS / Poisson-DRS / RAAR / APR / ADMM iterations
spectral  linearization spectra, optimal relaxation, predicted rates
blind     alternating minimization with DRS inner loops
metrics   ambiguity-aware relative errors and residuals
datasets  phantoms, complex image pairs and random probes
cli       experiment runner
"""

from . import blind, datasets, forward, grids, metrics, prox, solvers, spectral
from .errors import (CapacityError, ConfigurationError, ConvergenceError, DimensionError,
                     DRSError, EvaluationError, NumericalFailure, SingularityError,
                     UndefinedMetricError)
from .forward import MeasurementOp, ScanScheme, make_scan, measure
from .solvers import SolverConfig, run

__version__ = "0.1.0"
