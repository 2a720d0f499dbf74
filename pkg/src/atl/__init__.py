"""Arrival-time laboratory for mean-convex mean curvature flow."""
from .errors import (AtlError, ConfigError, ContractError, DegenerateFieldError,
                     InsufficientSamplingError, NumericalInstabilityError, OutOfDomainError,
                     SamplingError, StencilError)
from .grid import GridSpec, Mask, ScalarField
from .levelset import ArrivalResult, SolverOptions, solve_arrival
from .oracles import AnalyticArrival, Dumbbell, Ellipsoid, Sphere, Torus

__version__ = "0.1.0"
