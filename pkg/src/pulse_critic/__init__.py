"""Short-pulse data, radial evolution and characteristic geometry for the quasilinear
wave equation ``-(1 + (d_t phi)^p) d_t^2 phi + Laplacian(phi) = 0``."""

from .errors import (ConfigError, DegenerateJacobian, FitDomainError, FoliationDegenerate, HistoryGap,
                     HyperbolicityLoss, InvalidSupport, MixedSweepError, NotSmoothError,
                     NumericalBreakdown, PulseCriticError, ResolutionError, RootSolveFailure)
from .profiles import DataParams, PulseProfile, bump_profile, build_initial_data, check_outgoing_constraint, solve_phi1
from .solver import BLOWUP, GLOBAL, INCONCLUSIVE, RunOutcome, SolverConfig, rhs, run, step
from .state import FieldState, RadialGrid

__version__ = "0.1.0"
