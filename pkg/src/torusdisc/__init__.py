"""Spatial discretizations of torus maps, their invariant measures, and
rates of injectivity of discretized linear maps."""

from ._backend import BACKEND
from .errors import BudgetExceeded, CapacityError
from .grid import DiscretizedMap, GridSpec, discretize, grid_project, project_scalar
from .linear_rates import (
    LatticeBasis, MatrixSequence, RateEstimate, build_M, build_M_tilde, compose_discretized,
    decay_experiment, hat_apply, mean_rate_mc, preimage_search, random_sl_sequence,
    rate_brute_force,
)
from .measures import DiscreteMeasure, dyadic_distance, lebesgue, pushforward, to_histogram
from .orbits import (
    GridAnalysis, OrbitResult, analyze_full_grid, floyd_orbit, global_measure, orbit_measure,
    recurrence_degree,
)
from .raster import RasterSpec, colorize, rasterize
from .torus_maps import TorusMapExpr, builtin, eval_map, load_map

__version__ = "0.1.0"
