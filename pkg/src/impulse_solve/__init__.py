"""Solvers for sediment-replenishment impulse control with Poisson-timed observations."""

from .exact1d import Exact1DSolution, solve_quintet, solve_threshold
from .fp import DensityField, solve_stationary
from .hjb import ValueField, value_iteration
from .jumpgrid import GridSpec, JumpGrid, build_jump_grid
from .model import ModelParams, application_params, reduced_1d_params
from .policy import ThresholdProfile

__version__ = "0.1.0"
