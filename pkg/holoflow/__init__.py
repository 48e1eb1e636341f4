"""Separatrices of holomorphic flows x' = F(x) on the complex plane."""
from .config import DEFAULTS, RunConfig, Window
from .equilibria import Equilibrium, EquilibriumClass, find_equilibria
from .errors import HoloflowError
from .field_expr import FieldAst, derivative, evaluate, parse
from .integrator import Fate, FateKind, OrbitTrace, find_crossing, integrate, trace_orbit
from .separatrix import (ConfigurationReport, analyze, assemble_components, compute_basin,
                         extract_boundary, trace_and_classify, verify_theorems)
from .transit import contour_integral_reciprocal, residue_period, transit_time_clock

__version__ = "0.1.0"
