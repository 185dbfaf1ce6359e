"""Finite-volume simulator and diagnostics for signal-dependent motility chemotaxis."""

from __future__ import annotations

from .errors import ConfigError, DomainError, PreconditionError, SolverError
from .grid import Grid, build_grid, integrate, laplacian_neumann, lp_norm
from .motility import (
    Motility,
    Regime,
    Verdict,
    check_assumptions,
    classify_regime,
    exponential,
    parse_motility,
    power,
    power_log,
    stretched_exponential,
    tabulated,
)
from .elliptic import HelmholtzSolver, helmholtz_solve
from .stepper import SimConfig, SimState, detect_blowup, run

__version__ = "0.1.0"
