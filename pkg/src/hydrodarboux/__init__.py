"""Darboux integrability diagnostics and solvers for diagonal hydrodynamic-type systems."""

__version__ = "0.1.0"

from .expr import DomainError, Expr, ParseError, differentiate, evaluate, parse, simplify
from .system import (
    CoeffTable,
    DiagonalSystem,
    NotStrictlyHyperbolic,
    coefficient_table,
    full_report,
    load_system,
)
