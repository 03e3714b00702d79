"""Numerics for weighted Fock spaces over radial weights."""

__version__ = "0.1.0"

from .weights import Weight, check_hypotheses, make_weight, parse_weight, phi_inverse
from .moments import MomentTable, build_moment_table, load_table, save_table
from .kernel import eval_kernel_scaled, kernel_table, log_derivatives

__all__ = [
    "Weight",
    "make_weight",
    "parse_weight",
    "phi_inverse",
    "check_hypotheses",
    "MomentTable",
    "build_moment_table",
    "save_table",
    "load_table",
    "eval_kernel_scaled",
    "kernel_table",
    "log_derivatives",
]
