"""Dyadic representation of weakly defined Calderon-Zygmund forms, checked numerically."""

from .bcr import bcr_report, decay_scan, error_term, main_term
from .engine import LatticeEngine
from .form import WeakForm, make_form, tau, tau_one, tau_one_left
from .grid import DyadicCube, DyadicRational, ShiftSequence, sample_theta, window_for
from .kernel import dini_norm, make_kernel, make_modulus
from .rep import (averaging_check, diag_term, mc_expect, offdiag_block, representation_check, shift_form,
                  shift_sum)
from .simplefn import E_op, SimpleFunction

__version__ = "0.1.0"

__all__ = [
    "bcr_report",
    "decay_scan",
    "error_term",
    "main_term",
    "LatticeEngine",
    "WeakForm",
    "make_form",
    "tau",
    "tau_one",
    "tau_one_left",
    "DyadicCube",
    "DyadicRational",
    "ShiftSequence",
    "sample_theta",
    "window_for",
    "dini_norm",
    "make_kernel",
    "make_modulus",
    "averaging_check",
    "diag_term",
    "mc_expect",
    "offdiag_block",
    "representation_check",
    "shift_form",
    "shift_sum",
    "E_op",
    "SimpleFunction",
    "__version__",
]
