"""Robustness certificates for uncertain discrete-time loops, sharpened with
measured input-output data.

The typical flow builds an :class:`~liftcert.lfr.LfrSystem`, checks that a
lifted horizon supports the data multipliers
(:func:`~liftcert.lifting.check_assumption`), runs a prior-only test and
then the data-enhanced one (:mod:`liftcert.lmi`).
"""

from ._accel import HAS_NUMBA
from .errors import (DimensionError, Infeasible, InputError, IntervalError, InvalidBracket,
                     LiftCertError, SymmetryError, WellPosednessError)
from .lfr import (LfrSystem, StateSpace, Uncertainty, UncertaintyStructure, close_loop,
                  normalize_intervals)
from .lifting import AssumptionWitness, LiftedSystem, check_assumption, lift
from .lmi import (Certificate, assemble_lemma1, assemble_lemma4, assemble_theorem3,
                  assemble_theorem8, min_gamma, verify_certificate, warm_start_from_prior)
from .multipliers import MultiplierSet, dg_scalings, lift_prior
from .pipeline import AnalysisOptions, data_gain, data_stability, prior_gain, prior_stability
from .sdp import ConicProgram, SolveResult, SolverOptions, solve
from .simulate import DataRecord, NoiseModel, simulate_record

__version__ = "0.1.0"

__all__ = [
    "HAS_NUMBA",
    "LiftCertError", "DimensionError", "SymmetryError", "WellPosednessError", "IntervalError",
    "Infeasible", "InvalidBracket", "InputError",
    "LfrSystem", "StateSpace", "Uncertainty", "UncertaintyStructure", "close_loop",
    "normalize_intervals",
    "LiftedSystem", "AssumptionWitness", "lift", "check_assumption",
    "MultiplierSet", "dg_scalings", "lift_prior",
    "Certificate", "assemble_lemma1", "assemble_theorem3", "assemble_lemma4", "assemble_theorem8",
    "min_gamma", "warm_start_from_prior", "verify_certificate",
    "AnalysisOptions", "prior_stability", "prior_gain", "data_stability", "data_gain",
    "ConicProgram", "SolveResult", "SolverOptions", "solve",
    "DataRecord", "NoiseModel", "simulate_record",
]
