"""End-to-end certification runs: prior-only test, then the data-enhanced one.

The functions here glue the building blocks together the way an analyst
would: precondition the LFR, check the kernel inclusion on the lifted
horizon, build the prior and data multipliers, warm-start from the
prior-only certificate and search for the smallest certified gain.
"""

import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import Infeasible, InputError
from .lfr import LfrSystem, Preconditioner, UncertaintyStructure, precondition
from .lifting import AssumptionWitness, check_assumption, lift
from .lmi import (Certificate, assemble_lemma1, assemble_lemma4, assemble_theorem3,
                  assemble_theorem8, evaluate_margin, min_gamma, solve_problem,
                  warm_start_from_prior, STRICT_TOL)
from .multipliers import (MultiplierSet, data_context, data_multiplier_noise_free,
                          data_multiplier_noisy, data_multiplier_unknown_x0,
                          ellipsoid_x0_multiplier, dg_scalings, lift_prior, multi_record_context,
                          multi_record_multiplier, noise_energy_multiplier,
                          noise_toeplitz_multiplier, toeplitzify)
from .sdp import SolverOptions
from .simulate import DataRecord, split_record

__all__ = ["AnalysisOptions", "GainResult", "StabilityResult", "prepare", "prior_stability",
           "data_stability", "prior_gain", "data_gain", "data_multiplier"]


@dataclass(frozen=True)
class AnalysisOptions:
    """Knobs of a data-enhanced run.

    ``toeplitz`` uses the Toeplitz data family (per-sample noise bounds need
    it); ``unknown_x0`` replaces the known initial state by the ellipsoid
    ``x^T Y x <= kappa``; ``split_records`` chops each record into pieces of
    that many samples before building a multi-record family.
    """

    sigma: Optional[int] = None
    toeplitz: bool = True
    multi_record: bool = False
    split_records: Optional[int] = None
    unknown_x0: bool = False
    x0_shape: Optional[np.ndarray] = None
    x0_kappa: float = 1.0
    gamma_lo: float = 1e-4
    gamma_hi: float = 1e6
    rel_tol: float = 1e-3
    tol_kernel: float = 1e-8
    full_lifted_prior: bool = False
    method: str = "direct"
    precondition: bool = True
    backend: str = "builtin"
    solver: SolverOptions = field(default_factory=SolverOptions)


@dataclass
class StabilityResult:
    certified: bool
    margin: float
    certificate: Optional[Certificate]
    wall_time: float
    sigma: int = 1
    h: int = 1


@dataclass
class GainResult:
    """Certified gain in the units of the original system.

    The certificate lives in the preconditioned coordinates: its ``gamma``
    equals ``gamma / error_scale``.
    """

    gamma: float
    certificate: Optional[Certificate]
    wall_time: float
    sigma: int = 1
    h: int = 1
    witness_residual: Optional[float] = None
    notes: List[str] = field(default_factory=list)
    error_scale: float = 1.0

    @property
    def certified(self):
        return self.certificate is not None and np.isfinite(self.gamma)


def prepare(sys: LfrSystem, unc: UncertaintyStructure, records: Sequence[DataRecord] = (),
            enabled: bool = True):
    """Precondition the system and map the records' initial states along.

    Returns ``(system, records, preconditioner)``; with ``enabled=False``
    everything is passed through with an identity preconditioner.
    """
    if not enabled:
        n = sys.n
        return sys, list(records), Preconditioner(np.eye(n), np.eye(n), np.ones(sys.n_w), 1.0)
    sys_p, pc = precondition(sys, unc)
    out = []
    for rec in records:
        x = None if rec.x_star is None else pc.state_to_new(rec.x_star)
        out.append(replace(rec, x_star=x))
    return sys_p, out, pc


def _prior(unc):
    return dg_scalings(unc)


def prior_stability(sys: LfrSystem, unc: UncertaintyStructure, opts: AnalysisOptions = AnalysisOptions()):
    t0 = time.perf_counter()
    sys, _, _ = prepare(sys, unc, (), opts.precondition)
    cert, res = solve_problem(assemble_lemma1(sys, _prior(unc)), "stability", opts=opts.solver,
                              backend=opts.backend)
    margin = cert.margin if cert else float(-res.objective) if np.isfinite(res.objective) else -np.inf
    return StabilityResult(cert is not None, margin, cert, time.perf_counter() - t0)


def prior_gain(sys: LfrSystem, unc: UncertaintyStructure, opts: AnalysisOptions = AnalysisOptions()):
    t0 = time.perf_counter()
    sys, _, pc = prepare(sys, unc, (), opts.precondition)
    k = pc.error_scale
    p = _prior(unc)
    try:
        g, cert = min_gamma(lambda gm: assemble_lemma4(sys, p, gm), opts.gamma_lo / k, opts.gamma_hi / k,
                            opts.rel_tol, method=opts.method, opts=opts.solver, backend=opts.backend)
    except Infeasible:
        return GainResult(np.inf, None, time.perf_counter() - t0, notes=["prior test infeasible"],
                          error_scale=k)
    return GainResult(g * k, cert, time.perf_counter() - t0, error_scale=k)


def _records_for(records, opts):
    recs = list(records)
    if opts.split_records:
        pieces = []
        for r in recs:
            pieces.extend(split_record(r, int(opts.split_records),
                                       states=None if r.x_star is None or r.h == opts.split_records
                                       else _piece_states(r, opts.split_records)))
        recs = pieces
    return recs


def _piece_states(rec, length):
    # interior initial states are unknown to the analyst unless the record is split at 0 only
    raise InputError("splitting needs the state at every split point; use records with known states")


def data_multiplier(sys: LfrSystem, records: Sequence[DataRecord], opts: AnalysisOptions,
                    lifted=None) -> MultiplierSet:
    """Data family chosen by ``opts`` for ``records`` (all of the same length)."""
    records = list(records)
    if not records:
        raise InputError("no data records")
    h = records[0].h
    if any(r.h != h for r in records):
        raise InputError("all records must have the same length")
    lifted = lifted if lifted is not None else lift(sys, h)
    noise = records[0].noise_model
    if len(records) > 1 or opts.multi_record:
        ctxs = [data_context(sys, r, lifted) for r in records]
        if noise is not None:
            raise InputError("noisy data with several records is not supported")
        return multi_record_multiplier(ctxs)
    rec = records[0]
    ctx = data_context(sys, rec, lifted)
    if opts.unknown_x0 or rec.x_star is None:
        y = np.eye(sys.n) if opts.x0_shape is None else np.asarray(opts.x0_shape, dtype=float)
        if noise is not None:
            raise InputError("noisy data with an unknown initial state is not supported")
        return data_multiplier_unknown_x0(ctx, ellipsoid_x0_multiplier(y, opts.x0_kappa))
    if noise is None:
        return data_multiplier_noise_free(toeplitzify(ctx) if opts.toeplitz else ctx)
    if noise.kind == "per_sample_norm":
        return data_multiplier_noisy(toeplitzify(ctx), noise_toeplitz_multiplier(h, sys.n_n, noise.eps))
    return data_multiplier_noisy(ctx, noise_energy_multiplier(h, sys.n_n, noise.eps))


def _witness(sys, h, need_e, opts, lifted):
    w = check_assumption(sys, h, need_e, opts.tol_kernel, sigma=opts.sigma, lifted=lifted)
    if w is None:
        raise InputError(f"kernel inclusion fails for every sigma at h={h}")
    return w


def _lifted_prior(unc, sigma, opts):
    p = _prior(unc)
    return lift_prior(p, sigma, full=opts.full_lifted_prior, structure=unc)


def data_stability(sys: LfrSystem, unc: UncertaintyStructure, records: Sequence[DataRecord],
                   opts: AnalysisOptions = AnalysisOptions()) -> StabilityResult:
    t0 = time.perf_counter()
    sys, records, _ = prepare(sys, unc, records, opts.precondition)
    h = records[0].h
    lifted = lift(sys, h)
    w = _witness(sys, h, False, opts, lifted)
    p_d = data_multiplier(sys, _records_for(records, opts), opts, lifted)
    prob = assemble_theorem3(lifted, w, _lifted_prior(unc, w.sigma, opts), p_d)
    cert, res = solve_problem(prob, "stability", sigma=w.sigma, h=h, opts=opts.solver, backend=opts.backend)
    margin = cert.margin if cert else float(-res.objective)
    return StabilityResult(cert is not None, margin, cert, time.perf_counter() - t0, w.sigma, h)


def data_gain(sys: LfrSystem, unc: UncertaintyStructure, records: Sequence[DataRecord],
              opts: AnalysisOptions = AnalysisOptions(), prior: Optional[GainResult] = None) -> GainResult:
    """Smallest certified gain using the data; ``prior`` narrows the bracket.

    When a prior-only certificate is given, its lifted image (same ``X``,
    ``P`` and ``tau``, zero data parameters) is checked first; if it is
    feasible at the prior gain, that gain is a valid upper bracket.
    """
    t0 = time.perf_counter()
    sys, records, pc = prepare(sys, unc, records, opts.precondition)
    k = pc.error_scale
    records = _records_for(records, opts)
    h = records[0].h
    lifted = lift(sys, h)
    w = _witness(sys, h, True, opts, lifted)
    p_hat = _lifted_prior(unc, w.sigma, opts)
    p_d = data_multiplier(sys, records, opts, lifted)
    notes = []

    def assembler(gm):
        prob = assemble_theorem8(lifted, w, p_hat, p_d, gm)
        prob.sigma, prob.h = w.sigma, h
        return prob

    lo, hi = opts.gamma_lo / k, opts.gamma_hi / k
    if prior is not None and prior.certified and not opts.full_lifted_prior:
        if abs(prior.error_scale - k) > 1e-12 * k:
            raise ValueError("prior result was computed with a different preconditioning")
        g0 = prior.gamma / k
        start = warm_start_from_prior(prior.certificate, w.sigma, p_d.n_params)
        m = evaluate_margin(assembler(g0), start)
        notes.append(f"warm start margin at prior gamma: {m:.3e}")
        if m > STRICT_TOL:
            hi = g0 * (1.0 + opts.rel_tol)
    try:
        g, cert = min_gamma(assembler, lo, hi, opts.rel_tol, method=opts.method,
                            opts=opts.solver, backend=opts.backend)
    except Infeasible:
        if hi == opts.gamma_hi / k:
            return GainResult(np.inf, None, time.perf_counter() - t0, w.sigma, h, w.residual,
                              notes + ["data-enhanced test infeasible"], k)
        g, cert = min_gamma(assembler, lo, opts.gamma_hi / k, opts.rel_tol, method=opts.method,
                            opts=opts.solver, backend=opts.backend)
    cert.sigma, cert.h = w.sigma, h
    return GainResult(g * k, cert, time.perf_counter() - t0, w.sigma, h, w.residual, notes, k)
