"""Robust stability and performance certificates.

Four LMI families are assembled here, all in dual (transposed) form with an
outer factor ``F`` and middle matrix ``blkdiag(X, -X, P, ...)``:

* prior-only stability of the uncertain loop;
* data-enhanced stability on a lifted horizon;
* prior-only energy-gain bound ``gamma``;
* data-enhanced energy-gain bound on a lifted horizon.

Every strict inequality is imposed as ``>= t I`` with a shared margin ``t``
that the solver maximizes, and all scalars are boxed to ``[-1, 1]`` (all
families are cones, so this is only a normalization).  The performance block
``diag(I, -gamma^-2 I)`` is multiplied by a scalar ``tau > 0`` for the same
reason.
"""

import json
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from .errors import DimensionError, Infeasible, InvalidBracket
from .lfr import LfrSystem
from .lifting import AssumptionWitness, LiftedSystem
from .multipliers import MultiplierSet, lift_prior
from .problem import MARGIN, LmiProblem
from .sdp import MAX_ITER, NUMERICAL, OPTIMAL, SolverOptions, solve
from .problem import compile as compile_problem

__all__ = [
    "STRICT_TOL",
    "BOX",
    "Certificate",
    "Verification",
    "assemble_lemma1",
    "assemble_theorem3",
    "assemble_lemma4",
    "assemble_theorem8",
    "solve_problem",
    "min_gamma",
    "warm_start_from_prior",
    "verify_certificate",
    "evaluate_margin",
]

STRICT_TOL = 1e-7
NONSTRICT_TOL = 1e-9
BOX = 1.0


# ----------------------------------------------------------------- certificates


@dataclass
class Certificate:
    """Solver witness of one LMI problem.

    ``point`` maps variable names (``X``, ``P``, ``PD``, ``tau``) to their
    scalar parameters; ``margin`` is the optimal shared margin.
    """

    kind: str
    point: Dict[str, np.ndarray]
    margin: float
    gamma: Optional[float] = None
    sigma: int = 1
    h: int = 1
    stats: dict = field(default_factory=dict)

    @property
    def x_var(self) -> np.ndarray:
        return _sym_from_params(self.point["X"])

    @property
    def prior_params(self) -> np.ndarray:
        return self.point.get("P", np.zeros(0))

    @property
    def data_params(self) -> np.ndarray:
        return self.point.get("PD", np.zeros(0))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "margin": self.margin,
            "gamma": self.gamma,
            "sigma": self.sigma,
            "h": self.h,
            "point": {k: np.asarray(v, dtype=float).tolist() for k, v in sorted(self.point.items())},
            "stats": self.stats,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Certificate":
        return cls(d["kind"], {k: np.asarray(v, dtype=float) for k, v in d["point"].items()},
                   float(d["margin"]), None if d.get("gamma") is None else float(d["gamma"]),
                   int(d.get("sigma", 1)), int(d.get("h", 1)), dict(d.get("stats", {})))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _sym_from_params(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    k = int(round((np.sqrt(8 * v.size + 1) - 1) / 2))
    if k * (k + 1) // 2 != v.size:
        raise DimensionError(f"{v.size} parameters do not describe a symmetric matrix")
    out = np.zeros((k, k))
    out[np.triu_indices(k)] = v
    return out + np.triu(out, 1).T


# ----------------------------------------------------------------- assembly helpers


def _zeros(r, c):
    return np.zeros((r, c))


def _eye_cols(k, widths, j):
    """``[0 .. I_k .. 0]`` with the identity in column block ``j``."""
    return np.hstack([np.eye(k) if i == j else _zeros(k, w) for i, w in enumerate(widths)])


def _base(prob: LmiProblem, n: int, p: MultiplierSet, expect: int, what: str):
    if p.dim != expect:
        raise DimensionError(f"{what} multiplier has dim {p.dim}, expected {expect}")
    x = prob.sym("X", n)
    prob.constraint("X", n).add_congruence(x, np.eye(n))
    return x, prob.family("P", p)


def _performance(prob: LmiProblem, con, f_e, f_d, gamma: Optional[float]):
    """Add ``tau (F_e^T F_e - gamma^-2 F_d^T F_d)``, or the direct form."""
    if gamma is None:
        beta = prob.scalar("beta")
        con.add_const(f_e.T @ f_e)
        con.add_scaled(beta, -f_d.T @ f_d)
        prob.maximize(beta, fixed_margin=STRICT_TOL)
        prob.bound = None
        return
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    tau = prob.scalar("tau", nonneg=True)
    prob.constraint("tau", 1).add_scaled(tau, np.ones((1, 1)))
    con.add_scaled(tau, f_e.T @ f_e - gamma ** -2 * f_d.T @ f_d)


def _data_family(p_d: Optional[MultiplierSet]):
    if p_d is None:
        return None
    fam, _ = p_d.rescaled()
    return fam


# ----------------------------------------------------------------- the four problems


def assemble_lemma1(sys: LfrSystem, p: MultiplierSet, *, bound: Optional[float] = BOX) -> LmiProblem:
    """Prior-only robust stability: ``X > 0``, ``F(nu) > 0`` and
    ``F^T blkdiag(X, -X, P(nu)) F > 0`` with
    ``F = [I 0; -A^T -C_z^T; 0 I; -B_w^T -D_zw^T]``."""
    n, nz, nw = sys.n, sys.n_z, sys.n_w
    prob = LmiProblem(bound, "stability")
    x, pv = _base(prob, n, p, nz + nw, "prior")
    w = (n, nz)
    con = prob.constraint("main", n + nz)
    con.add_congruence(x, _eye_cols(n, w, 0))
    con.add_congruence(x, np.hstack([-sys.a.T, -sys.c_z.T]), -1.0)
    con.add_congruence(pv, np.vstack([_eye_cols(nz, w, 1), np.hstack([-sys.b_w.T, -sys.d_zw.T])]))
    return prob


def _sigma_view(lifted: LiftedSystem, witness: AssumptionWitness):
    if witness.h != lifted.h:
        raise DimensionError(f"witness is for h={witness.h}, lifting has h={lifted.h}")
    return lifted.truncate(witness.sigma)


def assemble_theorem3(lifted: LiftedSystem, witness: AssumptionWitness, p_hat: MultiplierSet,
                      p_d: Optional[MultiplierSet], *, bound: Optional[float] = BOX) -> LmiProblem:
    """Data-enhanced robust stability on the ``sigma``-step lifting.

    The outer factor gains the rows ``[0 N^T; M^T 0]`` for the data
    multiplier ``P_D``.  ``p_d=None`` drops that term (the lifted prior test).
    """
    dm = lifted.dims
    n, nz, nw, ny, h = dm["n"], dm["n_z"], dm["n_w"], dm["n_y"], lifted.h
    s = witness.sigma
    ls = _sigma_view(lifted, witness)
    prob = LmiProblem(bound, "data stability")
    x, pv = _base(prob, n, p_hat, s * (nz + nw), "lifted prior")
    w = (n, s * nz)
    con = prob.constraint("main", n + s * nz)
    con.add_congruence(x, _eye_cols(n, w, 0))
    con.add_congruence(x, np.hstack([-ls.a_h.T, -ls.c["z"].T]), -1.0)
    con.add_congruence(pv, np.vstack([_eye_cols(s * nz, w, 1),
                                      np.hstack([-ls.b["w"].T, -ls.d["zw"].T])]))
    fam = _data_family(p_d)
    if fam is not None:
        if fam.dim != h * (nz + ny):
            raise DimensionError(f"data multiplier has dim {fam.dim}, expected {h * (nz + ny)}")
        pd = prob.family("PD", fam)
        f_d = np.vstack([np.hstack([_zeros(h * nz, n), witness.n_sel.T]),
                         np.hstack([witness.m.T, _zeros(h * ny, s * nz)])])
        con.add_congruence(pd, f_d)
    return prob


def assemble_lemma4(sys: LfrSystem, p: MultiplierSet, gamma: Optional[float], *,
                    bound: Optional[float] = BOX) -> LmiProblem:
    """Prior-only energy-gain bound ``gamma`` for ``d = (n, r) -> e``.

    ``gamma=None`` gives the direct form: ``tau = 1`` and ``beta = gamma^-2``
    is maximized with the strict constraints held at a fixed small margin.
    """
    n, nz, nw, ne, nd = sys.n, sys.n_z, sys.n_w, sys.n_e, sys.n_d
    if ne == 0 or nd == 0:
        raise DimensionError("the performance test needs error and disturbance channels")
    prob = LmiProblem(bound, "performance")
    x, pv = _base(prob, n, p, nz + nw, "prior")
    w = (n, nz, ne)
    dim = n + nz + ne
    con = prob.constraint("main", dim)
    con.add_congruence(x, _eye_cols(n, w, 0))
    con.add_congruence(x, np.hstack([-sys.a.T, -sys.c_z.T, -sys.c_e.T]), -1.0)
    con.add_congruence(pv, np.vstack([_eye_cols(nz, w, 1),
                                      np.hstack([-sys.b_w.T, -sys.d_zw.T, -sys.d_ew.T])]))
    f_e = _eye_cols(ne, w, 2)
    f_d = np.hstack([-sys.b_d.T, -sys.d_zd.T, -sys.d_ed.T])
    _performance(prob, con, f_e, f_d, gamma)
    if gamma is not None:
        prob.gamma = float(gamma)
    return prob


def assemble_theorem8(lifted: LiftedSystem, witness: AssumptionWitness, p_hat: MultiplierSet,
                      p_d: Optional[MultiplierSet], gamma: Optional[float], *,
                      bound: Optional[float] = BOX) -> LmiProblem:
    """Data-enhanced energy-gain bound on the ``sigma``-step lifting.

    Needs a witness of the error-channel inclusion (``m_b``, ``m_d``).  The
    data multiplier enters through ``[0 N^T 0; M_b^T 0 M_d^T]``; the
    performance block is ``diag(I, -gamma^-2 I)`` on the lifted channels.
    """
    dm = lifted.dims
    n, nz, nw, ny, ne, h = dm["n"], dm["n_z"], dm["n_w"], dm["n_y"], dm["n_e"], lifted.h
    nd = dm["n_n"] + dm["n_r"]
    if ne == 0 or nd == 0:
        raise DimensionError("the performance test needs error and disturbance channels")
    s = witness.sigma
    ls = _sigma_view(lifted, witness)
    prob = LmiProblem(bound, "data performance")
    x, pv = _base(prob, n, p_hat, s * (nz + nw), "lifted prior")
    w = (n, s * nz, s * ne)
    con = prob.constraint("main", n + s * (nz + ne))
    b_d = np.hstack([ls.b["n"], ls.b["r"]])
    d_zd = np.hstack([ls.d["zn"], ls.d["zr"]])
    d_ed = np.hstack([ls.d["en"], ls.d["er"]])
    con.add_congruence(x, _eye_cols(n, w, 0))
    con.add_congruence(x, np.hstack([-ls.a_h.T, -ls.c["z"].T, -ls.c["e"].T]), -1.0)
    con.add_congruence(pv, np.vstack([_eye_cols(s * nz, w, 1),
                                      np.hstack([-ls.b["w"].T, -ls.d["zw"].T, -ls.d["ew"].T])]))
    fam = _data_family(p_d)
    if fam is not None:
        if not witness.has_error_channel:
            raise ValueError("the data-enhanced performance test needs the error-channel inclusion")
        if fam.dim != h * (nz + ny):
            raise DimensionError(f"data multiplier has dim {fam.dim}, expected {h * (nz + ny)}")
        pd = prob.family("PD", fam)
        f_pd = np.vstack([np.hstack([_zeros(h * nz, n), witness.n_sel.T, _zeros(h * nz, s * ne)]),
                          np.hstack([witness.m_b.T, _zeros(h * ny, s * nz), witness.m_d.T])])
        con.add_congruence(pd, f_pd)
    f_e = _eye_cols(s * ne, w, 2)
    f_d = np.hstack([-b_d.T, -d_zd.T, -d_ed.T])
    _performance(prob, con, f_e, f_d, gamma)
    if gamma is not None:
        prob.gamma = float(gamma)
    return prob


# ----------------------------------------------------------------- solving


@dataclass
class Verification:
    passed: bool
    min_eigs: Dict[str, float]
    failures: Tuple[str, ...]


def verify_certificate(cert: Certificate, problem: LmiProblem,
                       strict_tol: float = STRICT_TOL) -> Verification:
    """Re-evaluate every constraint at the witness with a fresh eigensolve.

    Strict constraints must exceed ``strict_tol / 2``; nonstrict ones (for
    example ``q >= 0`` of an ellipsoid family) must be ``>= -1e-9``.
    """
    eigs, fails = {}, []
    try:
        point = {name: cert.point[name] for name in problem.variables}
    except KeyError as exc:
        return Verification(False, {}, (f"missing variable {exc.args[0]}",))
    for c in problem.constraints:
        m = c.evaluate(point)
        lo = float(np.linalg.eigvalsh(m)[0]) if m.size else np.inf
        eigs[c.name] = lo
        if (c.strict and not lo > strict_tol / 2) or (not c.strict and lo < -NONSTRICT_TOL):
            fails.append(c.name)
    for name, var in problem.variables.items():
        if var.kind == "nonneg" and np.any(point[name] < -NONSTRICT_TOL):
            fails.append(f"{name}>=0")
    return Verification(not fails, eigs, tuple(fails))


def evaluate_margin(problem: LmiProblem, point: Dict[str, np.ndarray]) -> float:
    """Smallest eigenvalue over the strict constraints at ``point``."""
    values = {name: point[name] for name in problem.variables}
    eigs = problem.min_eigs(values)
    return min((eigs[c.name] for c in problem.constraints if c.strict), default=np.inf)


def solve_problem(problem: LmiProblem, kind: str = "stability", *, sigma: int = 1, h: int = 1,
                  opts: Optional[SolverOptions] = None, backend: str = "builtin",
                  strict_tol: float = STRICT_TOL):
    """Solve ``problem``; returns ``(certificate or None, SolveResult)``.

    A certificate is issued only for a margin above ``strict_tol`` that also
    passes :func:`verify_certificate`.  Solves that stop on ``max_iter`` or a
    numerical failure are accepted when their primal point passes the same
    re-check.
    """
    t0 = time.perf_counter()
    prog = compile_problem(problem)
    res = solve(prog, opts, backend)
    wall = time.perf_counter() - t0
    point = problem.unpack(res.x)
    margin = float(point.pop(MARGIN)[0]) if MARGIN in point else evaluate_margin(problem, point)
    stats = {"status": res.status, "iterations": res.iterations, "backend": res.backend,
             "primal_residual": res.primal_residual, "dual_residual": res.dual_residual,
             "gap": res.gap, "wall_time": wall, "cone_dims": list(prog.s), "n_vars": prog.n_vars}
    if res.status in (MAX_ITER, NUMERICAL):
        # a stalled solve may still return a usable primal point; only the
        # independent re-check below decides
        margin = evaluate_margin(problem, point)
    elif res.status != OPTIMAL:
        return None, res
    if not margin > strict_tol:
        return None, res
    cert = Certificate(kind, point, margin, getattr(problem, "gamma", None), sigma, h, stats)
    if not verify_certificate(cert, problem, strict_tol).passed:
        res.info["verification"] = "failed"
        return None, res
    cert.stats["verified"] = True
    return cert, res


def warm_start_from_prior(prior_cert: Certificate, sigma: int,
                          data_params: int = 0) -> Dict[str, np.ndarray]:
    """Point for the data-enhanced problem built from a prior-only certificate.

    ``X`` and ``tau`` carry over, the lifted prior family shares the prior
    parameters and the data parameters are zero.
    """
    if int(sigma) < 1:
        raise ValueError(f"sigma must be >= 1, got {sigma}")
    point = {k: np.array(v, dtype=float) for k, v in prior_cert.point.items()}
    point["PD"] = np.zeros(int(data_params))
    return point


def _feasible(assembler, gamma, opts, backend, cache):
    if gamma not in cache:
        prob = assembler(gamma)
        cert, res = solve_problem(prob, "performance", opts=opts, backend=backend,
                                  sigma=getattr(prob, "sigma", 1), h=getattr(prob, "h", 1))
        if cert is not None:
            cert.gamma = float(gamma)
        cache[gamma] = cert
    return cache[gamma]


def min_gamma(assembler: Callable[[Optional[float]], LmiProblem], lo: float = 1e-4, hi: float = 1e6,
              rel_tol: float = 1e-3, *, hint: Optional[float] = None, method: str = "bisection",
              opts: Optional[SolverOptions] = None, backend: str = "builtin"):
    """Smallest certified ``gamma`` up to a factor ``1 + rel_tol``.

    ``assembler(gamma)`` builds the feasibility problem; feasibility is
    monotone in ``gamma``.  Bisection runs in log space.  A ``hint`` (or
    ``method="direct"``, which obtains one from ``assembler(None)``) places
    the first two probes just around it, so a good hint ends the search
    after two solves.

    Raises
    ------
    InvalidBracket
        ``lo`` and ``hi`` are not ``0 < lo < hi``.
    Infeasible
        ``hi`` itself cannot be certified.
    """
    if not 0 < lo < hi:
        raise InvalidBracket(f"need 0 < lo < hi, got lo={lo}, hi={hi}")
    if rel_tol <= 0:
        raise InvalidBracket(f"rel_tol must be positive, got {rel_tol}")
    cache: Dict[float, Optional[Certificate]] = {}
    probes = 0
    if method == "direct" and hint is None:
        hint = _direct_hint(assembler, opts, backend)
    elif method not in ("bisection", "direct"):
        raise ValueError(f"unknown method {method!r}")

    best = None
    if hint is not None and lo < hint < hi:
        step = np.sqrt(1.0 + rel_tol)
        g_up = min(hint * step, hi)
        probes += 1
        cert = _feasible(assembler, g_up, opts, backend, cache)
        if cert is not None:
            hi, best = g_up, cert
            g_dn = max(hint / step, lo)
            probes += 1
            if _feasible(assembler, g_dn, opts, backend, cache) is None:
                lo = g_dn
            else:
                hi, best = g_dn, cache[g_dn]
        else:
            lo = g_up
    if best is None:
        probes += 1
        best = _feasible(assembler, hi, opts, backend, cache)
        if best is None:
            raise Infeasible(f"no certificate at the upper bracket gamma={hi:g}")
    while hi / lo > 1.0 + rel_tol:
        mid = float(np.sqrt(lo * hi))
        probes += 1
        cert = _feasible(assembler, mid, opts, backend, cache)
        if cert is None:
            lo = mid
        else:
            hi, best = mid, cert
    best.stats = dict(best.stats, probes=probes, bracket=[lo, hi])
    return hi, best


def _direct_hint(assembler, opts, backend) -> Optional[float]:
    prob = assembler(None)
    res = solve(compile_problem(prob), opts, backend)
    if res.status != OPTIMAL:
        return None
    beta = float(prob.unpack(res.x)["beta"][0])
    return 1.0 / np.sqrt(beta) if beta > 0 else None
