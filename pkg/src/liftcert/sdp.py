"""Dense conic programs over the nonnegative orthant and PSD cones.

Standard form (the same as cvxopt's ``conelp``)::

    minimize    c^T x
    subject to  G x + s = h,   s in K = R^l_+ x S^{n_1}_+ x ... x S^{n_p}_+

PSD slack blocks are stored with ``svec``: the lower triangle column by
column with off-diagonal entries scaled by ``sqrt(2)``, so that
``svec(A) . svec(B) = trace(A B)``.

The built-in solver is a primal-dual interior-point method on the
homogeneous self-dual embedding with Nesterov-Todd scaling and a Mehrotra
predictor-corrector.  Infeasibility and unboundedness are reported from the
certificates the embedding produces.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Protocol, Sequence

import numpy as np
import scipy.linalg

__all__ = [
    "ConicProgram",
    "SolveResult",
    "SolverOptions",
    "svec",
    "smat",
    "svec_dim",
    "solve",
    "Backend",
    "register_backend",
    "available_backends",
    "OPTIMAL",
    "INFEASIBLE",
    "UNBOUNDED",
    "MAX_ITER",
    "NUMERICAL",
]

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
MAX_ITER = "max_iter"
NUMERICAL = "numerical"

_SQRT2 = np.sqrt(2.0)


def svec_dim(n: int) -> int:
    return n * (n + 1) // 2


def _tril_index(n):
    # column-major lower triangle
    rows, cols = [], []
    for j in range(n):
        for i in range(j, n):
            rows.append(i)
            cols.append(j)
    return np.array(rows, dtype=int), np.array(cols, dtype=int)


_INDEX_CACHE: Dict[int, tuple] = {}


def _index(n):
    if n not in _INDEX_CACHE:
        r, c = _tril_index(n)
        scale = np.where(r == c, 1.0, _SQRT2)
        _INDEX_CACHE[n] = (r, c, scale)
    return _INDEX_CACHE[n]


def svec(a: np.ndarray) -> np.ndarray:
    """``svec`` of a symmetric matrix, or of a stack ``(..., n, n)``."""
    a = np.asarray(a, dtype=float)
    n = a.shape[-1]
    r, c, scale = _index(n)
    return a[..., r, c] * scale


def smat(v: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`svec` (also for stacks ``(..., n(n+1)/2)``)."""
    v = np.asarray(v, dtype=float)
    r, c, scale = _index(n)
    out = np.zeros(v.shape[:-1] + (n, n))
    vals = v / scale
    out[..., r, c] = vals
    out[..., c, r] = vals
    return out


@dataclass(frozen=True)
class ConicProgram:
    """``min c^T x`` s.t. ``G x + s = h``, ``s`` in ``R^l_+ x prod S^{n_i}_+``.

    Rows of ``g``/``h`` list the ``l`` orthant entries first, then the
    ``svec`` of every PSD block in order.
    """

    c: np.ndarray
    g: np.ndarray
    h: np.ndarray
    l: int
    s: tuple

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        g = np.asarray(self.g, dtype=float).reshape(-1, c.size)
        h = np.asarray(self.h, dtype=float).ravel()
        s = tuple(int(k) for k in self.s)
        rows = int(self.l) + sum(svec_dim(k) for k in s)
        if g.shape[0] != rows or h.size != rows:
            raise ValueError(f"cone dimension {rows} does not match g {g.shape} / h {h.shape}")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "l", int(self.l))
        object.__setattr__(self, "s", s)

    @property
    def n_vars(self):
        return self.c.size

    @property
    def degree(self):
        return self.l + sum(self.s)

    def blocks(self, x):
        """Slack ``h - G x`` split into the orthant part and the PSD matrices."""
        sl = self.h - self.g @ np.asarray(x, dtype=float)
        out, off = [], self.l
        for k in self.s:
            d = svec_dim(k)
            out.append(smat(sl[off:off + d], k))
            off += d
        return sl[:self.l], out

    def min_slack_eigs(self, x):
        """Smallest eigenvalue per cone (orthant counted as one cone)."""
        lp, mats = self.blocks(x)
        vals = [float(np.min(lp)) if lp.size else np.inf]
        vals += [float(np.linalg.eigvalsh(m)[0]) for m in mats]
        return vals


@dataclass(frozen=True)
class SolverOptions:
    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    max_iter: int = 200
    step: float = 0.99
    verbose: bool = False


@dataclass
class SolveResult:
    status: str
    x: np.ndarray
    z: np.ndarray
    objective: float
    iterations: int
    primal_residual: float
    dual_residual: float
    gap: float
    backend: str = "builtin"
    info: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.status == OPTIMAL


# ----------------------------------------------------------------- built-in IPM


class _Cones:
    """Cone bookkeeping for the dense algorithm (PSD blocks kept as matrices)."""

    def __init__(self, prog: ConicProgram):
        self.l = prog.l
        self.s = prog.s
        self.offsets = []
        off = prog.l
        for k in prog.s:
            self.offsets.append((off, off + svec_dim(k)))
            off += svec_dim(k)
        self.g_l = prog.g[:prog.l]
        self.h_l = prog.h[:prog.l]
        self.g_s = [smat(prog.g[a:b].T, k) for (a, b), k in zip(self.offsets, prog.s)]
        self.h_s = [smat(prog.h[a:b], k) for (a, b), k in zip(self.offsets, prog.s)]

    # vectors in the cone space are pairs (lp array, list of matrices)
    def identity(self):
        return np.ones(self.l), [np.eye(k) for k in self.s]

    def g_apply(self, x):
        return self.g_l @ x, [np.tensordot(x, g, axes=1) for g in self.g_s]

    def g_adjoint(self, zl, zs):
        out = self.g_l.T @ zl
        for g, z in zip(self.g_s, zs):
            out = out + np.tensordot(g, z, axes=([1, 2], [0, 1]))
        return out

    @staticmethod
    def inner(a, b):
        return float(a[0] @ b[0] + sum(np.vdot(x, y) for x, y in zip(a[1], b[1])))

    @staticmethod
    def norm(a):
        return float(np.sqrt(a[0] @ a[0] + sum(np.vdot(x, x) for x in a[1])))

    @staticmethod
    def add(a, b, alpha=1.0):
        return a[0] + alpha * b[0], [x + alpha * y for x, y in zip(a[1], b[1])]

    @staticmethod
    def scale(a, alpha):
        return alpha * a[0], [alpha * x for x in a[1]]


class _Scaling:
    """Nesterov-Todd scaling ``W`` with ``W z = W^-T s = lambda``."""

    def __init__(self, s, z):
        s_l, s_s = s
        z_l, z_s = z
        self.w_l = np.sqrt(s_l / z_l)
        self.lam_l = np.sqrt(s_l * z_l)
        self.r, self.rinv, self.lam_s = [], [], []
        for sm, zm in zip(s_s, z_s):
            ls = np.linalg.cholesky(sm)
            lz = np.linalg.cholesky(zm)
            u, lam, vt = np.linalg.svd(lz.T @ ls)
            r = ls @ vt.T / np.sqrt(lam)
            rinv = (np.sqrt(lam)[:, None] * vt) @ scipy.linalg.solve_triangular(ls, np.eye(len(lam)), lower=True)
            self.r.append(r)
            self.rinv.append(rinv)
            self.lam_s.append(lam)

    @property
    def lam(self):
        return self.lam_l, [np.diag(l) for l in self.lam_s]

    # W^-T u: orthant u / w, PSD R^-1 u R^-T
    def inv_t(self, u):
        return u[0] / self.w_l, [ri @ m @ ri.T for ri, m in zip(self.rinv, u[1])]

    # W^T u: orthant w u, PSD R u R^T
    def fwd_t(self, u):
        return u[0] * self.w_l, [r @ m @ r.T for r, m in zip(self.r, u[1])]

    # W^-1 u: orthant u / w, PSD R^-T u R^-1
    def inv(self, u):
        return u[0] / self.w_l, [ri.T @ m @ ri for ri, m in zip(self.rinv, u[1])]

    def lam_solve(self, d):
        """``x`` with ``lambda o x = d``."""
        out_s = []
        for lam, m in zip(self.lam_s, d[1]):
            out_s.append(2.0 * m / (lam[:, None] + lam[None, :]))
        return d[0] / self.lam_l, out_s

    def lam_sq(self):
        return self.lam_l ** 2, [np.diag(l ** 2) for l in self.lam_s]


def _jordan(a, b):
    return a[0] * b[0], [0.5 * (x @ y + y @ x) for x, y in zip(a[1], b[1])]


def _max_step(lam_l, lam_s, d):
    """Largest ``alpha`` with ``lambda + alpha d`` in the cone (inf if unbounded)."""
    alpha = np.inf
    if lam_l.size:
        neg = d[0] < 0
        if np.any(neg):
            alpha = min(alpha, float(np.min(-lam_l[neg] / d[0][neg])))
    for lam, m in zip(lam_s, d[1]):
        isq = 1.0 / np.sqrt(lam)
        ev = np.linalg.eigvalsh(isq[:, None] * m * isq[None, :])[0]
        if ev < 0:
            alpha = min(alpha, -1.0 / ev)
    return alpha


def _builtin_solve(prog: ConicProgram, opts: SolverOptions) -> SolveResult:
    cones = _Cones(prog)
    c, nv = prog.c, prog.n_vars
    h = (cones.h_l, cones.h_s)
    nu = prog.degree
    x = np.zeros(nv)
    s = cones.identity()
    z = cones.identity()
    tau, kappa = 1.0, 1.0
    h_norm = max(1.0, cones.norm(h))
    c_norm = max(1.0, float(np.linalg.norm(c)))
    res = dict(pres=np.inf, dres=np.inf, gap=np.inf)
    status = MAX_ITER
    it = 0

    def finish(st, it, **extra):
        zl, zs = z
        zvec = np.concatenate([zl] + [svec(m) for m in zs]) if (zl.size or zs) else np.zeros(0)
        if st == OPTIMAL:
            xs, zz = x / tau, zvec / tau
        elif st == INFEASIBLE:
            xs, zz = x / tau, zvec / max(-cones.inner(h, z), 1e-300)
        elif st == UNBOUNDED:
            xs, zz = x / max(-float(c @ x), 1e-300), zvec / tau
        else:
            xs, zz = x / tau, zvec / tau
        obj = float(c @ xs)
        return SolveResult(st, xs, zz, obj, it, res["pres"], res["dres"], res["gap"], "builtin", extra)

    for it in range(1, opts.max_iter + 1):
        gx = cones.g_apply(x)
        r_x = cones.g_adjoint(*z) + c * tau
        r_z = cones.add(cones.add(s, gx), h, -tau)
        htz = cones.inner(h, z)
        ctx = float(c @ x)
        r_t = kappa + ctx + htz
        sz = cones.inner(s, z)
        mu = (sz + tau * kappa) / (nu + 1)

        pres = cones.norm(r_z) / tau / h_norm
        dres = float(np.linalg.norm(r_x)) / tau / c_norm
        pcost, dcost = ctx / tau, -htz / tau
        gap = sz / tau ** 2
        res.update(pres=pres, dres=dres, gap=gap)
        if opts.verbose:
            print(f"{it:3d} pcost {pcost: .6e} dcost {dcost: .6e} gap {gap:.1e} "
                  f"pres {pres:.1e} dres {dres:.1e} k/t {kappa / tau:.1e}")
        if pres <= opts.feas_tol and dres <= opts.feas_tol and \
                gap <= opts.gap_tol * (1.0 + min(abs(pcost), abs(dcost))):
            return finish(OPTIMAL, it)
        if htz < 0:
            pinf = float(np.linalg.norm(cones.g_adjoint(*z))) / c_norm / (-htz)
            if pinf <= opts.feas_tol:
                return finish(INFEASIBLE, it)
        if ctx < 0:
            dinf = cones.norm(cones.add(gx, s)) / h_norm / (-ctx)
            if dinf <= opts.feas_tol:
                return finish(UNBOUNDED, it)

        try:
            w = _Scaling(s, z)
        except np.linalg.LinAlgError:
            return finish(NUMERICAL, it, reason="scaling factorization failed")

        # scaled constraint columns and the normal-equation matrix
        gt_l = cones.g_l / w.w_l[:, None]
        gt_s = [np.matmul(np.matmul(ri, g), ri.T) for ri, g in zip(w.rinv, cones.g_s)]
        hmat = gt_l.T @ gt_l
        for g in gt_s:
            flat = g.reshape(nv, -1)
            hmat += flat @ flat.T
        try:
            chol = scipy.linalg.cho_factor(hmat, lower=True)
        except np.linalg.LinAlgError:
            reg = 1e-12 * max(1.0, np.max(np.abs(np.diag(hmat))))
            try:
                chol = scipy.linalg.cho_factor(hmat + reg * np.eye(nv), lower=True)
            except np.linalg.LinAlgError:
                return finish(NUMERICAL, it, reason="normal equations singular")

        def gt_apply(v):
            return gt_l @ v, [np.tensordot(v, g, axes=1) for g in gt_s]

        def gt_adjoint(u):
            out = gt_l.T @ u[0]
            for g, m in zip(gt_s, u[1]):
                out = out + np.tensordot(g, m, axes=([1, 2], [0, 1]))
            return out

        def kkt(b_x, b_zs):
            """Solve [0 G^T; G -W^T W] [dx; dz] = [b_x; b_z] given W^-T b_z; returns dx and W dz."""
            rhs = b_x + gt_adjoint(b_zs)
            dx = scipy.linalg.cho_solve(chol, rhs)
            # one step of iterative refinement against the unfactored matrix
            dx = dx + scipy.linalg.cho_solve(chol, rhs - hmat @ dx)
            dzs = cones.add(gt_apply(dx), b_zs, -1.0)
            return dx, dzs

        h_sc = w.inv_t(h)
        x1, z1s = kkt(-c, h_sc)
        denom = float(c @ x1) + cones.inner(h_sc, z1s) - kappa / tau
        lam = w.lam
        lam_sq = w.lam_sq()

        def direction(d_x, d_z, d_t, d_s, d_k):
            q = w.lam_solve(d_s)
            b_zs = cones.add(w.inv_t(d_z), q, -1.0)
            x0, z0s = kkt(d_x, b_zs)
            dtau = (d_t - d_k / tau - float(c @ x0) - cones.inner(h_sc, z0s)) / denom
            dx = x0 + dtau * x1
            dzs = cones.add(z0s, z1s, dtau)
            dss = cones.add(q, dzs, -1.0)
            dkap = (d_k - kappa * dtau) / tau
            return dx, dzs, dss, dtau, dkap

        def step_len(dzs, dss, dtau, dkap):
            a = min(_max_step(w.lam_l, w.lam_s, dzs), _max_step(w.lam_l, w.lam_s, dss))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkap < 0:
                a = min(a, -kappa / dkap)
            return a

        neg_rz = cones.scale(r_z, -1.0)
        aff = direction(-r_x, neg_rz, -r_t, cones.scale(lam_sq, -1.0), -tau * kappa)
        a_aff = min(1.0, step_len(*aff[1:]))
        sigma = (1.0 - a_aff) ** 3
        ds_corr = cones.add(cones.scale(lam_sq, -1.0), _jordan(aff[2], aff[1]), -1.0)
        ds_corr = cones.add(ds_corr, cones.identity(), sigma * mu)
        dk_corr = -tau * kappa - aff[3] * aff[4] + sigma * mu
        rho = 1.0 - sigma
        dx, dzs, dss, dtau, dkap = direction(-rho * r_x, cones.scale(r_z, -rho), -rho * r_t,
                                             ds_corr, dk_corr)
        alpha = min(1.0, opts.step * step_len(dzs, dss, dtau, dkap))
        if not np.isfinite(alpha) or alpha <= 1e-14:
            return finish(NUMERICAL, it, reason="step length collapsed")

        x = x + alpha * dx
        s = w.fwd_t(cones.add(lam, dss, alpha))
        z = w.inv(cones.add(lam, dzs, alpha))
        s = (s[0], [0.5 * (m + m.T) for m in s[1]])
        z = (z[0], [0.5 * (m + m.T) for m in z[1]])
        tau += alpha * dtau
        kappa += alpha * dkap
    return finish(status, it)


# ----------------------------------------------------------------- backends


class Backend(Protocol):
    """Anything that maps a :class:`ConicProgram` to a :class:`SolveResult`."""

    def __call__(self, prog: ConicProgram, opts: SolverOptions) -> SolveResult: ...


_BACKENDS: Dict[str, Callable] = {"builtin": _builtin_solve}


def register_backend(name: str, fn: Callable):
    _BACKENDS[name] = fn


def available_backends() -> List[str]:
    names = ["builtin"]
    try:
        import cvxopt  # noqa: F401

        names.append("cvxopt")
    except ImportError:
        pass
    return names + [n for n in _BACKENDS if n not in ("builtin", "cvxopt")]


def _cvxopt_solve(prog: ConicProgram, opts: SolverOptions) -> SolveResult:
    import cvxopt
    from cvxopt import solvers

    # cvxopt stores PSD blocks as full column-major matrices
    rows_g, rows_h = [prog.g[:prog.l]], [prog.h[:prog.l]]
    off = prog.l
    for k in prog.s:
        d = svec_dim(k)
        gm = smat(prog.g[off:off + d].T, k)  # (nv, k, k)
        rows_g.append(gm.transpose(0, 2, 1).reshape(prog.n_vars, k * k).T)
        rows_h.append(smat(prog.h[off:off + d], k).T.reshape(-1))
        off += d
    g = np.vstack(rows_g) if rows_g else np.zeros((0, prog.n_vars))
    h = np.concatenate(rows_h)
    dims = {"l": prog.l, "q": [], "s": list(prog.s)}
    old = dict(solvers.options)
    solvers.options.update(show_progress=opts.verbose, abstol=opts.gap_tol, reltol=opts.gap_tol,
                           feastol=opts.feas_tol, maxiters=opts.max_iter)
    try:
        sol = solvers.conelp(cvxopt.matrix(prog.c), cvxopt.matrix(g), cvxopt.matrix(h), dims)
    except (ValueError, ArithmeticError) as exc:
        return SolveResult(NUMERICAL, np.zeros(prog.n_vars), np.zeros(0), np.nan, 0,
                           np.inf, np.inf, np.inf, "cvxopt", {"reason": str(exc)})
    finally:
        solvers.options.clear()
        solvers.options.update(old)
    status = {"optimal": OPTIMAL, "primal infeasible": INFEASIBLE,
              "dual infeasible": UNBOUNDED}.get(sol["status"], NUMERICAL)
    x = np.array(sol["x"]).ravel() if sol["x"] is not None else np.zeros(prog.n_vars)
    ztmp = np.array(sol["z"]).ravel() if sol["z"] is not None else np.zeros(0)
    return SolveResult(status, x, ztmp, float(prog.c @ x), int(sol.get("iterations", 0)),
                       float(sol.get("primal infeasibility") or 0.0),
                       float(sol.get("dual infeasibility") or 0.0),
                       float(sol.get("gap") or 0.0), "cvxopt", {})


register_backend("cvxopt", _cvxopt_solve)


def solve(prog: ConicProgram, opts: Optional[SolverOptions] = None, backend: str = "builtin") -> SolveResult:
    """Solve with the named backend (``"builtin"`` needs no extra packages)."""
    opts = opts or SolverOptions()
    try:
        fn = _BACKENDS[backend]
    except KeyError:
        raise ValueError(f"unknown backend {backend!r}; known: {sorted(_BACKENDS)}") from None
    return fn(prog, opts)
