"""Affinely parametrized multiplier families.

A family is ``{E(nu) : F(nu) > 0}`` with ``E`` and ``F`` affine in the real
parameter vector ``nu``.  The defining property of a (dual) multiplier for
an uncertainty ``U`` is ``[-U^T; I]^T E(nu) [-U^T; I] <= 0`` for every
admissible ``U`` and every ``nu`` with ``F(nu) > 0``.

Families in this module:

* DG-scalings for repeated real scalars in ``[-1, 1]``;
* the prior family repeated along a lifted horizon;
* data families built from one or several measured records, with unknown
  initial state or with bounded noise.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionError, IntervalError
from .kernels import lower_block_toeplitz
from .lfr import UncertaintyStructure
from .lifting import LiftedSystem, lift
from .linalg import blkdiag, kron, max_eig
from .simulate import DataRecord

__all__ = [
    "MultiplierSet",
    "DataContext",
    "dg_scalings",
    "lift_prior",
    "data_context",
    "data_multiplier_noise_free",
    "data_multiplier_unknown_x0",
    "ellipsoid_x0_multiplier",
    "known_x0_multiplier",
    "data_multiplier_noisy",
    "noise_energy_multiplier",
    "noise_toeplitz_multiplier",
    "toeplitzify",
    "multi_record_multiplier",
    "multi_record_context",
    "check_defining_inequality",
    "sym_basis",
    "skew_basis",
]


def sym_basis(k: int) -> np.ndarray:
    """Basis ``E_ij = e_i e_j^T + e_j e_i^T`` (``E_ii = e_i e_i^T``) of ``S^k``, i <= j."""
    out = []
    for i in range(k):
        for j in range(i, k):
            e = np.zeros((k, k))
            e[i, j] = e[j, i] = 1.0
            out.append(e)
    return np.array(out).reshape(len(out), k, k)


def skew_basis(k: int) -> np.ndarray:
    """Basis ``e_i e_j^T - e_j e_i^T`` of the skew-symmetric ``k x k`` matrices, i < j."""
    out = []
    for i in range(k):
        for j in range(i + 1, k):
            e = np.zeros((k, k))
            e[i, j], e[j, i] = 1.0, -1.0
            out.append(e)
    return np.array(out).reshape(len(out), k, k)


@dataclass(frozen=True)
class MultiplierSet:
    """``E(nu) = base + sum nu_i coeffs[i]`` subject to ``F(nu) = c_base + sum nu_i
    c_coeffs[i] > 0`` (``>= 0`` when ``strict`` is false).

    A zero-size constraint map means the parameters are free.
    """

    base: np.ndarray
    coeffs: np.ndarray
    c_base: np.ndarray
    c_coeffs: np.ndarray
    strict: bool = True
    names: Tuple[str, ...] = ()
    label: str = ""

    def __post_init__(self):
        base = np.atleast_2d(np.asarray(self.base, dtype=float))
        dim = base.shape[0]
        coeffs = np.asarray(self.coeffs, dtype=float)
        if coeffs.ndim != 3:
            coeffs = coeffs.reshape(-1, dim, dim)
        c_base = np.asarray(self.c_base, dtype=float)
        m = c_base.shape[0] if c_base.ndim == 2 else 0
        c_base = c_base.reshape(m, m)
        c_coeffs = np.asarray(self.c_coeffs, dtype=float).reshape(coeffs.shape[0], m, m)
        for arr, what in ((base, "base"), (c_base, "constraint base")):
            if arr.size and np.max(np.abs(arr - arr.T)) > 1e-12 * (1 + np.max(np.abs(arr))):
                raise DimensionError(f"multiplier {what} is not symmetric")
        if coeffs.size and np.max(np.abs(coeffs - coeffs.transpose(0, 2, 1))) > 1e-12 * (1 + np.max(np.abs(coeffs))):
            raise DimensionError("multiplier coefficients are not symmetric")
        names = tuple(self.names) or tuple(f"nu{i}" for i in range(coeffs.shape[0]))
        if len(names) != coeffs.shape[0]:
            raise DimensionError("one name per parameter is required")
        for k, v in (("base", base), ("coeffs", coeffs), ("c_base", c_base), ("c_coeffs", c_coeffs)):
            v = np.array(v)
            v.setflags(write=False)
            object.__setattr__(self, k, v)
        object.__setattr__(self, "names", names)

    @property
    def dim(self) -> int:
        return self.base.shape[0]

    @property
    def n_params(self) -> int:
        return self.coeffs.shape[0]

    @property
    def constraint_dim(self) -> int:
        return self.c_base.shape[0]

    @property
    def is_cone(self) -> bool:
        """Both maps are linear, so the family is closed under positive scaling."""
        return not np.any(self.base) and not np.any(self.c_base)

    def value(self, nu) -> np.ndarray:
        nu = self._nu(nu)
        return self.base + np.tensordot(nu, self.coeffs, axes=1)

    def constraint(self, nu) -> np.ndarray:
        nu = self._nu(nu)
        return self.c_base + np.tensordot(nu, self.c_coeffs, axes=1)

    def admissible(self, nu, tol: float = 0.0) -> bool:
        if self.constraint_dim == 0:
            return True
        lo = np.linalg.eigvalsh(self.constraint(nu))[0]
        return bool(lo > tol if self.strict else lo >= -tol)

    def _nu(self, nu):
        nu = np.asarray(nu, dtype=float).ravel()
        if nu.size != self.n_params:
            raise DimensionError(f"expected {self.n_params} parameters, got {nu.size}")
        return nu

    def rescaled(self) -> Tuple["MultiplierSet", np.ndarray]:
        """Same family with every coefficient scaled to unit max-abs entry.

        Returns the new family and the factors ``f`` such that parameters
        ``nu'`` of the new family correspond to ``nu = nu' / f`` here.
        """
        f = np.array([np.max(np.abs(c)) if c.size else 0.0 for c in self.coeffs])
        f = np.where(f > 0, f, 1.0)
        coeffs = self.coeffs / f[:, None, None]
        c_coeffs = self.c_coeffs / f[:, None, None]
        return MultiplierSet(self.base, coeffs, self.c_base, c_coeffs, self.strict, self.names,
                             self.label), f

    def congruence(self, t: np.ndarray, label: str = "") -> "MultiplierSet":
        """``{t E(nu) t^T}`` with the same parameters and constraint map."""
        t = np.atleast_2d(np.asarray(t, dtype=float))
        if t.shape[1] != self.dim:
            raise DimensionError(f"congruence factor has {t.shape[1]} columns, family has dim {self.dim}")
        coeffs = np.einsum("ai,kij,bj->kab", t, self.coeffs, t, optimize=True) if self.n_params else \
            np.zeros((0, t.shape[0], t.shape[0]))
        return MultiplierSet(t @ self.base @ t.T, coeffs, self.c_base, self.c_coeffs,
                             self.strict, self.names, label or self.label)


# ----------------------------------------------------------------- prior families


def dg_scalings(u: UncertaintyStructure) -> MultiplierSet:
    """``[[D, G], [G^T, -D]]`` with ``D > 0`` and ``G`` skew, both commuting
    with ``diag(delta_j I_{r_j})``; requires every interval to be [-1, 1]."""
    if not u.is_normalized():
        raise IntervalError("DG-scalings need every uncertainty interval to be [-1, 1]")
    nz = u.size
    coeffs, c_coeffs, names = [], [], []
    off = 0
    for j, rep in enumerate(u.reps):
        for e in sym_basis(rep):
            d = np.zeros((nz, nz))
            d[off:off + rep, off:off + rep] = e
            coeffs.append(blkdiag(d, -d))
            c_coeffs.append(d)
            names.append(f"D{j}")
        for e in skew_basis(rep):
            g = np.zeros((nz, nz))
            g[off:off + rep, off:off + rep] = e
            p = np.zeros((2 * nz, 2 * nz))
            p[:nz, nz:] = g
            p[nz:, :nz] = g.T
            coeffs.append(p)
            c_coeffs.append(np.zeros((nz, nz)))
            names.append(f"G{j}")
        off += rep
    names = tuple(f"{nm}_{i}" for i, nm in enumerate(names))
    k = len(coeffs)
    return MultiplierSet(np.zeros((2 * nz, 2 * nz)), np.array(coeffs).reshape(k, 2 * nz, 2 * nz),
                         np.zeros((nz, nz)), np.array(c_coeffs).reshape(k, nz, nz), True, names, "DG")


def _lift_blocks(mat, sigma, nz):
    q, s, r = mat[:nz, :nz], mat[:nz, nz:], mat[nz:, nz:]
    eye = np.eye(sigma)
    return np.block([[kron(eye, q), kron(eye, s)], [kron(eye, s.T), kron(eye, r)]])


def lift_prior(p: MultiplierSet, sigma: int, n_z: Optional[int] = None, *,
               full: bool = False, structure: Optional[UncertaintyStructure] = None) -> MultiplierSet:
    """Repeat the prior family along ``sigma`` samples.

    ``[[Q, S], [S^T, R]]`` becomes ``[[I kron Q, I kron S], [I kron S^T, I kron R]]``,
    matching signals stacked time-major.  With ``full=True`` the DG-scalings
    of the lifted structure ``I_sigma kron Delta`` are returned instead, a
    strictly larger family (needs ``structure``).
    """
    sigma = int(sigma)
    if sigma < 1:
        raise ValueError(f"sigma must be >= 1, got {sigma}")
    if full:
        if structure is None:
            raise ValueError("full lifted DG-scalings need the uncertainty structure")
        return _lifted_dg(structure, sigma)
    nz = p.dim // 2 if n_z is None else int(n_z)
    base = _lift_blocks(p.base, sigma, nz)
    coeffs = np.array([_lift_blocks(c, sigma, nz) for c in p.coeffs]).reshape(p.n_params, *base.shape)
    return MultiplierSet(base, coeffs, p.c_base, p.c_coeffs, p.strict, p.names, f"lifted {p.label}".strip())


def _lifted_dg(u: UncertaintyStructure, sigma: int) -> MultiplierSet:
    nz = u.size
    # group the lifted channel by uncertainty block: block j repeats sigma * r_j times
    big = UncertaintyStructure(tuple((sigma * r, -1.0, 1.0) for r in u.reps))
    fam = dg_scalings(big)
    order = []
    off = np.concatenate([[0], np.cumsum(u.reps)])
    for j in range(len(u.reps)):
        for k in range(sigma):
            order.extend(k * nz + off[j] + np.arange(u.reps[j]))
    perm = np.zeros((sigma * nz, sigma * nz))
    perm[np.array(order), np.arange(sigma * nz)] = 1.0  # grouped -> time-major
    t = blkdiag(perm, perm)
    out = fam.congruence(t, "lifted full DG")
    return out


# ----------------------------------------------------------------- data families


@dataclass(frozen=True)
class DataContext:
    """Data geometry of one or more records over a lifted horizon.

    ``g_matrix`` holds ``W [y; x; r]`` per data column, where ``W`` is the
    left factor ``[[0, -C_hz, -D_hzr], [I, -C_hy, -D_hyr]]`` of the lifted
    data equation.  ``x_columns`` is ``[-C_hz; -C_hy]`` (used when the initial
    state is unknown; ``g_matrix`` then omits the state term) and
    ``noise_columns`` is ``[-D_hzn; -D_hyn]``.
    """

    lifted: LiftedSystem
    records: Tuple[DataRecord, ...]
    g_matrix: np.ndarray
    x_columns: np.ndarray
    noise_columns: np.ndarray
    x_known: bool = True
    toeplitz: bool = False

    @property
    def h(self):
        return self.lifted.h

    @property
    def dim(self):
        return self.g_matrix.shape[0]


def _data_columns(lifted: LiftedSystem, rec: DataRecord, use_x: bool):
    y = rec.y_star
    r = rec.r_star
    top = -lifted.d["zr"] @ r
    bot = y - lifted.d["yr"] @ r
    if use_x:
        top = top - lifted.c["z"] @ rec.x_star
        bot = bot - lifted.c["y"] @ rec.x_star
    return np.concatenate([top, bot])


def data_context(sys, record: DataRecord, lifted: Optional[LiftedSystem] = None) -> DataContext:
    """Build the data geometry for one record on the horizon ``record.h``."""
    record.check_dims(sys)
    lifted = lifted if lifted is not None else lift(sys, record.h)
    if lifted.h != record.h:
        raise DimensionError(f"lifting horizon {lifted.h} differs from record length {record.h}")
    known = record.x_star is not None
    g = _data_columns(lifted, record, known)[:, None]
    x_cols = -np.vstack([lifted.c["z"], lifted.c["y"]])
    n_cols = -np.vstack([lifted.d["zn"], lifted.d["yn"]])
    return DataContext(lifted, (record,), g, x_cols, n_cols, known, False)


def _gram_family(g: np.ndarray, label: str) -> MultiplierSet:
    """``{G Q G^T : Q symmetric}``, with a single free scalar when ``G`` is a column."""
    k = g.shape[1]
    basis = sym_basis(k)
    coeffs = np.einsum("ai,kij,bj->kab", g, basis, g, optimize=True)
    names = tuple(f"q{i}" for i in range(len(basis)))
    dim = g.shape[0]
    return MultiplierSet(np.zeros((dim, dim)), coeffs, np.zeros((0, 0)), np.zeros((len(basis), 0, 0)),
                         True, names, label)


def data_multiplier_noise_free(ctx: DataContext) -> MultiplierSet:
    """``{q g g^T : q real}`` for a single record, or ``{G Q G^T}`` when the
    context carries several data columns (Toeplitz or multiple records)."""
    if not ctx.x_known:
        raise ValueError("the noise-free data family needs the initial state of every record")
    return _gram_family(ctx.g_matrix, "data")


def known_x0_multiplier(x_star) -> MultiplierSet:
    """``{q [1, x^T; x, x x^T] : q real}``; feeding it to the unknown-state
    construction gives back the known-state family."""
    x = np.concatenate([[1.0], np.asarray(x_star, dtype=float).ravel()])
    dim = x.size
    return MultiplierSet(np.zeros((dim, dim)), np.outer(x, x)[None], np.zeros((0, 0)),
                         np.zeros((1, 0, 0)), True, ("q",), "known x0")


def ellipsoid_x0_multiplier(y_shape, kappa: float) -> MultiplierSet:
    """Dual multiplier ``q diag(kappa, -Y)^-1 = q diag(1/kappa, -Y^-1)``, ``q >= 0``,
    for initial states with ``x^T Y x <= kappa``."""
    y_shape = np.atleast_2d(np.asarray(y_shape, dtype=float))
    if not kappa > 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    lam = np.linalg.eigvalsh(0.5 * (y_shape + y_shape.T))
    if lam[0] <= 0:
        raise ValueError("ellipsoid shape matrix must be positive definite")
    yi = np.linalg.inv(y_shape)
    val = blkdiag(np.array([[1.0 / kappa]]), -0.5 * (yi + yi.T))
    dim = val.shape[0]
    return MultiplierSet(np.zeros((dim, dim)), val[None], np.zeros((1, 1)), np.ones((1, 1, 1)),
                         False, ("q",), "ellipsoid x0")


def data_multiplier_unknown_x0(ctx: DataContext, p_x: MultiplierSet) -> MultiplierSet:
    """``{U P_x U^T : P_x in p_x}`` with ``U = W [[y, 0], [0, I_n], [r, 0]]``."""
    n = ctx.lifted.dims["n"]
    if p_x.dim != 1 + n:
        raise DimensionError(f"initial-state family has dim {p_x.dim}, expected {1 + n}")
    if len(ctx.records) != 1 or ctx.toeplitz:
        raise ValueError("the unknown-state family is built from one plain record")
    rec = ctx.records[0]
    g0 = _data_columns(ctx.lifted, rec, use_x=False)[:, None]
    u = np.hstack([g0, ctx.x_columns])
    return p_x.congruence(u, "data, unknown x0")


def data_multiplier_noisy(ctx: DataContext, p_n: MultiplierSet) -> MultiplierSet:
    """``{U P_n U^T : P_n in p_n}`` with ``U = W_n [[y, 0], [x, 0], [0, I], [r, 0]]``.

    For a Toeplitz context the data block has ``h`` columns and ``p_n`` must
    act on the Toeplitz noise matrix (see :func:`noise_toeplitz_multiplier`).
    """
    if not ctx.x_known:
        raise ValueError("the noisy data family needs the initial state")
    k = ctx.g_matrix.shape[1]
    nn = ctx.noise_columns.shape[1]
    if p_n.dim != k + nn:
        raise DimensionError(f"noise family has dim {p_n.dim}, expected {k} + {nn}")
    u = np.hstack([ctx.g_matrix, ctx.noise_columns])
    return p_n.congruence(u, "data, noisy")


def noise_energy_multiplier(h: int, n_n: int, eps: float) -> MultiplierSet:
    """``lambda diag(1, -h eps^2 I_{h n_n})``, ``lambda >= 0``.

    With the factor ``[-n, I]^T`` the defining product is
    ``lambda (n n^T - h eps^2 I)``, which is ``<= 0`` whenever
    ``|n|^2 <= h eps^2`` for the stacked noise.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    val = blkdiag(np.eye(1), -h * eps ** 2 * np.eye(h * n_n))
    dim = val.shape[0]
    return MultiplierSet(np.zeros((dim, dim)), val[None], np.zeros((1, 1)), np.ones((1, 1, 1)),
                         False, ("lam",), "noise energy")


def noise_toeplitz_multiplier(h: int, n_n: int, eps: float) -> MultiplierSet:
    """Multiplier for the lower block-Toeplitz noise matrix under
    ``|n(k)| <= eps``.

    Column ``k`` (1-based) of the Toeplitz matrix holds ``n(0..h-k)`` in its
    last ``f_k = h - k + 1`` blocks, so its squared norm is at most
    ``f_k eps^2`` and it lives in the last ``g_k = n_n f_k`` rows.  One
    ``lambda_k >= 0`` per column weights these bounds.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    dim = h + h * n_n
    coeffs = np.zeros((h, dim, dim))
    for k in range(1, h + 1):
        f_k = h - k + 1
        g_k = n_n * f_k
        coeffs[k - 1, k - 1, k - 1] = 1.0
        if g_k:
            idx = np.arange(dim - g_k, dim)
            coeffs[k - 1, idx, idx] = -eps ** 2 * f_k
    c_coeffs = np.zeros((h, h, h))
    for k in range(h):
        c_coeffs[k, k, k] = 1.0
    return MultiplierSet(np.zeros((dim, dim)), coeffs, np.zeros((h, h)), c_coeffs, False,
                         tuple(f"lam{k}" for k in range(h)), "noise toeplitz")


def _toeplitz(stacked: np.ndarray, h: int) -> np.ndarray:
    """Lower block-Toeplitz matrix (``h p x h``) of a stacked signal."""
    p = stacked.size // h
    if p == 0:
        return np.zeros((0, h))
    return lower_block_toeplitz(stacked.reshape(h, p, 1))


def toeplitzify(ctx: DataContext) -> DataContext:
    """Replace the data vectors by their Toeplitz matrices.

    The state term uses the impulse embedding ``C_ho x = D_hox (x, 0, ..., 0)``,
    so ``g_matrix`` becomes ``W_T [T(y); T(x^); T(r)]`` with ``h`` columns.
    """
    if len(ctx.records) != 1 or ctx.toeplitz:
        raise ValueError("toeplitzify expects a plain single-record context")
    if not ctx.x_known:
        raise ValueError("the Toeplitz data family needs the initial state")
    lifted, rec = ctx.lifted, ctx.records[0]
    h = lifted.h
    n = lifted.dims["n"]
    t_y = _toeplitz(rec.y_star, h)
    t_r = _toeplitz(rec.r_star, h)
    t_x = kron(np.eye(h), rec.x_star.reshape(n, 1)) if n else np.zeros((0, h))
    top = -lifted.d_x["z"] @ t_x - lifted.d["zr"] @ t_r
    bot = t_y - lifted.d_x["y"] @ t_x - lifted.d["yr"] @ t_r
    g = np.vstack([top, bot])
    return DataContext(lifted, ctx.records, g, ctx.x_columns, ctx.noise_columns, True, True)


def multi_record_multiplier(ctxs: Sequence[DataContext]) -> MultiplierSet:
    """``{G Q G^T : Q in S^nu}`` with ``G`` the per-record data columns side by side."""
    ctxs = list(ctxs)
    if not ctxs:
        raise ValueError("need at least one record")
    h = ctxs[0].h
    for c in ctxs:
        if c.h != h:
            raise DimensionError("all records must share the horizon")
        if not c.x_known:
            raise ValueError("every record needs a known initial state")
    g = np.hstack([c.g_matrix for c in ctxs])
    return _gram_family(g, "data, multiple records")


def multi_record_context(ctxs: Sequence[DataContext]) -> DataContext:
    """Merge single-record contexts into one with several data columns."""
    ctxs = list(ctxs)
    base = ctxs[0]
    g = np.hstack([c.g_matrix for c in ctxs])
    recs = tuple(r for c in ctxs for r in c.records)
    return DataContext(base.lifted, recs, g, base.x_columns, base.noise_columns,
                       all(c.x_known for c in ctxs), False)


# ----------------------------------------------------------------- checks


def check_defining_inequality(p: MultiplierSet, nu, factor) -> float:
    """Largest eigenvalue of ``factor^T E(nu) factor``."""
    factor = np.atleast_2d(np.asarray(factor, dtype=float))
    if factor.shape[0] != p.dim:
        raise DimensionError(f"factor has {factor.shape[0]} rows, family has dim {p.dim}")
    if factor.shape[1] == 0:
        return 0.0
    return max_eig(factor.T @ p.value(nu) @ factor)
