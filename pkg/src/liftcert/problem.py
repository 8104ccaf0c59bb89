"""Structured LMI problems and their translation to conic form.

An :class:`LmiProblem` holds matrix-valued decision variables (symmetric,
skew, scalar or a whole multiplier family) and affine symmetric constraints

    C_j(x) = const_j + sum_i x_i C_ji  >=  t I   (strict)   or   >= 0.

The shared margin ``t`` is maximized by default; a strict constraint is
accepted as satisfied when ``t`` is positive.  ``compile`` maps everything to
a :class:`~liftcert.sdp.ConicProgram` over one flat scalar vector.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .errors import DimensionError
from .multipliers import MultiplierSet, skew_basis, sym_basis
from .sdp import ConicProgram, SolveResult, SolverOptions, solve, svec

__all__ = ["Variable", "Constraint", "LmiProblem", "compile", "MARGIN"]

MARGIN = "margin"
KINDS = ("sym", "skew", "scalar", "nonneg", "family")


@dataclass(frozen=True)
class Variable:
    """Matrix variable ``V(x) = offset + sum_i x_i basis[i]`` over ``n`` scalars."""

    name: str
    kind: str
    basis: np.ndarray
    offset: np.ndarray
    family: Optional[MultiplierSet] = None

    @property
    def n(self) -> int:
        return self.basis.shape[0]

    @property
    def size(self) -> int:
        return self.basis.shape[1]

    def value(self, params) -> np.ndarray:
        params = np.asarray(params, dtype=float).ravel()
        if params.size != self.n:
            raise DimensionError(f"variable {self.name} has {self.n} scalars, got {params.size}")
        return self.offset + np.tensordot(params, self.basis, axes=1)


@dataclass
class Constraint:
    """Affine symmetric matrix expression; see :meth:`LmiProblem.constraint`."""

    name: str
    dim: int
    strict: bool
    const: np.ndarray
    coeffs: Dict[str, np.ndarray] = field(default_factory=dict)

    def _acc(self, var: Variable, stack: np.ndarray):
        if var.name in self.coeffs:
            self.coeffs[var.name] = self.coeffs[var.name] + stack
        else:
            self.coeffs[var.name] = stack

    def add_const(self, m) -> "Constraint":
        m = np.asarray(m, dtype=float)
        self.const = self.const + 0.5 * (m + m.T)
        return self

    def add_term(self, var: Variable, left, right=None, scale: float = 1.0,
                 symmetrize: bool = False) -> "Constraint":
        """Add ``scale * L V R`` (plus its transpose when ``symmetrize``).

        ``right`` defaults to ``left^T``, giving the congruence ``L V L^T``.
        """
        left = np.atleast_2d(np.asarray(left, dtype=float))
        right = left.T if right is None else np.atleast_2d(np.asarray(right, dtype=float))
        if left.shape != (self.dim, var.size) or right.shape != (var.size, self.dim):
            raise DimensionError(
                f"term on {var.name} in {self.name}: factors {left.shape} and {right.shape} "
                f"do not fit a {var.size}x{var.size} variable in a {self.dim}x{self.dim} constraint")
        stack = scale * np.einsum("ai,kij,jb->kab", left, var.basis, right, optimize=True)
        off = scale * left @ var.offset @ right
        if symmetrize:
            stack = stack + stack.transpose(0, 2, 1)
            off = off + off.T
        self._acc(var, stack)
        self.const = self.const + off
        return self

    def add_congruence(self, var: Variable, factor, scale: float = 1.0) -> "Constraint":
        """Add ``scale * F^T V F``."""
        factor = np.atleast_2d(np.asarray(factor, dtype=float))
        return self.add_term(var, factor.T, factor, scale)

    def add_scaled(self, var: Variable, matrix) -> "Constraint":
        """Add ``x * matrix`` for a scalar variable ``x``."""
        if var.size != 1:
            raise DimensionError(f"{var.name} is not a scalar variable")
        matrix = np.asarray(matrix, dtype=float)
        if matrix.shape != (self.dim, self.dim):
            raise DimensionError(f"{self.name}: matrix {matrix.shape} for a {self.dim}x{self.dim} constraint")
        matrix = 0.5 * (matrix + matrix.T)
        self._acc(var, var.basis[:, :1, :1] * matrix[None])
        self.const = self.const + var.offset[0, 0] * matrix
        return self

    def evaluate(self, values: Dict[str, np.ndarray]) -> np.ndarray:
        out = self.const.copy()
        for name, stack in self.coeffs.items():
            out += np.tensordot(values[name], stack, axes=1)
        return 0.5 * (out + out.T)


class LmiProblem:
    """Container of variables and LMI constraints.

    Parameters
    ----------
    bound : float, optional
        If given, every scalar of every variable is boxed to ``[-bound, bound]``.
        Homogeneous problems need this (or any other normalization) to keep
        the margin finite.
    """

    def __init__(self, bound: Optional[float] = None, name: str = ""):
        self.name = name
        self.bound = bound
        self.variables: Dict[str, Variable] = {}
        self.constraints: List[Constraint] = []
        self.objective: Optional[tuple] = None
        self.fixed_margin: Optional[float] = None

    # -- variables
    def _add_var(self, var: Variable) -> Variable:
        if var.name in self.variables or var.name == MARGIN:
            raise ValueError(f"duplicate variable name {var.name!r}")
        self.variables[var.name] = var
        return var

    def sym(self, name: str, k: int) -> Variable:
        return self._add_var(Variable(name, "sym", sym_basis(k), np.zeros((k, k))))

    def skew(self, name: str, k: int) -> Variable:
        return self._add_var(Variable(name, "skew", skew_basis(k), np.zeros((k, k))))

    def scalar(self, name: str, nonneg: bool = False) -> Variable:
        return self._add_var(Variable(name, "nonneg" if nonneg else "scalar",
                                      np.ones((1, 1, 1)), np.zeros((1, 1))))

    def family(self, name: str, mset: MultiplierSet) -> Variable:
        """Parameters of a multiplier family; its constraint map is added here."""
        var = self._add_var(Variable(name, "family", mset.coeffs, mset.base, mset))
        if mset.constraint_dim:
            con = self.constraint(f"{name}:admissible", mset.constraint_dim, strict=mset.strict)
            con.add_const(mset.c_base)
            con._acc(var, np.array(mset.c_coeffs))
        return var

    # -- constraints
    def constraint(self, name: str, dim: int, strict: bool = True, const=None) -> Constraint:
        c = np.zeros((dim, dim)) if const is None else np.asarray(const, dtype=float)
        if c.shape != (dim, dim):
            raise DimensionError(f"constant of {name} is {c.shape}, expected {(dim, dim)}")
        con = Constraint(name, dim, strict, 0.5 * (c + c.T))
        self.constraints.append(con)
        return con

    def minimize(self, var: Variable, fixed_margin: float):
        """Minimize a scalar variable with strict constraints held at ``>= fixed_margin I``."""
        self._objective(var, 1.0, fixed_margin)

    def maximize(self, var: Variable, fixed_margin: float):
        self._objective(var, -1.0, fixed_margin)

    def _objective(self, var, sign, fixed_margin):
        if var.size != 1:
            raise DimensionError("objective variable must be scalar")
        self.objective = (var.name, sign)
        self.fixed_margin = float(fixed_margin)

    # -- layout
    def layout(self) -> Dict[str, slice]:
        out, off = {}, 0
        for name, var in self.variables.items():
            out[name] = slice(off, off + var.n)
            off += var.n
        if self.fixed_margin is None:
            out[MARGIN] = slice(off, off + 1)
        return out

    @property
    def n_scalars(self) -> int:
        return sum(v.n for v in self.variables.values()) + (self.fixed_margin is None)

    def unpack(self, x) -> Dict[str, np.ndarray]:
        x = np.asarray(x, dtype=float).ravel()
        return {name: x[sl].copy() for name, sl in self.layout().items()}

    def evaluate(self, point: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
        """Constraint matrices at ``point`` without the margin shift."""
        return {c.name: c.evaluate(point) for c in self.constraints}

    def min_eigs(self, point: Dict[str, np.ndarray]) -> Dict[str, float]:
        vals = {}
        for name, mat in self.evaluate(point).items():
            vals[name] = float(np.linalg.eigvalsh(mat)[0]) if mat.size else np.inf
        return vals

    def strict_names(self):
        return [c.name for c in self.constraints if c.strict]

    def solve(self, opts: Optional[SolverOptions] = None, backend: str = "builtin"):
        prog = compile(self)
        res = solve(prog, opts, backend)
        return res, self.unpack(res.x)


def compile(p: LmiProblem) -> ConicProgram:
    """Flatten ``p`` into ``min c^T x`` s.t. ``G x + s = h``, ``s`` in the cone."""
    lay = p.layout()
    nv = p.n_scalars
    c = np.zeros(nv)
    if p.fixed_margin is None:
        c[lay[MARGIN]] = -1.0
    else:
        name, sign = p.objective
        c[lay[name]] = sign

    lp_g, lp_h = [], []
    for name, var in p.variables.items():
        sl = lay[name]
        if var.kind == "nonneg":
            row = np.zeros(nv)
            row[sl] = -1.0
            lp_g.append(row)
            lp_h.append(0.0)
        if p.bound is not None:
            for i in range(sl.start, sl.stop):
                for sign in (1.0, -1.0):
                    row = np.zeros(nv)
                    row[i] = sign
                    lp_g.append(row)
                    lp_h.append(float(p.bound))

    blocks_g, blocks_h, dims = [], [], []
    for con in p.constraints:
        if con.dim == 0:
            continue
        d = con.dim * (con.dim + 1) // 2
        g = np.zeros((d, nv))
        for name, stack in con.coeffs.items():
            g[:, lay[name]] = -svec(stack).T
        h = svec(con.const)
        if con.strict:
            if p.fixed_margin is None:
                g[:, lay[MARGIN].start] = svec(np.eye(con.dim))
            else:
                h = h - p.fixed_margin * svec(np.eye(con.dim))
        blocks_g.append(g)
        blocks_h.append(h)
        dims.append(con.dim)

    g_all = np.vstack(lp_g + blocks_g) if (lp_g or blocks_g) else np.zeros((0, nv))
    h_all = np.concatenate([np.array(lp_h)] + blocks_h)
    return ConicProgram(c, g_all, h_all, len(lp_g), tuple(dims))
