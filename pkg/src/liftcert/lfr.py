"""Uncertain linear fractional representations in discrete time.

The interconnection is

    x(k+1) = A x + B_w w + B_n n + B_r r
    z(k)   = C_z x + D_zw w + D_zn n + D_zr r
    e(k)   = C_e x + D_ew w + D_en n + D_er r
    y(k)   = C_y x + D_yw w + D_yn n + D_yr r,      w = Delta z,

with a constant block-diagonal uncertainty ``Delta``.  A noise-free model
simply has ``n_n = n_e = 0``.
"""

from dataclasses import dataclass, field, fields, replace
from typing import NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from .errors import DimensionError, IntervalError, WellPosednessError
from .linalg import expm

__all__ = [
    "UncertaintyStructure",
    "Uncertainty",
    "LfrSystem",
    "StateSpace",
    "ClosedLoop",
    "delta_matrix",
    "close_loop",
    "normalize_intervals",
    "connect_controller",
    "zoh_discretize",
    "discretize_lfr",
    "controllable_part",
    "Preconditioner",
    "precondition",
    "satellite_lfr",
    "WELL_POSED_RCOND",
]

WELL_POSED_RCOND = 1e-12


@dataclass(frozen=True)
class UncertaintyStructure:
    """Repeated real scalar blocks ``delta_j I_{rep_j}`` with ``delta_j`` in
    ``[lower_j, upper_j]``."""

    blocks: Tuple[Tuple[int, float, float], ...]

    def __post_init__(self):
        clean = []
        for blk in self.blocks:
            rep, lo, hi = blk
            rep = int(rep)
            if rep < 1:
                raise IntervalError(f"block repetition must be >= 1, got {rep}")
            if not lo <= hi:
                raise IntervalError(f"empty interval [{lo}, {hi}]")
            clean.append((rep, float(lo), float(hi)))
        object.__setattr__(self, "blocks", tuple(clean))

    @property
    def size(self) -> int:
        return sum(b[0] for b in self.blocks)

    @property
    def reps(self):
        return np.array([b[0] for b in self.blocks], dtype=int)

    @property
    def lower(self):
        return np.array([b[1] for b in self.blocks])

    @property
    def upper(self):
        return np.array([b[2] for b in self.blocks])

    @property
    def centers(self):
        return 0.5 * (self.lower + self.upper)

    @property
    def radii(self):
        return 0.5 * (self.upper - self.lower)

    def is_normalized(self, tol=1e-12) -> bool:
        return bool(np.all(np.abs(self.lower + 1) <= tol) and np.all(np.abs(self.upper - 1) <= tol))

    def expand(self, values) -> np.ndarray:
        """Diagonal of ``diag(values_j I_{rep_j})``."""
        values = np.asarray(values, dtype=float)
        if values.shape != (len(self.blocks),):
            raise DimensionError(f"expected {len(self.blocks)} values, got shape {values.shape}")
        return np.repeat(values, self.reps)

    def matrix(self, values) -> np.ndarray:
        return np.diag(self.expand(values))

    def normalized(self) -> "UncertaintyStructure":
        return UncertaintyStructure(tuple((r, -1.0, 1.0) for r, _, _ in self.blocks))

    def grid(self, per_block: int):
        """All points of a uniform tensor grid over the interval box.

        A single point per block sits at the interval center.
        """
        axes = [np.linspace(lo, hi, per_block) if hi > lo and per_block > 1 else np.array([0.5 * (lo + hi)])
                for _, lo, hi in self.blocks]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def sample(self, rng, count: int):
        return self.lower + (self.upper - self.lower) * rng.random((count, len(self.blocks)))


@dataclass(frozen=True)
class Uncertainty:
    """A value for each block of an :class:`UncertaintyStructure`."""

    structure: UncertaintyStructure
    values: Tuple[float, ...]
    checked: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        vals = tuple(float(v) for v in np.ravel(self.values))
        if len(vals) != len(self.structure.blocks):
            raise DimensionError(
                f"{len(vals)} values for {len(self.structure.blocks)} uncertainty blocks")
        object.__setattr__(self, "values", vals)
        if self.checked:
            v = np.array(vals)
            slack = 1e-12 * (1.0 + np.abs(v))
            if np.any(v < self.structure.lower - slack) or np.any(v > self.structure.upper + slack):
                raise IntervalError(f"values {vals} outside the uncertainty box")

    @classmethod
    def raw(cls, structure, values):
        """Build without the interval check (for sweeps outside the box)."""
        return cls(structure, tuple(np.ravel(values)), checked=False)

    @property
    def matrix(self) -> np.ndarray:
        return self.structure.matrix(self.values)


DeltaLike = Union[Uncertainty, np.ndarray, float]


def delta_matrix(delta: DeltaLike) -> np.ndarray:
    if isinstance(delta, Uncertainty):
        return delta.matrix
    return np.atleast_2d(np.asarray(delta, dtype=float))


_BLOCKS = ("a", "b_w", "b_n", "b_r", "c_z", "c_e", "c_y",
           "d_zw", "d_zn", "d_zr", "d_ew", "d_en", "d_er", "d_yw", "d_yn", "d_yr")


def _as2d(x, shape):
    if x is None:
        return np.zeros(shape)
    x = np.asarray(x, dtype=float)
    if x.ndim < 2:
        x = x.reshape(shape) if x.size == shape[0] * shape[1] else np.atleast_2d(x)
    return x


@dataclass(frozen=True)
class LfrSystem:
    """Describing matrices of the uncertain interconnection."""

    a: np.ndarray
    b_w: np.ndarray
    b_n: np.ndarray
    b_r: np.ndarray
    c_z: np.ndarray
    c_e: np.ndarray
    c_y: np.ndarray
    d_zw: np.ndarray
    d_zn: np.ndarray
    d_zr: np.ndarray
    d_ew: np.ndarray
    d_en: np.ndarray
    d_er: np.ndarray
    d_yw: np.ndarray
    d_yn: np.ndarray
    d_yr: np.ndarray

    def __post_init__(self):
        for name in _BLOCKS:
            val = np.array(getattr(self, name), dtype=float)
            if val.ndim != 2:
                raise DimensionError(f"block {name} must be 2-D, got shape {val.shape}")
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        n = self.a.shape[0]
        n_w, n_n, n_r = self.b_w.shape[1], self.b_n.shape[1], self.b_r.shape[1]
        n_z, n_e, n_y = self.c_z.shape[0], self.c_e.shape[0], self.c_y.shape[0]
        expected = {
            "a": (n, n), "b_w": (n, n_w), "b_n": (n, n_n), "b_r": (n, n_r),
            "c_z": (n_z, n), "c_e": (n_e, n), "c_y": (n_y, n),
            "d_zw": (n_z, n_w), "d_zn": (n_z, n_n), "d_zr": (n_z, n_r),
            "d_ew": (n_e, n_w), "d_en": (n_e, n_n), "d_er": (n_e, n_r),
            "d_yw": (n_y, n_w), "d_yn": (n_y, n_n), "d_yr": (n_y, n_r),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise DimensionError(
                    f"block {name} has shape {getattr(self, name).shape}, expected {shape}")

    @classmethod
    def build(cls, a, b_w, c_z, d_zw=None, *, b_n=None, b_r=None, c_e=None, c_y=None,
              d_zn=None, d_zr=None, d_ew=None, d_en=None, d_er=None,
              d_yw=None, d_yn=None, d_yr=None, n_n=None, n_r=None, n_e=None, n_y=None):
        """Construct from the blocks that are given; missing blocks are zero.

        Channel widths that cannot be inferred from a supplied block default
        to zero.
        """
        a = np.atleast_2d(np.asarray(a, dtype=float))
        n = a.shape[0]
        b_w = _as2d(b_w, (n, 0))
        c_z = _as2d(c_z, (0, n))
        n_w, n_z = b_w.shape[1], c_z.shape[0]

        def width(given, *cands):
            if given is not None:
                return int(given)
            for c, axis in cands:
                if c is not None:
                    return np.atleast_2d(np.asarray(c)).shape[axis]
            return 0

        n_n = width(n_n, (b_n, 1), (d_zn, 1), (d_en, 1), (d_yn, 1))
        n_r = width(n_r, (b_r, 1), (d_zr, 1), (d_er, 1), (d_yr, 1))
        n_e = width(n_e, (c_e, 0), (d_ew, 0), (d_en, 0), (d_er, 0))
        n_y = width(n_y, (c_y, 0), (d_yw, 0), (d_yn, 0), (d_yr, 0))
        return cls(
            a=a, b_w=b_w, b_n=_as2d(b_n, (n, n_n)), b_r=_as2d(b_r, (n, n_r)),
            c_z=c_z, c_e=_as2d(c_e, (n_e, n)), c_y=_as2d(c_y, (n_y, n)),
            d_zw=_as2d(d_zw, (n_z, n_w)), d_zn=_as2d(d_zn, (n_z, n_n)), d_zr=_as2d(d_zr, (n_z, n_r)),
            d_ew=_as2d(d_ew, (n_e, n_w)), d_en=_as2d(d_en, (n_e, n_n)), d_er=_as2d(d_er, (n_e, n_r)),
            d_yw=_as2d(d_yw, (n_y, n_w)), d_yn=_as2d(d_yn, (n_y, n_n)), d_yr=_as2d(d_yr, (n_y, n_r)),
        )

    # dimensions --------------------------------------------------------
    @property
    def n(self):
        return self.a.shape[0]

    @property
    def n_w(self):
        return self.b_w.shape[1]

    @property
    def n_z(self):
        return self.c_z.shape[0]

    @property
    def n_n(self):
        return self.b_n.shape[1]

    @property
    def n_r(self):
        return self.b_r.shape[1]

    @property
    def n_e(self):
        return self.c_e.shape[0]

    @property
    def n_y(self):
        return self.c_y.shape[0]

    @property
    def n_d(self):
        return self.n_n + self.n_r

    @property
    def dims(self):
        return dict(n=self.n, n_w=self.n_w, n_z=self.n_z, n_n=self.n_n,
                    n_r=self.n_r, n_e=self.n_e, n_y=self.n_y)

    # grouped blocks (d = (n, r)) ---------------------------------------
    @property
    def b_d(self):
        return np.hstack([self.b_n, self.b_r])

    @property
    def d_zd(self):
        return np.hstack([self.d_zn, self.d_zr])

    @property
    def d_ed(self):
        return np.hstack([self.d_en, self.d_er])

    @property
    def d_yd(self):
        return np.hstack([self.d_yn, self.d_yr])

    def blocks(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def with_blocks(self, **kw) -> "LfrSystem":
        return replace(self, **kw)

    def without_noise(self) -> "LfrSystem":
        """Drop the noise input and the error output."""
        return LfrSystem.build(self.a, self.b_w, self.c_z, self.d_zw, b_r=self.b_r, c_y=self.c_y,
                               d_zr=self.d_zr, d_yw=self.d_yw, d_yr=self.d_yr,
                               n_r=self.n_r, n_y=self.n_y)


class ClosedLoop(NamedTuple):
    """Uncertainty loop eliminated: inputs ``(n, r)``, outputs ``(e, y)``."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray


def _loop_gain(sys: LfrSystem, delta: np.ndarray) -> np.ndarray:
    """``Delta (I - D_zw Delta)^-1`` after checking well-posedness."""
    if delta.shape != (sys.n_w, sys.n_z):
        raise DimensionError(f"Delta has shape {delta.shape}, expected {(sys.n_w, sys.n_z)}")
    if sys.n_z == 0:
        return delta
    m = np.eye(sys.n_z) - sys.d_zw @ delta
    s = np.linalg.svd(m, compute_uv=False)
    if s[-1] <= WELL_POSED_RCOND * max(s[0], 1.0):
        raise WellPosednessError(
            f"I - D_zw Delta is numerically singular (smallest singular value {s[-1]:.2e})")
    return delta @ np.linalg.inv(m)


def close_loop(sys: LfrSystem, delta: DeltaLike) -> ClosedLoop:
    """Eliminate ``w = Delta z``."""
    gain = _loop_gain(sys, delta_matrix(delta))
    c_o = np.vstack([sys.c_e, sys.c_y])
    d_ow = np.vstack([sys.d_ew, sys.d_yw])
    d_od = np.block([[sys.d_en, sys.d_er], [sys.d_yn, sys.d_yr]])
    return ClosedLoop(
        a=sys.a + sys.b_w @ gain @ sys.c_z,
        b=sys.b_d + sys.b_w @ gain @ sys.d_zd,
        c=c_o + d_ow @ gain @ sys.c_z,
        d=d_od + d_ow @ gain @ sys.d_zd,
    )


def normalize_intervals(sys: LfrSystem, unc: UncertaintyStructure):
    """Rewrite the LFR so that every uncertainty interval becomes [-1, 1].

    With ``delta = c + r * delta_n`` per block the returned system closed
    with ``delta_n`` equals the original closed with ``delta``.
    """
    if unc.size != sys.n_w or unc.size != sys.n_z:
        raise DimensionError(
            f"uncertainty of size {unc.size} does not fit w/z channels {sys.n_w}/{sys.n_z}")
    cen = np.diag(unc.expand(unc.centers))
    rad = np.diag(unc.expand(unc.radii))
    m = np.eye(sys.n_z) - sys.d_zw @ cen
    s = np.linalg.svd(m, compute_uv=False)
    if s[-1] <= WELL_POSED_RCOND * max(s[0], 1.0):
        raise WellPosednessError("closing the loop at the interval centers is ill posed")
    e = np.linalg.inv(m)
    # w = cen z + rad w_n and z = e (C_z x + D_zw rad w_n + D_zd d)
    c_cz, c_zw, c_zn, c_zr = cen @ e @ sys.c_z, cen @ e @ sys.d_zw, cen @ e @ sys.d_zn, cen @ e @ sys.d_zr
    gw = (c_zw + np.eye(sys.n_w)) @ rad

    def absorb(bw, base_x, base_n, base_r):
        return (base_x + bw @ c_cz, bw @ gw, base_n + bw @ c_zn, base_r + bw @ c_zr)

    a, b_w, b_n, b_r = absorb(sys.b_w, sys.a, sys.b_n, sys.b_r)
    c_e, d_ew, d_en, d_er = absorb(sys.d_ew, sys.c_e, sys.d_en, sys.d_er)
    c_y, d_yw, d_yn, d_yr = absorb(sys.d_yw, sys.c_y, sys.d_yn, sys.d_yr)
    new = LfrSystem(
        a=a, b_w=b_w, b_n=b_n, b_r=b_r,
        c_z=e @ sys.c_z, c_e=c_e, c_y=c_y,
        d_zw=e @ sys.d_zw @ rad, d_zn=e @ sys.d_zn, d_zr=e @ sys.d_zr,
        d_ew=d_ew, d_en=d_en, d_er=d_er,
        d_yw=d_yw, d_yn=d_yn, d_yr=d_yr,
    )
    return new, unc.normalized()


def to_normalized_values(unc: UncertaintyStructure, values):
    """Map physical block values to their [-1, 1] coordinates."""
    r = unc.radii
    out = np.zeros(len(unc.blocks))
    nz = r > 0
    out[nz] = (np.asarray(values, dtype=float)[nz] - unc.centers[nz]) / r[nz]
    return out


def from_normalized_values(unc: UncertaintyStructure, values):
    return unc.centers + unc.radii * np.asarray(values, dtype=float)


# ------------------------------------------------------------------ state space


@dataclass(frozen=True)
class StateSpace:
    """Plain discrete-time state-space record ``(a, b, c, d)``."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        d = np.atleast_2d(np.asarray(self.d, dtype=float))
        a = np.asarray(self.a, dtype=float)
        a = np.atleast_2d(a) if a.size else np.zeros((0, 0))
        nx = a.shape[0]
        b = np.asarray(self.b, dtype=float).reshape(nx, d.shape[1])
        c = np.asarray(self.c, dtype=float).reshape(d.shape[0], nx)
        for name, val in zip("abcd", (a, b, c, d)):
            object.__setattr__(self, name, val)

    @classmethod
    def static(cls, gain):
        gain = np.atleast_2d(np.asarray(gain, dtype=float))
        return cls(np.zeros((0, 0)), np.zeros((0, gain.shape[1])), np.zeros((gain.shape[0], 0)), gain)

    @property
    def n_states(self):
        return self.a.shape[0]

    @property
    def n_in(self):
        return self.d.shape[1]

    @property
    def n_out(self):
        return self.d.shape[0]

    def evaluate(self, z: complex) -> np.ndarray:
        """Transfer matrix at the complex point ``z``."""
        if self.n_states == 0:
            return self.d.astype(complex)
        return self.d + self.c @ np.linalg.solve(z * np.eye(self.n_states) - self.a, self.b)

    @staticmethod
    def append(*systems: "StateSpace") -> "StateSpace":
        """Block-diagonal (parallel, decoupled) connection."""
        from .linalg import blkdiag

        return StateSpace(blkdiag(*[s.a for s in systems]), blkdiag(*[s.b for s in systems]),
                          blkdiag(*[s.c for s in systems]), blkdiag(*[s.d for s in systems]))


def _lower_lft(a, b1, b2, c1, c2, d11, d12, d21, d22, k: StateSpace):
    """Close ``u = K m`` around a plant with inputs (v, u) and outputs (o, m)."""
    ak, bk, ck, dk = k.a, k.b, k.c, k.d
    s = np.eye(dk.shape[0]) - dk @ d22
    r = np.eye(d22.shape[0]) - d22 @ dk
    for mat in (s, r):
        if mat.size and np.linalg.cond(mat) > 1.0 / WELL_POSED_RCOND:
            raise WellPosednessError("controller interconnection has a singular algebraic loop")
    s = np.linalg.inv(s)
    r = np.linalg.inv(r)
    a_cl = np.block([[a + b2 @ s @ dk @ c2, b2 @ s @ ck],
                     [bk @ r @ c2, ak + bk @ r @ d22 @ ck]])
    b_cl = np.vstack([b1 + b2 @ s @ dk @ d21, bk @ r @ d21])
    c_cl = np.hstack([c1 + d12 @ s @ dk @ c2, d12 @ s @ ck])
    d_cl = d11 + d12 @ s @ dk @ d21
    return a_cl, b_cl, c_cl, d_cl


def _pack(sys: LfrSystem):
    b = np.hstack([sys.b_w, sys.b_n, sys.b_r])
    c = np.vstack([sys.c_z, sys.c_e, sys.c_y])
    d = np.block([[sys.d_zw, sys.d_zn, sys.d_zr],
                  [sys.d_ew, sys.d_en, sys.d_er],
                  [sys.d_yw, sys.d_yn, sys.d_yr]])
    return sys.a, b, c, d


def _unpack(a, b, c, d, n_w, n_n, n_r, n_z, n_e, n_y) -> LfrSystem:
    ci = np.cumsum([0, n_w, n_n, n_r])
    ri = np.cumsum([0, n_z, n_e, n_y])

    def cols(x, j):
        return x[:, ci[j]:ci[j + 1]]

    def rows(x, i):
        return x[ri[i]:ri[i + 1]]

    return LfrSystem(
        a=a, b_w=cols(b, 0), b_n=cols(b, 1), b_r=cols(b, 2),
        c_z=rows(c, 0), c_e=rows(c, 1), c_y=rows(c, 2),
        d_zw=cols(rows(d, 0), 0), d_zn=cols(rows(d, 0), 1), d_zr=cols(rows(d, 0), 2),
        d_ew=cols(rows(d, 1), 0), d_en=cols(rows(d, 1), 1), d_er=cols(rows(d, 1), 2),
        d_yw=cols(rows(d, 2), 0), d_yn=cols(rows(d, 2), 1), d_yr=cols(rows(d, 2), 2),
    )


def _series_input(sys: LfrSystem, w_n: Optional[StateSpace], w_r: Optional[StateSpace]) -> LfrSystem:
    """Precompose the n and r inputs with weights ``n = W_n n~``, ``r = W_r r~``."""
    w_n = w_n or StateSpace.static(np.eye(sys.n_n))
    w_r = w_r or StateSpace.static(np.eye(sys.n_r))
    if w_n.n_out != sys.n_n or w_r.n_out != sys.n_r:
        raise DimensionError("input weight output width does not match the plant input")
    wt = StateSpace.append(w_n, w_r)
    a, b, c, d = _pack(sys)
    n_w = sys.n_w
    bw, bd = b[:, :n_w], b[:, n_w:]
    dw, dd = d[:, :n_w], d[:, n_w:]
    nx, nq = sys.n, wt.n_states
    a_new = np.block([[a, bd @ wt.c], [np.zeros((nq, nx)), wt.a]])
    b_new = np.block([[bw, bd @ wt.d], [np.zeros((nq, n_w)), wt.b]])
    c_new = np.hstack([c, dd @ wt.c])
    d_new = np.hstack([dw, dd @ wt.d])
    return _unpack(a_new, b_new, c_new, d_new, n_w, w_n.n_in, w_r.n_in, sys.n_z, sys.n_e, sys.n_y)


def _series_output(sys: LfrSystem, w_e: Optional[StateSpace]) -> LfrSystem:
    """Postcompose the error output with ``e~ = W_e e``."""
    if w_e is None:
        return sys
    if w_e.n_in != sys.n_e:
        raise DimensionError("output weight input width does not match the error output")
    a, b, c, d = _pack(sys)
    ne0 = sys.n_z
    ce, de = c[ne0:ne0 + sys.n_e], d[ne0:ne0 + sys.n_e]
    nx, nq = sys.n, w_e.n_states
    a_new = np.block([[a, np.zeros((nx, nq))], [w_e.b @ ce, w_e.a]])
    b_new = np.vstack([b, w_e.b @ de])
    c_new = np.block([[c[:ne0], np.zeros((ne0, nq))],
                      [w_e.d @ ce, w_e.c],
                      [c[ne0 + sys.n_e:], np.zeros((sys.n_y, nq))]])
    d_new = np.vstack([d[:ne0], w_e.d @ de, d[ne0 + sys.n_e:]])
    return _unpack(a_new, b_new, c_new, d_new, sys.n_w, sys.n_n, sys.n_r, sys.n_z, w_e.n_out, sys.n_y)


def connect_controller(plant: LfrSystem, controller: StateSpace, u_cols: Sequence[int],
                       m_rows: Sequence[int], *, keep_measurement: bool = True,
                       w_n: Optional[StateSpace] = None, w_r: Optional[StateSpace] = None,
                       w_e: Optional[StateSpace] = None) -> LfrSystem:
    """Close ``u = K m`` and attach optional weights on the n, r and e channels.

    ``u_cols`` picks the r-columns driven by the controller output and
    ``m_rows`` the y-rows fed to the controller.  The remaining r-columns
    stay exogenous.  The uncertainty channel keeps its widths.
    """
    u_cols = [int(i) for i in u_cols]
    m_rows = [int(i) for i in m_rows]
    if controller.n_in != len(m_rows) or controller.n_out != len(u_cols):
        raise DimensionError(
            f"controller is {controller.n_out}x{controller.n_in}, loop needs "
            f"{len(u_cols)}x{len(m_rows)}")
    r_keep = [j for j in range(plant.n_r) if j not in u_cols]
    y_keep = list(range(plant.n_y)) if keep_measurement else [i for i in range(plant.n_y) if i not in m_rows]
    a, b, c, d = _pack(plant)
    n_w, n_n = plant.n_w, plant.n_n
    v_cols = list(range(n_w + n_n)) + [n_w + n_n + j for j in r_keep]
    u_idx = [n_w + n_n + j for j in u_cols]
    oz = plant.n_z + plant.n_e
    o_rows = list(range(oz)) + [oz + i for i in y_keep]
    m_idx = [oz + i for i in m_rows]
    a_cl, b_cl, c_cl, d_cl = _lower_lft(
        a, b[:, v_cols], b[:, u_idx], c[o_rows], c[m_idx],
        d[np.ix_(o_rows, v_cols)], d[np.ix_(o_rows, u_idx)],
        d[np.ix_(m_idx, v_cols)], d[np.ix_(m_idx, u_idx)], controller)
    closed = _unpack(a_cl, b_cl, c_cl, d_cl, n_w, n_n, len(r_keep), plant.n_z, plant.n_e, len(y_keep))
    if w_n is not None or w_r is not None:
        closed = _series_input(closed, w_n, w_r)
    return _series_output(closed, w_e)


def controllable_part(sys: LfrSystem, tol: float = 1e-9) -> LfrSystem:
    """Restrict to the states reachable from ``(w, n, r)``.

    Uses an orthonormal basis of the Krylov space; modes that no input can
    excite (for instance weight poles cancelled by loop zeros) are removed.
    """
    b = np.hstack([sys.b_w, sys.b_n, sys.b_r])
    n = sys.n
    if n == 0:
        return sys
    basis = np.zeros((n, 0))
    block = b
    for _ in range(n):
        if block.size == 0:
            break
        # project twice; one pass loses orthogonality for large gains
        block = block - basis @ (basis.T @ block)
        block = block - basis @ (basis.T @ block)
        u, s, _ = np.linalg.svd(block, full_matrices=False)
        scale = max(1.0, np.linalg.norm(b))
        new = u[:, s > tol * scale]
        if new.shape[1] == 0:
            break
        basis = np.hstack([basis, new])
        block = sys.a @ new
        if basis.shape[1] >= n:
            break
    t = basis
    return LfrSystem(a=t.T @ sys.a @ t, b_w=t.T @ sys.b_w, b_n=t.T @ sys.b_n, b_r=t.T @ sys.b_r,
                     c_z=sys.c_z @ t, c_e=sys.c_e @ t, c_y=sys.c_y @ t,
                     d_zw=sys.d_zw, d_zn=sys.d_zn, d_zr=sys.d_zr, d_ew=sys.d_ew, d_en=sys.d_en,
                     d_er=sys.d_er, d_yw=sys.d_yw, d_yn=sys.d_yn, d_yr=sys.d_yr)


class Preconditioner(NamedTuple):
    """``x = t x~``, ``w~ = s w``, ``z~ = s z`` and ``e~ = e / error_scale``.

    ``s`` is constant on every uncertainty block, so it commutes with
    ``Delta``.  Gains of the transformed system are ``error_scale`` times
    smaller than those of the original one.
    """

    t: np.ndarray
    t_inv: np.ndarray
    channel_scale: np.ndarray
    error_scale: float = 1.0

    def state_to_new(self, x):
        return self.t_inv @ np.asarray(x, dtype=float)

    def gain_to_original(self, gamma):
        return gamma * self.error_scale


def precondition(sys: LfrSystem, unc: UncertaintyStructure, balance_states: bool = True,
                 scale_error: bool = True):
    """Equivalent LFR with better numerical scaling for the LMI tests.

    States are transformed so that the Lyapunov solution of the loop closed
    at ``Delta = 0`` becomes the identity (skipped if that loop is not Schur
    stable), and every uncertainty block is scaled so that its ``B_w`` columns
    and ``C_z`` rows have equal norm.  With ``scale_error`` the error output
    is divided by the norm of its state row block, which rescales energy
    gains by a known factor (see :meth:`Preconditioner.gain_to_original`).
    Measured signals, data equations and stability are unchanged.
    """
    if unc.size != sys.n_w or unc.size != sys.n_z:
        raise DimensionError(f"uncertainty of size {unc.size} does not fit w/z channels {sys.n_w}/{sys.n_z}")
    n = sys.n
    t = t_inv = np.eye(n)
    if balance_states and n:
        a0 = sys.a
        if np.max(np.abs(np.linalg.eigvals(a0))) < 1.0:
            x = scipy.linalg.solve_discrete_lyapunov(a0, np.eye(n))
            w, v = np.linalg.eigh(0.5 * (x + x.T))
            if w[0] > 0:
                t = (v * np.sqrt(w)) @ v.T
                t_inv = (v / np.sqrt(w)) @ v.T
    sys = replace(sys, a=t_inv @ sys.a @ t, b_w=t_inv @ sys.b_w, b_n=t_inv @ sys.b_n,
                  b_r=t_inv @ sys.b_r, c_z=sys.c_z @ t, c_e=sys.c_e @ t, c_y=sys.c_y @ t)
    scale = np.ones(unc.size)
    off = 0
    for rep in unc.reps:
        sl = slice(off, off + rep)
        nb, nc = np.linalg.norm(sys.b_w[:, sl]), np.linalg.norm(sys.c_z[sl])
        if nb > 0 and nc > 0:
            scale[sl] = np.sqrt(nb / nc)
        off += rep
    s, si = np.diag(scale), np.diag(1.0 / scale)
    sys = replace(sys, b_w=sys.b_w @ si, c_z=s @ sys.c_z, d_zw=s @ sys.d_zw @ si,
                  d_zn=s @ sys.d_zn, d_zr=s @ sys.d_zr, d_ew=sys.d_ew @ si, d_yw=sys.d_yw @ si)
    kappa = 1.0
    if scale_error and sys.n_e:
        nrm = np.linalg.norm(sys.c_e, 2)
        if nrm > 1.0:
            kappa = float(nrm)
            sys = replace(sys, c_e=sys.c_e / kappa, d_ew=sys.d_ew / kappa, d_en=sys.d_en / kappa,
                          d_er=sys.d_er / kappa)
    return sys, Preconditioner(t, t_inv, scale, kappa)


# ------------------------------------------------------------------ sampling


def zoh_discretize(a_c, b_c, ts: float):
    """Zero-order-hold sampling of ``x' = a_c x + b_c u`` with period ``ts``."""
    if not ts > 0:
        raise ValueError(f"sampling time must be positive, got {ts}")
    a_c = np.atleast_2d(np.asarray(a_c, dtype=float))
    b_c = np.asarray(b_c, dtype=float).reshape(a_c.shape[0], -1)
    n, m = b_c.shape
    big = np.zeros((n + m, n + m))
    big[:n, :n] = a_c
    big[:n, n:] = b_c
    phi = expm(big * ts)
    return phi[:n, :n], phi[:n, n:]


def discretize_lfr(sys: LfrSystem, ts: float) -> LfrSystem:
    """ZOH-sample the known part; every input (w, n, r) is held constant."""
    b = np.hstack([sys.b_w, sys.b_n, sys.b_r])
    a_d, b_d = zoh_discretize(sys.a, b, ts)
    n_w, n_n = sys.n_w, sys.n_n
    return replace(sys, a=a_d, b_w=b_d[:, :n_w], b_n=b_d[:, n_w:n_w + n_n], b_r=b_d[:, n_w + n_n:])


def satellite_lfr(j1: float = 1.0, j2: float = 0.1):
    """Continuous-time flexible satellite with spring ``k`` and damper ``b``
    pulled out as a two-block uncertainty.

    State ``(theta2, theta2', theta1, theta1')``, inputs ``n`` (torque on the
    second body) and ``u`` (torque on the first body, in the r-channel),
    output ``v = theta2``.
    """
    a = np.array([[0.0, 1.0, 0.0, 0.0],
                  [0.0, 0.0, 0.0, 0.0],
                  [0.0, 0.0, 0.0, 1.0],
                  [0.0, 0.0, 0.0, 0.0]])
    col = np.array([0.0, 1.0 / j2, 0.0, -1.0 / j1])
    b_w = np.column_stack([col, col])
    c_z = np.array([[-1.0, 0.0, 1.0, 0.0],
                    [0.0, -1.0, 0.0, 1.0]])
    sys = LfrSystem.build(
        a, b_w, c_z, np.zeros((2, 2)),
        b_n=np.array([[0.0], [1.0], [0.0], [0.0]]),
        b_r=np.array([[0.0], [0.0], [0.0], [1.0 / j1]]),
        c_y=np.array([[1.0, 0.0, 0.0, 0.0]]),
    )
    unc = UncertaintyStructure(((1, 0.08, 0.12), (1, 0.0034, 0.02)))
    return sys, unc
