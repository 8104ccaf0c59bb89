"""Finite-horizon lifting and the kernel-inclusion test.

Stacking ``h`` consecutive samples turns the interconnection into a single
step of a larger system whose feedthrough blocks are lower block-triangular
Toeplitz matrices.  The data-dependent multipliers need a matrix ``M`` with
``M D_hyw = [B_sigma,w 0]``; :func:`check_assumption` finds the largest
``sigma`` for which it exists.
"""

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import DimensionError
from .kernels import lower_block_toeplitz, markov_blocks
from .lfr import DeltaLike, LfrSystem, delta_matrix
from .linalg import DEFAULT_RANK_TOL, kernel_basis, kron, pinv

__all__ = [
    "LiftedSystem",
    "AssumptionWitness",
    "lift",
    "lifted_uncertainty",
    "check_assumption",
    "assumption_monotonic",
    "inclusion_residuals",
    "split_w_channel",
    "DEFAULT_KERNEL_TOL",
]

DEFAULT_KERNEL_TOL = 1e-8

_INPUTS = ("w", "n", "r")
_OUTPUTS = ("z", "e", "y")


@dataclass(frozen=True)
class LiftedSystem:
    """One step of the interconnection over ``h`` samples.

    ``d[o + i]`` holds the lifted feedthrough from input ``i`` to output
    ``o`` (for instance ``d["yw"]``); ``d_x[o]`` is the Toeplitz matrix that
    maps the impulse-embedded initial state to output ``o``.
    """

    h: int
    dims: Dict[str, int]
    powers: Tuple[np.ndarray, ...]
    b: Dict[str, np.ndarray]
    c: Dict[str, np.ndarray]
    d: Dict[str, np.ndarray]
    d_x: Dict[str, np.ndarray]

    @property
    def a_h(self) -> np.ndarray:
        return self.powers[self.h]

    # attribute-style access: b_hw, c_hz, d_hyw, d_hzx ...
    def __getattr__(self, name):
        if name.startswith("b_h") and name[3:] in _INPUTS:
            return self.b[name[3:]]
        if name.startswith("c_h") and name[3:] in _OUTPUTS:
            return self.c[name[3:]]
        if name.startswith("d_h") and len(name) == 5:
            o, i = name[3], name[4]
            if i == "x":
                return self.d_x[o]
            return self.d[o + i]
        raise AttributeError(name)

    def as_lfr(self) -> LfrSystem:
        """The lifted step as an ordinary LFR (uncertainty ``I_h kron Delta``)."""
        return LfrSystem(
            a=self.a_h, b_w=self.b["w"], b_n=self.b["n"], b_r=self.b["r"],
            c_z=self.c["z"], c_e=self.c["e"], c_y=self.c["y"],
            d_zw=self.d["zw"], d_zn=self.d["zn"], d_zr=self.d["zr"],
            d_ew=self.d["ew"], d_en=self.d["en"], d_er=self.d["er"],
            d_yw=self.d["yw"], d_yn=self.d["yn"], d_yr=self.d["yr"],
        )

    def truncate(self, sigma: int) -> "LiftedSystem":
        """The lifting over the first ``sigma`` samples, read off this one."""
        if not 1 <= sigma <= self.h:
            raise ValueError(f"sigma must lie in 1..{self.h}, got {sigma}")
        dm = self.dims
        n = dm["n"]
        b = {i: self.b[i][:, (self.h - sigma) * dm["n_" + i]:] for i in _INPUTS}
        c = {o: self.c[o][:sigma * dm["n_" + o]] for o in _OUTPUTS}
        d = {o + i: self.d[o + i][:sigma * dm["n_" + o], :sigma * dm["n_" + i]]
             for o in _OUTPUTS for i in _INPUTS}
        d_x = {o: self.d_x[o][:sigma * dm["n_" + o], :sigma * n] for o in _OUTPUTS}
        return LiftedSystem(sigma, dict(dm), self.powers[:sigma + 1], b, c, d, d_x)


def lift(sys: LfrSystem, h: int) -> LiftedSystem:
    """Lift ``sys`` over a horizon of ``h`` samples."""
    h = int(h)
    if h < 1:
        raise ValueError(f"horizon must be >= 1, got {h}")
    n = sys.n
    ins = {"w": sys.b_w, "n": sys.b_n, "r": sys.b_r}
    outs = {"z": sys.c_z, "e": sys.c_e, "y": sys.c_y}
    feed = {"zw": sys.d_zw, "zn": sys.d_zn, "zr": sys.d_zr,
            "ew": sys.d_ew, "en": sys.d_en, "er": sys.d_er,
            "yw": sys.d_yw, "yn": sys.d_yn, "yr": sys.d_yr}
    dims = dict(sys.dims)

    powers = [np.eye(n)]
    for _ in range(h):
        powers.append(sys.a @ powers[-1])

    b_all = np.hstack([ins[i] for i in _INPUTS])
    c_all = np.vstack([outs[o] for o in _OUTPUTS])
    # A^k B_all for k = 0..h-1, reversed into [A^(h-1) B, ..., B]
    ab = np.stack([p @ b_all for p in powers[:h]])
    # C_all A^k for k = 0..h-1
    ca = np.stack([c_all @ p for p in powers[:h]])
    markov = markov_blocks(sys.a, b_all, c_all, max(h - 1, 0)) if h > 1 else None

    col_off = np.cumsum([0] + [ins[i].shape[1] for i in _INPUTS])
    row_off = np.cumsum([0] + [outs[o].shape[0] for o in _OUTPUTS])

    b = {}
    for j, i in enumerate(_INPUTS):
        blocks = ab[:, :, col_off[j]:col_off[j + 1]][::-1]
        b[i] = np.concatenate(list(blocks), axis=1) if blocks.shape[2] else np.zeros((n, 0))
    c, d, d_x = {}, {}, {}
    for k, o in enumerate(_OUTPUTS):
        rows = slice(row_off[k], row_off[k + 1])
        p = row_off[k + 1] - row_off[k]
        c[o] = ca[:, rows, :].reshape(h * p, n)
        d_x[o] = lower_block_toeplitz(ca[:, rows, :]) if p and n else np.zeros((h * p, h * n))
        for j, i in enumerate(_INPUTS):
            cols = slice(col_off[j], col_off[j + 1])
            q = col_off[j + 1] - col_off[j]
            if p == 0 or q == 0:
                d[o + i] = np.zeros((h * p, h * q))
                continue
            blocks = np.empty((h, p, q))
            blocks[0] = feed[o + i]
            if h > 1:
                blocks[1:] = markov[:, rows, cols]
            d[o + i] = lower_block_toeplitz(blocks)
    return LiftedSystem(h, dims, tuple(powers), b, c, d, d_x)


def lifted_uncertainty(delta: DeltaLike, h: int) -> np.ndarray:
    """``I_h kron Delta``."""
    return kron(np.eye(int(h)), delta_matrix(delta))


@dataclass(frozen=True)
class AssumptionWitness:
    """Matrices certifying the kernel inclusion for a given ``sigma``."""

    h: int
    sigma: int
    m: np.ndarray
    n_sel: np.ndarray
    residual: float
    m_b: Optional[np.ndarray] = None
    m_d: Optional[np.ndarray] = None
    residual_e: Optional[float] = None

    @property
    def has_error_channel(self) -> bool:
        return self.m_d is not None


def _inclusion_residuals(lifted: LiftedSystem, kernel: np.ndarray, sigma: int, with_e: bool):
    dm = lifted.dims
    n_w = dm["n_w"]
    top = kernel[:sigma * n_w]
    b_s = lifted.b["w"][:, (lifted.h - sigma) * n_w:]
    res_b = _rel(b_s @ top, b_s)
    res_e = None
    if with_e:
        d_s = lifted.d["ew"][:sigma * dm["n_e"], :sigma * n_w]
        res_e = _rel(d_s @ top, d_s)
    return res_b, res_e, b_s


def _rel(prod, base):
    if prod.size == 0:
        return 0.0
    denom = 1.0 + (np.linalg.norm(base, 2) if base.size else 0.0)
    return float(np.linalg.norm(prod, 2) / denom)


def check_assumption(sys: LfrSystem, h: int, need_error_channel: bool = False,
                     tol: float = DEFAULT_KERNEL_TOL, *, rank_tol: float = DEFAULT_RANK_TOL,
                     sigma: Optional[int] = None, lifted: Optional[LiftedSystem] = None):
    """Largest ``sigma`` with ``ker D_hyw`` inside ``ker [B_sigma,w 0]``.

    With ``need_error_channel`` the inclusion must also hold for
    ``[D_sigma,ew 0]``.  ``sigma`` forces a particular value.  Returns an
    :class:`AssumptionWitness` or ``None`` when no ``sigma`` qualifies.
    """
    lifted = lifted if lifted is not None else lift(sys, h)
    h = lifted.h
    n_w = sys.n_w
    d_yw = lifted.d["yw"]
    kernel = kernel_basis(d_yw, rank_tol) if d_yw.size else np.eye(h * n_w)
    candidates = [int(sigma)] if sigma is not None else range(h, 0, -1)
    for s in candidates:
        if not 1 <= s <= h:
            raise ValueError(f"sigma must lie in 1..{h}, got {s}")
        res_b, res_e, b_s = _inclusion_residuals(lifted, kernel, s, need_error_channel)
        if res_b > tol or (res_e is not None and res_e > tol):
            continue
        pad = np.zeros((sys.n, (h - s) * n_w))
        d_pinv = pinv(d_yw, rank_tol) if d_yw.size else np.zeros((h * n_w, 0))
        m = np.hstack([b_s, pad]) @ d_pinv
        n_sel = np.hstack([np.eye(s * sys.n_z), np.zeros((s * sys.n_z, (h - s) * sys.n_z))])
        m_d = None
        if need_error_channel:
            d_s = lifted.d["ew"][:s * sys.n_e, :s * n_w]
            m_d = np.hstack([d_s, np.zeros((s * sys.n_e, (h - s) * n_w))]) @ d_pinv
        return AssumptionWitness(h=h, sigma=s, m=m, n_sel=n_sel, residual=res_b,
                                 m_b=m if need_error_channel else None, m_d=m_d,
                                 residual_e=res_e)
    return None


def inclusion_residuals(sys: LfrSystem, h: int, sigma: int, *, rank_tol: float = DEFAULT_RANK_TOL,
                        lifted: Optional[LiftedSystem] = None) -> Tuple[float, float]:
    """Relative residuals of the state-row and error-row inclusions at ``sigma``."""
    lifted = lifted if lifted is not None else lift(sys, h)
    d_yw = lifted.d["yw"]
    kernel = kernel_basis(d_yw, rank_tol) if d_yw.size else np.eye(lifted.h * sys.n_w)
    res_b, res_e, _ = _inclusion_residuals(lifted, kernel, sigma, True)
    return res_b, res_e


def assumption_monotonic(sys: LfrSystem, h: int, sigma: int, tol: float = DEFAULT_KERNEL_TOL,
                         *, rank_tol: float = DEFAULT_RANK_TOL) -> bool:
    """Recheck the inclusion at ``(h + 1, sigma + 1)``."""
    lifted = lift(sys, h + 1)
    d_yw = lifted.d["yw"]
    kernel = kernel_basis(d_yw, rank_tol) if d_yw.size else np.eye((h + 1) * sys.n_w)
    res_b, _, _ = _inclusion_residuals(lifted, kernel, sigma + 1, False)
    return res_b <= tol


def split_w_channel(sys: LfrSystem, partition: Tuple[int, int]) -> LfrSystem:
    """Duplicate the uncertainty channel along a split of the state rows.

    ``partition = (n1, n2)`` with ``n1 + n2 = n`` splits ``B_w`` into its
    first ``n1`` and last ``n2`` rows.  The returned system has the
    uncertainty input ``(w1, w2)``, where ``w1`` only drives the first state
    rows and ``w2`` only the last ones, and the z output stacked twice.
    Closing it with ``diag(Delta, Delta)`` reproduces the original loop.
    """
    n1, n2 = (int(p) for p in partition)
    if n1 < 0 or n2 < 0 or n1 + n2 != sys.n:
        raise DimensionError(f"partition {partition} does not split {sys.n} states")
    b1 = sys.b_w.copy()
    b1[n1:] = 0.0
    b2 = sys.b_w.copy()
    b2[:n1] = 0.0
    zero_zw = np.zeros_like(sys.d_zw)
    return LfrSystem(
        a=sys.a, b_w=np.hstack([b1, b2]), b_n=sys.b_n, b_r=sys.b_r,
        c_z=np.vstack([sys.c_z, sys.c_z]), c_e=sys.c_e, c_y=sys.c_y,
        d_zw=np.block([[sys.d_zw, zero_zw], [zero_zw, sys.d_zw]]),
        d_zn=np.vstack([sys.d_zn, sys.d_zn]), d_zr=np.vstack([sys.d_zr, sys.d_zr]),
        d_ew=_split_cols(sys.d_ew),
        d_en=sys.d_en, d_er=sys.d_er,
        d_yw=_split_cols(sys.d_yw), d_yn=sys.d_yn, d_yr=sys.d_yr,
    )


def _split_cols(d):
    # direct feedthrough of w is carried by the first copy only
    return np.hstack([d, np.zeros_like(d)])
