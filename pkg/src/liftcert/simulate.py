"""Experiment generation and brute-force reference quantities.

These routines are the independent oracles against which certificates are
checked: exact step simulation, data compatibility of a candidate
uncertainty, spectral radius and a frequency-gridded gain.
"""

from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional

import numpy as np

from .errors import DimensionError
from .kernels import lower_block_toeplitz, lti_response, markov_blocks, max_singular_on_circle
from .lfr import DeltaLike, LfrSystem, Uncertainty, UncertaintyStructure, close_loop

__all__ = [
    "NoiseModel",
    "DataRecord",
    "simulate_record",
    "split_record",
    "compatibility_residual",
    "spectral_radius_closed",
    "gain_frequency_gridded",
    "delta_grid_oracle",
    "OraclePoint",
    "reference_signal",
    "ball_noise",
    "DEFAULT_GRID",
]

DEFAULT_GRID = 2048
NOISE_KINDS = ("per_sample_norm", "total_energy")


@dataclass(frozen=True)
class NoiseModel:
    """Bound on the unmeasured noise.

    ``per_sample_norm`` means ``|n(k)| <= eps`` for every sample;
    ``total_energy`` means ``|n|^2 <= h eps^2`` for the stacked sequence.
    """

    kind: str
    eps: float

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")
        if not self.eps > 0:
            raise ValueError(f"noise bound must be positive, got {self.eps}")


@dataclass(frozen=True)
class DataRecord:
    """One finite-horizon experiment: initial state, stacked input and output.

    Signals are stacked time-major, ``r_star = (r(0), ..., r(h-1))``.
    ``x_star`` is ``None`` when the initial state is not known.
    """

    h: int
    r_star: np.ndarray
    y_star: np.ndarray
    x_star: Optional[np.ndarray] = None
    noise_model: Optional[NoiseModel] = None
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        h = int(self.h)
        if h < 1:
            raise ValueError(f"record horizon must be >= 1, got {h}")
        object.__setattr__(self, "h", h)
        for name in ("r_star", "y_star"):
            val = np.asarray(getattr(self, name), dtype=float).ravel()
            if val.size % h:
                raise DimensionError(f"{name} has {val.size} entries, not a multiple of h={h}")
            object.__setattr__(self, name, val)
        if self.x_star is not None:
            object.__setattr__(self, "x_star", np.asarray(self.x_star, dtype=float).ravel())

    @property
    def n_r(self):
        return self.r_star.size // self.h

    @property
    def n_y(self):
        return self.y_star.size // self.h

    def check_dims(self, sys: LfrSystem):
        if self.n_r != sys.n_r or self.n_y != sys.n_y:
            raise DimensionError(
                f"record carries n_r={self.n_r}, n_y={self.n_y}; system has "
                f"n_r={sys.n_r}, n_y={sys.n_y}")
        if self.x_star is not None and self.x_star.size != sys.n:
            raise DimensionError(f"x_star has {self.x_star.size} entries, system has n={sys.n}")

    def with_horizon(self, h: int) -> "DataRecord":
        """The first ``h`` samples of this record."""
        if not 1 <= h <= self.h:
            raise ValueError(f"cannot truncate a record of length {self.h} to {h}")
        return DataRecord(h, self.r_star[:h * self.n_r], self.y_star[:h * self.n_y],
                          self.x_star, self.noise_model, dict(self.provenance))


def _signal(u, h, width, name):
    if u is None:
        return np.zeros((h, width))
    u = np.asarray(u, dtype=float)
    if u.size != h * width:
        raise DimensionError(f"{name} has {u.size} entries, expected {h}*{width}")
    return u.reshape(h, width)


def _closed_trajectory(sys, delta, x0, r, n):
    cl = close_loop(sys, delta)
    u = np.hstack([n, r])
    x_fin, out = lti_response(cl.a, cl.b, cl.c, cl.d, x0, u)
    return x_fin, out[:, sys.n_e:], out[:, :sys.n_e]


def simulate_record(sys: LfrSystem, delta: DeltaLike, x0=None, r=None, n=None, h: Optional[int] = None,
                    noise_model: Optional[NoiseModel] = None, provenance: Optional[dict] = None,
                    keep_x0: bool = True) -> DataRecord:
    """Run the uncertain loop for ``h`` steps and package the measurements.

    ``r`` and ``n`` are stacked (or ``(h, width)``) signals; the noise itself
    is not stored in the record, only ``noise_model``.
    """
    if h is None:
        if r is None:
            raise ValueError("either h or r must be given")
        h = np.asarray(r).size // max(sys.n_r, 1)
    h = int(h)
    x0 = np.zeros(sys.n) if x0 is None else np.asarray(x0, dtype=float).ravel()
    r2 = _signal(r, h, sys.n_r, "r")
    n2 = _signal(n, h, sys.n_n, "n")
    _, y, _ = _closed_trajectory(sys, delta, x0, r2, n2)
    prov = dict(provenance or {})
    return DataRecord(h, r2.ravel(), y.ravel(), x0.copy() if keep_x0 else None, noise_model, prov)


def split_record(rec: DataRecord, length: int = 1, states=None) -> List[DataRecord]:
    """Chop a record into consecutive pieces of ``length`` samples.

    Every piece needs its own initial state; pass the states explicitly
    (``states[j]`` for the start of piece ``j``) or leave them unknown.
    """
    if rec.h % length:
        raise ValueError(f"record length {rec.h} is not a multiple of {length}")
    pieces = []
    nr, ny = rec.n_r, rec.n_y
    for j in range(rec.h // length):
        x = None if states is None else np.asarray(states[j], dtype=float)
        pieces.append(DataRecord(length, rec.r_star[j * length * nr:(j + 1) * length * nr],
                                 rec.y_star[j * length * ny:(j + 1) * length * ny], x,
                                 rec.noise_model, dict(rec.provenance)))
    return pieces


def _toeplitz_response(a, b, c, d, h):
    """Lifted input-output Toeplitz matrix of ``(a, b, c, d)`` over ``h`` samples."""
    blocks = np.empty((h, d.shape[0], d.shape[1]))
    blocks[0] = d
    if h > 1:
        blocks[1:] = markov_blocks(a, b, c, h - 1)
    return lower_block_toeplitz(blocks)


def compatibility_residual(sys: LfrSystem, record: DataRecord, delta: DeltaLike) -> float:
    """How far ``delta`` is from explaining the record.

    Noise-free records give the sup-norm output mismatch.  With a noise
    bound the noise is reconstructed by minimum-norm least squares and the
    residual is the larger of the fit error and the bound violation;
    ``<= 0`` up to tolerance proves compatibility (the test is sufficient,
    not necessary).
    """
    if record.x_star is None:
        raise ValueError("compatibility needs a known initial state")
    record.check_dims(sys)
    h = record.h
    r = record.r_star.reshape(h, sys.n_r)
    zeros_n = np.zeros((h, sys.n_n))
    _, y_free, _ = _closed_trajectory(sys, delta, record.x_star, r, zeros_n)
    mismatch = record.y_star - y_free.ravel()
    if record.noise_model is None or sys.n_n == 0:
        return float(np.max(np.abs(mismatch))) if mismatch.size else 0.0
    cl = close_loop(sys, delta)
    ne, nn = sys.n_e, sys.n_n
    t_n = _toeplitz_response(cl.a, cl.b[:, :nn], cl.c[ne:], cl.d[ne:, :nn], h)
    n_ls, *_ = np.linalg.lstsq(t_n, mismatch, rcond=None)
    fit = float(np.max(np.abs(t_n @ n_ls - mismatch))) if mismatch.size else 0.0
    eps = record.noise_model.eps
    if record.noise_model.kind == "per_sample_norm":
        norms = np.linalg.norm(n_ls.reshape(h, sys.n_n), axis=1)
        excess = float(np.max(norms) - eps)
    else:
        excess = float(np.linalg.norm(n_ls) - np.sqrt(h) * eps)
    return max(fit, excess)


def spectral_radius_closed(sys: LfrSystem, delta: DeltaLike) -> float:
    """Spectral radius of ``A + B_w Delta (I - D_zw Delta)^-1 C_z``."""
    a = close_loop(sys, delta).a
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(a))))


def gain_frequency_gridded(sys: LfrSystem, delta: DeltaLike, n_grid: int = DEFAULT_GRID) -> float:
    """Largest singular value of the ``d -> e`` response over ``n_grid``
    uniformly spaced frequencies in ``[0, pi]``; a lower bound on the energy
    gain.  ``inf`` for an unstable loop."""
    cl = close_loop(sys, delta)
    if cl.a.size and np.max(np.abs(np.linalg.eigvals(cl.a))) >= 1.0:
        return float("inf")
    ne = sys.n_e
    c, d = cl.c[:ne], cl.d[:ne]
    thetas = np.linspace(0.0, np.pi, int(n_grid))
    vals = max_singular_on_circle(cl.a, cl.b, c, d, thetas)
    return float(np.max(vals)) if vals.size else 0.0


class OraclePoint(NamedTuple):
    delta: Uncertainty
    compatible: bool
    rho: float
    gain: float


def delta_grid_oracle(sys: LfrSystem, u: UncertaintyStructure, record: Optional[DataRecord],
                      grid_per_block: int, tol: float = 1e-8, n_grid: int = DEFAULT_GRID,
                      with_gain: bool = True) -> List[OraclePoint]:
    """Evaluate every point of a uniform grid over the uncertainty box.

    ``record=None`` marks every point compatible (no data).
    """
    pts = u.grid(grid_per_block)
    if len(pts) > 100_000:
        raise ValueError(f"grid has {len(pts)} points, limit is 1e5")
    out = []
    for vals in pts:
        delta = Uncertainty(u, tuple(vals))
        if record is None:
            comp = True
        else:
            comp = compatibility_residual(sys, record, delta) <= tol
        rho = spectral_radius_closed(sys, delta)
        gain = float("nan")
        if with_gain and sys.n_e and sys.n_d:
            gain = gain_frequency_gridded(sys, delta, n_grid) if rho < 1 else float("inf")
        out.append(OraclePoint(delta, bool(comp), rho, gain))
    return out


def reference_signal(h: int, ts: float = 0.05, pieces=((0.0, 1.0, 3.0), (1.5, 3.0, -2.0))) -> np.ndarray:
    """Piecewise-constant reference sampled at ``t = k ts``.

    Each piece ``(start, stop, value)`` is active on ``[start, stop)``.
    """
    t = np.arange(int(h)) * ts
    r = np.zeros(int(h))
    slack = 1e-9 * max(ts, 1.0)
    for start, stop, value in pieces:
        r[(t >= start - slack) & (t < stop - slack)] += value
    return r


def ball_noise(rng: np.random.Generator, h: int, width: int, eps: float) -> np.ndarray:
    """``h`` samples drawn uniformly from the ball of radius ``eps`` in R^width."""
    if width == 0:
        return np.zeros((h, 0))
    g = rng.standard_normal((h, width))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    rad = eps * rng.random(h) ** (1.0 / width)
    return g * rad[:, None]
