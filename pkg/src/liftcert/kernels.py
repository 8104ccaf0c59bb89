"""Hot loops used by simulation, lifting and frequency gridding.

Every kernel exists twice: a loop version compiled by numba and a numpy
version.  The public names dispatch to the numba version when it is
available (see :mod:`liftcert._accel`).
"""

import numpy as np

from ._accel import HAS_NUMBA, njit

__all__ = [
    "lti_response",
    "lower_block_toeplitz",
    "markov_blocks",
    "max_singular_on_circle",
    "BACKEND",
]


# ---------------------------------------------------------------- numpy path


def _lti_response_np(a, b, c, d, x0, u):
    h = u.shape[0]
    x = x0.astype(np.float64).copy()
    y = np.empty((h, c.shape[0]))
    for k in range(h):
        y[k] = c @ x + d @ u[k]
        x = a @ x + b @ u[k]
    return x, y


def _lower_block_toeplitz_np(blocks):
    h, p, q = blocks.shape
    lag = np.arange(h)[:, None] - np.arange(h)[None, :]
    tiles = blocks[np.clip(lag, 0, h - 1)]
    tiles[lag < 0] = 0.0
    return tiles.transpose(0, 2, 1, 3).reshape(h * p, h * q)


def _markov_blocks_np(a, b, c, h):
    out = np.empty((h, c.shape[0], b.shape[1]))
    ab = b.astype(np.float64).copy()
    for k in range(h):
        out[k] = c @ ab
        ab = a @ ab
    return out


def _max_singular_on_circle_np(a, b, c, d, thetas):
    n = a.shape[0]
    z = np.exp(1j * thetas)
    if n == 0:
        resp = np.broadcast_to(d.astype(complex), (len(thetas),) + d.shape)
    else:
        lhs = z[:, None, None] * np.eye(n) - a[None]
        resp = d[None] + c[None] @ np.linalg.solve(lhs, np.broadcast_to(b, (len(z),) + b.shape))
    if resp.shape[1] == 0 or resp.shape[2] == 0:
        return np.zeros(len(thetas))
    return np.linalg.svd(resp, compute_uv=False)[:, 0]


# ---------------------------------------------------------------- numba path


@njit
def _lti_response_nb(a, b, c, d, x0, u):
    h = u.shape[0]
    n = a.shape[0]
    m = b.shape[1]
    p = c.shape[0]
    x = x0.copy()
    xn = np.empty(n)
    y = np.empty((h, p))
    for k in range(h):
        for i in range(p):
            acc = 0.0
            for j in range(n):
                acc += c[i, j] * x[j]
            for j in range(m):
                acc += d[i, j] * u[k, j]
            y[k, i] = acc
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc += a[i, j] * x[j]
            for j in range(m):
                acc += b[i, j] * u[k, j]
            xn[i] = acc
        for i in range(n):
            x[i] = xn[i]
    return x, y


@njit
def _lower_block_toeplitz_nb(blocks):
    h, p, q = blocks.shape
    out = np.zeros((h * p, h * q))
    for i in range(h):
        for j in range(i + 1):
            blk = blocks[i - j]
            for r in range(p):
                for s in range(q):
                    out[i * p + r, j * q + s] = blk[r, s]
    return out


@njit
def _markov_blocks_nb(a, b, c, h):
    out = np.empty((h, c.shape[0], b.shape[1]))
    ab = b.copy()
    for k in range(h):
        out[k] = c @ ab
        ab = a @ ab
    return out


@njit
def _max_singular_on_circle_nb(a, b, c, d, thetas):
    n = a.shape[0]
    out = np.zeros(len(thetas))
    if d.shape[0] == 0 or d.shape[1] == 0:
        return out
    ac = a.astype(np.complex128)
    bc = b.astype(np.complex128)
    cc = c.astype(np.complex128)
    dc = d.astype(np.complex128)
    eye = np.eye(n).astype(np.complex128)
    for k in range(len(thetas)):
        z = np.exp(1j * thetas[k])
        if n > 0:
            resp = dc + cc @ np.linalg.solve(z * eye - ac, bc)
        else:
            resp = dc.copy()
        out[k] = np.linalg.svd(resp)[1][0]
    return out


# ---------------------------------------------------------------- dispatch

if HAS_NUMBA:
    BACKEND = "numba"
    # the batched numpy solve beats the compiled loop on the frequency grid
    _lti, _toep, _markov, _circle = (
        _lti_response_nb,
        _lower_block_toeplitz_nb,
        _markov_blocks_nb,
        _max_singular_on_circle_np,
    )
else:
    BACKEND = "numpy"
    _lti, _toep, _markov, _circle = (
        _lti_response_np,
        _lower_block_toeplitz_np,
        _markov_blocks_np,
        _max_singular_on_circle_np,
    )


def _f(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def lti_response(a, b, c, d, x0, u):
    """Simulate ``x+ = a x + b u``, ``y = c x + d u`` for ``u.shape[0]`` steps.

    Returns the final state and the outputs, one row per step.
    """
    return _lti(_f(a), _f(b), _f(c), _f(d), _f(x0), _f(u))


def lower_block_toeplitz(blocks):
    """Assemble the lower block-triangular Toeplitz matrix with first block
    column ``blocks[0], blocks[1], ...`` (shape ``(h, p, q)``)."""
    return _toep(_f(blocks))


def markov_blocks(a, b, c, h):
    """Return ``[c b, c a b, ..., c a^(h-1) b]`` stacked as ``(h, p, q)``."""
    return _markov(_f(a), _f(b), _f(c), int(h))


def max_singular_on_circle(a, b, c, d, thetas):
    """Largest singular value of ``d + c (z I - a)^-1 b`` at ``z = exp(i theta)``."""
    return _circle(_f(a), _f(b), _f(c), _f(d), _f(thetas))
