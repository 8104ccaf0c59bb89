"""Both kernel implementations must agree; the numba ones only run if numba is present."""

import os
import subprocess
import sys

import numpy as np
import pytest

from liftcert import kernels
from liftcert._accel import HAS_NUMBA

PAIRS = [
    ("lti_response", kernels._lti_response_np, getattr(kernels, "_lti_response_nb", None)),
    ("lower_block_toeplitz", kernels._lower_block_toeplitz_np, getattr(kernels, "_lower_block_toeplitz_nb", None)),
    ("markov_blocks", kernels._markov_blocks_np, getattr(kernels, "_markov_blocks_nb", None)),
    ("max_singular_on_circle", kernels._max_singular_on_circle_np,
     getattr(kernels, "_max_singular_on_circle_nb", None)),
]


def _args(name, rng):
    a = rng.standard_normal((4, 4)) * 0.3
    b, c, d = rng.standard_normal((4, 2)), rng.standard_normal((3, 4)), rng.standard_normal((3, 2))
    if name == "lti_response":
        return a, b, c, d, rng.standard_normal(4), rng.standard_normal((7, 2))
    if name == "lower_block_toeplitz":
        return (rng.standard_normal((5, 3, 2)),)
    if name == "markov_blocks":
        return a, b, c, 6
    return a, b, c, d, np.linspace(0, np.pi, 33)


def test_lti_response_by_hand():
    a, b, c, d = np.array([[0.5]]), np.array([[1.0]]), np.array([[2.0]]), np.array([[0.0]])
    x, y = kernels.lti_response(a, b, c, d, np.array([1.0]), np.array([[1.0], [0.0], [0.0]]))
    assert np.allclose(y.ravel(), [2.0, 3.0, 1.5])
    assert np.allclose(x, [0.375])


def test_toeplitz_layout():
    blocks = np.arange(1.0, 4.0).reshape(3, 1, 1)
    want = np.array([[1, 0, 0], [2, 1, 0], [3, 2, 1.0]])
    assert np.array_equal(kernels.lower_block_toeplitz(blocks), want)


def test_markov_blocks_by_hand():
    a, b, c = np.array([[0.5]]), np.array([[1.0]]), np.array([[2.0]])
    assert np.allclose(kernels.markov_blocks(a, b, c, 3).ravel(), [2.0, 1.0, 0.5])


def test_circle_gain_of_first_order_lag():
    # 1 / (z - 0.5): peak 2 at z = 1, 2/3 at z = -1
    vals = kernels.max_singular_on_circle(np.array([[0.5]]), np.array([[1.0]]), np.array([[1.0]]),
                                          np.zeros((1, 1)), np.array([0.0, np.pi]))
    assert np.allclose(vals, [2.0, 2.0 / 3.0])


@pytest.mark.skipif(not HAS_NUMBA, reason="numba not available")
@pytest.mark.parametrize("name,np_fn,nb_fn", PAIRS, ids=[p[0] for p in PAIRS])
def test_numba_matches_numpy(name, np_fn, nb_fn, rng):
    args = _args(name, rng)
    want = np_fn(*[np.ascontiguousarray(x) if isinstance(x, np.ndarray) else x for x in args])
    got = nb_fn(*[np.ascontiguousarray(x) if isinstance(x, np.ndarray) else x for x in args])
    got = got if isinstance(got, tuple) else (got,)
    want = want if isinstance(want, tuple) else (want,)
    for g, w in zip(got, want):
        assert np.allclose(g, w, atol=1e-12)


def test_env_flag_forces_numpy_path():
    code = ("import liftcert.kernels as k, liftcert._accel as a;"
            "print(a.HAS_NUMBA, k.BACKEND)")
    env = dict(os.environ, LIFTCERT_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["False", "numpy"]
