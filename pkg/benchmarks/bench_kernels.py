"""Compare the numba kernels with their numpy twins.

Run ``python benchmarks/bench_kernels.py``.  Compilation happens once before
timing; the first column reports it separately.
"""

import argparse
import time
import timeit

import numpy as np

from liftcert import kernels
from liftcert._accel import HAS_NUMBA


def _cases(rng, n, h, grid):
    a = rng.standard_normal((n, n))
    a *= 0.9 / np.max(np.abs(np.linalg.eigvals(a)))
    b, c, d = rng.standard_normal((n, 3)), rng.standard_normal((3, n)), rng.standard_normal((3, 3))
    u = rng.standard_normal((h, 3))
    blocks = rng.standard_normal((h, 3, 3))
    thetas = np.linspace(0.0, np.pi, grid)
    return {
        "lti_response": ((a, b, c, d, np.zeros(n), u), "_lti_response"),
        "markov_blocks": ((a, b, c, h), "_markov_blocks"),
        "lower_block_toeplitz": ((blocks,), "_lower_block_toeplitz"),
        "max_singular_on_circle": ((a, b, c, d, thetas), "_max_singular_on_circle"),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=12)
    ap.add_argument("--h", type=int, default=40)
    ap.add_argument("--grid", type=int, default=1024)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not HAS_NUMBA:
        print("numba is not available; nothing to compare")
        return 0
    rng = np.random.default_rng(0)
    print(f"n={args.n} h={args.h} grid={args.grid}")
    print(f"{'kernel':<24}{'compile s':>10}{'numpy ms':>11}{'numba ms':>11}{'speedup':>9}")
    for name, (inputs, stem) in _cases(rng, args.n, args.h, args.grid).items():
        f_np, f_nb = getattr(kernels, stem + "_np"), getattr(kernels, stem + "_nb")
        t0 = time.perf_counter()
        ref, got = f_np(*inputs), f_nb(*inputs)
        compile_s = time.perf_counter() - t0
        for x, y in zip(np.atleast_1d(ref) if not isinstance(ref, tuple) else ref,
                        np.atleast_1d(got) if not isinstance(got, tuple) else got):
            assert np.allclose(x, y, atol=1e-9), name
        number = 20
        t_np = min(timeit.repeat(lambda: f_np(*inputs), number=number, repeat=args.repeat)) / number
        t_nb = min(timeit.repeat(lambda: f_nb(*inputs), number=number, repeat=args.repeat)) / number
        print(f"{name:<24}{compile_s:>10.2f}{1e3 * t_np:>11.3f}{1e3 * t_nb:>11.3f}{t_np / t_nb:>9.2f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
