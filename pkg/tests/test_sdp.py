import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from liftcert.sdp import (INFEASIBLE, OPTIMAL, UNBOUNDED, ConicProgram, SolverOptions,
                          available_backends, register_backend, smat, solve, svec, svec_dim)

BACKENDS = [b for b in ("builtin", "cvxopt") if b in available_backends()]


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 6), seed=st.integers(0, 10 ** 6))
def test_svec_preserves_inner_products(n, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((2, n, n))
    a, b = a + a.T, b + b.T
    assert svec(a).size == svec_dim(n)
    assert np.isclose(svec(a) @ svec(b), np.trace(a @ b))
    assert np.allclose(smat(svec(a), n), a)


def _psd_program(c, mats, const):
    """``min c^T x`` s.t. ``sum x_i mats[i] - const >= 0`` as a single PSD block."""
    k = const.shape[0]
    g = -np.stack([svec(m) for m in mats], axis=1)
    return ConicProgram(np.asarray(c, float), g, -svec(const), 0, (k,))


@pytest.mark.parametrize("backend", BACKENDS)
class TestGolden:
    def test_two_by_two_boundary(self, backend):
        # [[x, 1], [1, x]] >= 0  <=>  x >= 1
        prog = _psd_program([1.0], [np.eye(2)], -np.array([[0.0, 1], [1, 0]]))
        res = solve(prog, backend=backend)
        assert res.status == OPTIMAL
        assert np.isclose(res.x[0], 1.0, atol=1e-6)

    def test_min_eigenvalue(self, backend):
        # max t s.t. diag(1, 2) - t I >= 0
        prog = ConicProgram([-1.0], svec(np.eye(2))[:, None], svec(np.diag([1.0, 2.0])), 0, (2,))
        res = solve(prog, backend=backend)
        assert res.status == OPTIMAL and np.isclose(res.x[0], 1.0, atol=1e-6)

    def test_lovasz_theta_of_pentagon(self, backend):
        # min t s.t. t I - J + sum_e y_e (E_ij + E_ji) >= 0 equals sqrt(5)
        n = 5
        edges = [(i, (i + 1) % n) for i in range(n)]
        mats = [np.eye(n)]
        for i, j in edges:
            e = np.zeros((n, n))
            e[i, j] = e[j, i] = 1.0
            mats.append(e)
        prog = _psd_program(np.r_[1.0, np.zeros(n)], mats, np.ones((n, n)))
        res = solve(prog, backend=backend)
        assert res.status == OPTIMAL
        assert np.isclose(res.objective, np.sqrt(5.0), atol=1e-6)

    def test_linear_program(self, backend):
        # min x + y s.t. x >= 1, y >= 2, x + y >= 4
        g = -np.array([[1.0, 0], [0, 1], [1, 1]])
        res = solve(ConicProgram([1.0, 1.0], g, -np.array([1.0, 2, 4]), 3, ()), backend=backend)
        assert res.status == OPTIMAL and np.isclose(res.objective, 4.0, atol=1e-6)

    def test_infeasible(self, backend):
        # x >= 1 and x <= 0
        res = solve(ConicProgram([1.0], np.array([[-1.0], [1.0]]), np.array([-1.0, 0.0]), 2, ()),
                    backend=backend)
        assert res.status == INFEASIBLE

    def test_infeasible_psd(self, backend):
        # diag(x, -x - 1) >= 0
        prog = _psd_program([0.0], [np.diag([1.0, -1.0])], np.diag([0.0, 1.0]))
        assert solve(prog, backend=backend).status == INFEASIBLE

    def test_unbounded(self, backend):
        # min x s.t. x <= 0
        res = solve(ConicProgram([1.0], np.array([[1.0]]), np.array([0.0]), 1, ()), backend=backend)
        assert res.status == UNBOUNDED


def test_lyapunov_feasibility(rng):
    from systems import schur

    for _ in range(3):
        a = schur(rng, 3, 0.9)
        # max t s.t. X - t I >= 0, X - A^T X A - t I >= 0, X <= I
        from liftcert.multipliers import sym_basis

        basis = sym_basis(3)
        nv = len(basis) + 1
        blocks = []
        for f in (lambda e: e, lambda e: e - a.T @ e @ a, lambda e: -e):
            blocks.append(np.stack([svec(f(e)) for e in basis], axis=1))
        g = np.zeros((3 * svec_dim(3), nv))
        h = np.zeros(3 * svec_dim(3))
        for k, blk in enumerate(blocks):
            sl = slice(k * 6, (k + 1) * 6)
            g[sl, :-1] = -blk
            g[sl, -1] = svec(np.eye(3)) if k < 2 else 0.0
            h[sl] = svec(np.eye(3)) if k == 2 else 0.0
        c = np.zeros(nv)
        c[-1] = -1.0
        prog = ConicProgram(c, g, h, 0, (3, 3, 3))
        res = solve(prog)
        assert res.status == OPTIMAL and res.x[-1] > 1e-4
        x = sum(v * e for v, e in zip(res.x[:-1], basis))
        assert np.linalg.eigvalsh(x)[0] > 0
        assert np.linalg.eigvalsh(x - a.T @ x @ a)[0] > 0


@pytest.mark.skipif("cvxopt" not in BACKENDS, reason="cvxopt not installed")
def test_backends_agree_on_random_sdps(rng):
    for _ in range(5):
        k, m = 4, 3
        mats = [np.eye(k)] + [(lambda s: s + s.T)(rng.standard_normal((k, k))) for _ in range(m)]
        const = (lambda s: s + s.T)(rng.standard_normal((k, k)))
        # bounded: t I + sum y_i M_i >= C with |y_i| <= 1
        prog = _psd_program(np.r_[1.0, np.zeros(m)], mats, const)
        g = np.vstack([np.hstack([np.zeros((2 * m, 1)), np.vstack([np.eye(m), -np.eye(m)])]), prog.g])
        h = np.concatenate([np.ones(2 * m), prog.h])
        prog = ConicProgram(prog.c, g, h, 2 * m, (k,))
        a, b = solve(prog, backend="builtin"), solve(prog, backend="cvxopt")
        assert a.status == b.status == OPTIMAL
        assert abs(a.objective - b.objective) < 1e-5


def test_optimal_invariants(rng):
    prog = _psd_program([1.0, 0.0], [np.eye(3), np.diag([1.0, -1, 0])], np.diag([1.0, 2, 3]))
    res = solve(prog)
    assert res.ok
    assert min(prog.min_slack_eigs(res.x)) >= -1e-7
    assert res.gap <= 1e-6 * (1 + abs(res.objective))
    assert res.primal_residual <= 1e-8 + 1e-6


def test_max_iter_is_reported_not_raised():
    prog = _psd_program([1.0], [np.eye(2)], -np.array([[0.0, 1], [1, 0]]))
    res = solve(prog, SolverOptions(max_iter=1))
    assert res.status != OPTIMAL


def test_backend_contract():
    calls = []

    def fake(prog, opts):
        calls.append(prog.n_vars)
        return solve(prog, opts, "builtin")

    register_backend("recording", fake)
    prog = ConicProgram([-1.0], svec(np.eye(2))[:, None], svec(np.diag([1.0, 2.0])), 0, (2,))
    assert solve(prog, backend="recording").ok and calls == [1]
    with pytest.raises(ValueError):
        solve(prog, backend="nope")


def test_shape_validation():
    with pytest.raises(ValueError):
        ConicProgram([1.0], np.zeros((2, 1)), np.zeros(2), 0, (2,))
