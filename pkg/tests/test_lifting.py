import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from liftcert.kernels import lti_response
from liftcert.lfr import LfrSystem, StateSpace, close_loop
from liftcert.lifting import (assumption_monotonic, check_assumption, inclusion_residuals, lift,
                              lifted_uncertainty, split_w_channel)
from liftcert.linalg import blkdiag

from systems import random_delta, random_lfr, square_structure


def simulate(sys, delta, x0, n, r):
    cl = close_loop(sys, delta)
    x_end, out = lti_response(cl.a, cl.b, cl.c, cl.d, x0, np.hstack([n, r]))
    return x_end, out[:, :sys.n_e], out[:, sys.n_e:]


def lifted_step(sys, delta, h, x0, n, r):
    low = lift(sys, h).as_lfr()
    cl = close_loop(low, lifted_uncertainty(delta, h))
    out = cl.c @ x0 + cl.d @ np.concatenate([n.ravel(), r.ravel()])
    return cl.a @ x0 + cl.b @ np.concatenate([n.ravel(), r.ravel()]), out[:h * sys.n_e], out[h * sys.n_e:]


@given(st.integers(0, 10_000), st.integers(1, 7))
@settings(max_examples=40, deadline=None)
def test_one_lifted_step_equals_h_steps(seed, h):
    rng = np.random.default_rng(seed)
    sys = random_lfr(rng, n=3, n_w=2, n_z=2, n_e=2)
    delta = random_delta(rng, square_structure([1, 1]))
    x0 = rng.standard_normal(3)
    n, r = rng.standard_normal((h, 1)), rng.standard_normal((h, 1))
    xs, es, ys = simulate(sys, delta, x0, n, r)
    xl, el, yl = lifted_step(sys, delta, h, x0, n, r)
    assert np.allclose(xs, xl, atol=1e-9)
    assert np.allclose(es.ravel(), el, atol=1e-9)
    assert np.allclose(ys.ravel(), yl, atol=1e-9)


def test_lift_one_is_the_system(rng):
    sys = random_lfr(rng)
    low = lift(sys, 1).as_lfr()
    for name, val in sys.blocks().items():
        assert np.allclose(getattr(low, name), val)


def test_truncate_matches_shorter_lifting(rng):
    sys = random_lfr(rng)
    long, short = lift(sys, 6).truncate(4), lift(sys, 4)
    for key in short.d:
        assert np.allclose(long.d[key], short.d[key])
    for key in short.b:
        assert np.allclose(long.b[key], short.b[key])
    assert np.allclose(long.a_h, short.a_h)


def test_attribute_aliases(rng):
    lifted = lift(random_lfr(rng), 3)
    assert lifted.d_hyw is lifted.d["yw"] and lifted.b_hw is lifted.b["w"]
    with pytest.raises(AttributeError):
        lifted.nonsense


def test_lifted_feedthrough_is_block_toeplitz(rng):
    sys = random_lfr(rng, n=2, n_w=1, n_z=1, n_y=1)
    d = lift(sys, 4).d["yw"]
    assert np.allclose(np.triu(d, 1), 0)
    assert np.allclose(np.diag(d), sys.d_yw[0, 0])
    assert np.isclose(d[2, 0], (sys.c_y @ sys.a @ sys.b_w)[0, 0])


def full_state(rng, n=3, n_w=2):
    # measure x(k+1): C_y = A, D_yw = B_w, D_yr = B_r
    base = random_lfr(rng, n=n, n_w=n_w, n_z=n_w)
    return base.with_blocks(c_y=base.a, d_yw=base.b_w, d_yn=base.b_n, d_yr=base.b_r)


@pytest.mark.parametrize("h", [1, 3, 6])
def test_full_state_measurement_gives_sigma_h(h, rng):
    w = check_assumption(full_state(rng), h, need_error_channel=False)
    assert w is not None and w.sigma == h


def test_witness_solves_the_inclusion(rng):
    sys = full_state(rng)
    h = 4
    lifted = lift(sys, h)
    w = check_assumption(sys, h, need_error_channel=False)
    n_w = sys.n_w
    target = np.hstack([lifted.b["w"][:, (h - w.sigma) * n_w:], np.zeros((sys.n, (h - w.sigma) * n_w))])
    assert np.allclose(w.m @ lifted.d["yw"], target, atol=1e-9)


def test_zero_d_yw_fails_and_names_residual(rng):
    sys = random_lfr(rng).with_blocks(d_yw=np.zeros((2, 2)))
    sys = sys.with_blocks(c_y=np.zeros_like(sys.c_y))
    assert check_assumption(sys, 3) is None
    res_b, _ = inclusion_residuals(sys, 3, 1)
    assert res_b > 1e-3


def test_forced_sigma_out_of_range(rng):
    with pytest.raises(ValueError):
        check_assumption(full_state(rng), 3, sigma=4)


def test_error_channel_inclusion(rng):
    sys = full_state(rng)
    ok = sys.with_blocks(d_ew=np.zeros_like(sys.d_ew))
    w = check_assumption(ok, 3, need_error_channel=True)
    assert w is not None and w.m_d is not None and w.sigma == 3
    lifted = lift(ok, 3)
    assert np.allclose(w.m_d @ lifted.d["yw"], lifted.d["ew"], atol=1e-9)


@given(st.integers(0, 10_000), st.integers(2, 6))
@settings(max_examples=30, deadline=None)
def test_monotone_in_h_and_sigma(seed, h):
    rng = np.random.default_rng(seed)
    sys = full_state(rng)
    w = check_assumption(sys, h)
    assert assumption_monotonic(sys, h, w.sigma)


def test_split_channel_reproduces_loop(rng):
    sys = random_lfr(rng, n=4, n_w=2, n_z=2)
    d = random_delta(rng, square_structure([1, 1])).matrix
    split = split_w_channel(sys, (1, 3))
    a, b = close_loop(sys, d), close_loop(split, blkdiag(d, d))
    for z in (0.3 + 0.9j, -0.8 + 0.1j):
        ta, tb = (StateSpace(*cl).evaluate(z) for cl in (a, b))
        assert np.allclose(ta, tb, atol=1e-10)
    assert split.n_w == 4 and np.allclose(split.b_w[1:, :2], 0)
