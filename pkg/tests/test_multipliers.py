import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from liftcert.errors import DimensionError, IntervalError
from liftcert.lfr import Uncertainty, UncertaintyStructure
from liftcert.lifting import lift
from liftcert.multipliers import (MultiplierSet, check_defining_inequality, data_context,
                                  data_multiplier_noise_free, data_multiplier_noisy,
                                  data_multiplier_unknown_x0, dg_scalings, ellipsoid_x0_multiplier,
                                  known_x0_multiplier, lift_prior, multi_record_context,
                                  multi_record_multiplier, noise_energy_multiplier,
                                  noise_toeplitz_multiplier, skew_basis, sym_basis, toeplitzify)
from liftcert.simulate import DataRecord, NoiseModel, ball_noise, simulate_record

from systems import data_factor, prior_factor, random_delta, random_family_point, random_lfr, square_structure


def test_bases():
    assert len(sym_basis(3)) == 6 and len(skew_basis(3)) == 3
    for e in skew_basis(3):
        assert np.allclose(e, -e.T)


class TestDG:
    def test_scalar_block(self):
        p = dg_scalings(square_structure([1]))
        assert p.n_params == 1
        assert np.allclose(p.value([2.0]), np.diag([2.0, -2.0]))

    def test_parameter_count(self):
        assert dg_scalings(square_structure([1, 1])).n_params == 2
        assert dg_scalings(square_structure([3])).n_params == 6 + 3

    def test_needs_normalized_intervals(self):
        with pytest.raises(IntervalError):
            dg_scalings(UncertaintyStructure(((1, 0.0, 2.0),)))

    def test_boundary_and_interior_values(self):
        p = dg_scalings(square_structure([1]))
        assert abs(check_defining_inequality(p, [1.0], prior_factor(np.array([[1.0]])))) < 1e-10
        assert np.isclose(check_defining_inequality(p, [1.0], prior_factor(np.array([[0.5]]))), -0.75)

    def test_repeated_block_sampling(self, rng):
        u = square_structure([2])
        p = dg_scalings(u)
        for _ in range(200):
            nu = random_family_point(rng, p)
            d = random_delta(rng, u)
            assert check_defining_inequality(p, nu, prior_factor(d)) <= 1e-10

    def test_negative_control(self):
        u = square_structure([2])
        p = dg_scalings(u)
        nu = np.zeros(p.n_params)
        nu[[0, 2]] = 1.0  # D = I, G = 0
        assert check_defining_inequality(p, nu, prior_factor(1.2 * np.eye(2))) > 0


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), t=st.floats(-2.0, 2.0))
def test_affinity(seed, t):
    rng = np.random.default_rng(seed)
    p = dg_scalings(square_structure([2, 1]))
    a, b = rng.standard_normal(p.n_params), rng.standard_normal(p.n_params)
    assert np.allclose(p.value(t * a + (1 - t) * b), t * p.value(a) + (1 - t) * p.value(b))


def test_rescaled_is_reparametrization(rng):
    fam = data_multiplier_noise_free(_ctx(rng)[0])
    new, f = fam.rescaled()
    nu = rng.standard_normal(new.n_params)
    assert np.allclose(new.value(nu), fam.value(nu / f))
    assert np.isclose(np.abs(new.coeffs).max(), 1.0)


def test_rejects_asymmetric_coefficients():
    with pytest.raises(DimensionError):
        MultiplierSet(np.zeros((2, 2)), np.array([[[0, 1], [0, 0.0]]]), np.zeros((0, 0)), np.zeros((1, 0, 0)))


class TestLiftedPrior:
    def test_sigma_one_is_identity(self):
        p = dg_scalings(square_structure([1, 1]))
        assert np.allclose(lift_prior(p, 1).coeffs, p.coeffs)

    def test_factorizes(self, rng):
        u = square_structure([1, 2])
        p = dg_scalings(u)
        lp = lift_prior(p, 3)
        for _ in range(20):
            nu = random_family_point(rng, p)
            d = random_delta(rng, u)
            big = prior_factor(d, 3).T @ lp.value(nu) @ prior_factor(d, 3)
            small = prior_factor(d).T @ p.value(nu) @ prior_factor(d)
            assert np.allclose(big, np.kron(np.eye(3), small), atol=1e-12)

    def test_full_lifted_family_contains_the_kronecker_image(self, rng):
        u = square_structure([1, 1])
        p = dg_scalings(u)
        small, full = lift_prior(p, 2), lift_prior(p, 2, full=True, structure=u)
        assert full.n_params > small.n_params
        nu = random_family_point(rng, p)
        target = small.value(nu)
        # least-squares membership of the Kronecker image in the full family
        basis = full.coeffs.reshape(full.n_params, -1).T
        coef, *_ = np.linalg.lstsq(basis, target.ravel(), rcond=None)
        assert np.allclose(basis @ coef, target.ravel(), atol=1e-10)
        assert full.admissible(coef)

    def test_full_family_is_valid(self, rng):
        u = square_structure([1, 1])
        full = lift_prior(dg_scalings(u), 2, full=True, structure=u)
        for _ in range(50):
            nu = random_family_point(rng, full)
            d = random_delta(rng, u)
            assert check_defining_inequality(full, nu, prior_factor(d, 2)) <= 1e-10


# ---------------------------------------------------------------- data families


def _ctx(rng, h=4, noise=None, x0=None, sys=None):
    sys = sys or random_lfr(rng, n=3, n_w=2, n_z=2, n_y=2)
    u = square_structure([1, 1])
    d = random_delta(rng, u, 0.8)
    x0 = rng.standard_normal(sys.n) if x0 is None else x0
    r = rng.standard_normal((h, sys.n_r))
    n = np.zeros((h, sys.n_n)) if noise is None else ball_noise(rng, h, sys.n_n, noise)
    model = None if noise is None else NoiseModel("per_sample_norm", noise)
    rec = simulate_record(sys, d, x0, r, n, h, noise_model=model)
    lifted = lift(sys, h)
    return data_context(sys, rec, lifted), d, sys, n


class TestNoiseFree:
    def test_exact_zero_at_true_delta(self, rng):
        ctx, d, _, _ = _ctx(rng)
        fam = data_multiplier_noise_free(ctx)
        f = data_factor(ctx.lifted, d)
        for q in (1.0, -1.0):
            assert np.abs(f.T @ fam.value([q]) @ f).max() < 1e-9

    def test_zero_record_gives_zero_family(self, rng):
        sys = random_lfr(rng)
        rec = DataRecord(3, np.zeros(3), np.zeros(3 * sys.n_y), np.zeros(sys.n))
        fam = data_multiplier_noise_free(data_context(sys, rec))
        assert not fam.coeffs.any()

    def test_negative_control_wrong_delta(self, rng):
        ctx, d, _, _ = _ctx(rng)
        fam = data_multiplier_noise_free(ctx)
        wrong = Uncertainty(d.structure, tuple(-v for v in d.values))
        f = data_factor(ctx.lifted, wrong)
        assert max(check_defining_inequality(fam, [q], f) for q in (1.0, -1.0)) > 1e-6

    def test_needs_known_state(self, rng):
        sys = random_lfr(rng)
        rec = DataRecord(2, np.zeros(2), np.zeros(2 * sys.n_y), None)
        with pytest.raises(ValueError):
            data_multiplier_noise_free(data_context(sys, rec))


class TestToeplitz:
    def test_first_column_is_the_vector(self, rng):
        ctx, *_ = _ctx(rng)
        t = toeplitzify(ctx)
        assert t.g_matrix.shape == (ctx.dim, ctx.h)
        assert np.allclose(t.g_matrix[:, 0], ctx.g_matrix[:, 0])

    def test_h_one_matches_plain(self, rng):
        ctx, *_ = _ctx(rng, h=1)
        assert np.allclose(toeplitzify(ctx).g_matrix, ctx.g_matrix)

    def test_residual_at_true_delta(self, rng):
        ctx, d, _, _ = _ctx(rng, h=5)
        t = toeplitzify(ctx)
        assert np.abs(data_factor(ctx.lifted, d).T @ t.g_matrix).max() < 1e-8
        fam = data_multiplier_noise_free(t)
        nu = rng.standard_normal(fam.n_params)
        assert abs(check_defining_inequality(fam, nu, data_factor(ctx.lifted, d))) < 1e-8


class TestUnknownInitialState:
    def test_known_state_recovers_plain_family(self, rng):
        ctx, _, sys, _ = _ctx(rng)
        x = ctx.records[0].x_star
        rec = DataRecord(ctx.h, ctx.records[0].r_star, ctx.records[0].y_star, None)
        plain = data_multiplier_noise_free(ctx)
        ctx_u = data_context(sys, rec, ctx.lifted)
        via = data_multiplier_unknown_x0(ctx_u, known_x0_multiplier(x))
        assert np.allclose(via.value([1.0]), plain.value([1.0]), atol=1e-10)

    def test_zero_prior_is_zero(self, rng):
        ctx, _, sys, _ = _ctx(rng)
        rec = DataRecord(ctx.h, ctx.records[0].r_star, ctx.records[0].y_star, None)
        ctx_u = data_context(sys, rec, ctx.lifted)
        n = ctx.lifted.dims["n"]
        zero = MultiplierSet(np.zeros((n + 1, n + 1)), np.zeros((0, n + 1, n + 1)), np.zeros((0, 0)),
                             np.zeros((0, 0, 0)))
        assert not data_multiplier_unknown_x0(ctx_u, zero).value([]).any()

    def test_ellipsoid_family_one_sided(self, rng):
        for _ in range(20):
            sys = random_lfr(rng, n=3)
            y = np.eye(3) * 2.0
            x0 = rng.standard_normal(3)
            x0 *= 0.7 * np.sqrt(1.0 / (x0 @ y @ x0))
            ctx, d, _, _ = _ctx(rng, sys=sys, x0=x0)
            rec = DataRecord(ctx.h, ctx.records[0].r_star, ctx.records[0].y_star, None)
            fam = data_multiplier_unknown_x0(data_context(sys, rec, ctx.lifted), ellipsoid_x0_multiplier(y, 1.0))
            q = abs(rng.standard_normal()) + 0.1
            assert check_defining_inequality(fam, [q], data_factor(ctx.lifted, d)) <= 1e-8


class TestEllipsoid:
    def test_identity_value(self):
        assert np.allclose(ellipsoid_x0_multiplier(np.eye(2), 1.0).value([1.0]), np.diag([1.0, -1, -1]))

    def test_inside_and_outside(self, rng):
        y = np.diag([1.0, 4.0])
        p = ellipsoid_x0_multiplier(y, 2.0)
        for _ in range(100):
            x = rng.standard_normal(2)
            x *= np.sqrt(2.0 / (x @ y @ x)) * rng.random()
            assert check_defining_inequality(p, [1.0], np.vstack([-x[None], np.eye(2)])) <= 1e-12
        x = np.array([0.0, 1.0]) * np.sqrt(1.1 * 2.0 / 4.0)
        assert check_defining_inequality(p, [1.0], np.vstack([-x[None], np.eye(2)])) > 0

    def test_rejects_indefinite_shape(self):
        with pytest.raises(ValueError):
            ellipsoid_x0_multiplier(np.diag([1.0, -1.0]), 1.0)


class TestNoise:
    def test_energy_family_oracle(self, rng):
        h, nn, eps = 4, 2, 0.3
        p = noise_energy_multiplier(h, nn, eps)
        for _ in range(100):
            n = ball_noise(rng, h, nn, eps).ravel()
            assert check_defining_inequality(p, [1.0], np.vstack([-n[None], np.eye(h * nn)])) <= 1e-12
        n = rng.standard_normal(h * nn)
        n *= np.sqrt(1.5 * h * eps ** 2) / np.linalg.norm(n)
        assert check_defining_inequality(p, [1.0], np.vstack([-n[None], np.eye(h * nn)])) > 0

    def test_toeplitz_h_one_matches_energy(self):
        assert np.allclose(noise_toeplitz_multiplier(1, 2, 0.5).coeffs, noise_energy_multiplier(1, 2, 0.5).coeffs)

    def test_toeplitz_weights(self):
        h, eps = 3, 0.5
        p = noise_toeplitz_multiplier(h, 1, eps)
        val = p.value(np.ones(h))
        # noise row j (0-based, time j) collects every column k whose support reaches it
        assert np.allclose(np.diag(val)[h:], -eps ** 2 * np.array([3, 3 + 2, 3 + 2 + 1]))

    def test_toeplitz_oracle(self, rng):
        from liftcert.kernels import lower_block_toeplitz

        h, nn, eps = 5, 2, 0.2
        p = noise_toeplitz_multiplier(h, nn, eps)
        for _ in range(50):
            n = ball_noise(rng, h, nn, eps)
            t = lower_block_toeplitz(n.reshape(h, nn, 1))
            lam = rng.random(h)
            assert check_defining_inequality(p, lam, np.vstack([-t.T, np.eye(h * nn)])) <= 1e-12

    def test_noisy_family_one_sided(self, rng):
        for _ in range(20):
            ctx, d, _, _ = _ctx(rng, noise=0.2)
            fam = data_multiplier_noisy(toeplitzify(ctx), noise_toeplitz_multiplier(ctx.h, 1, 0.2))
            lam = rng.random(ctx.h)
            assert check_defining_inequality(fam, lam, data_factor(ctx.lifted, d)) <= 1e-8
            fam_e = data_multiplier_noisy(ctx, noise_energy_multiplier(ctx.h, 1, 0.2))
            assert check_defining_inequality(fam_e, [1.0], data_factor(ctx.lifted, d)) <= 1e-8

    def test_noise_free_reduction(self, rng):
        ctx, *_ = _ctx(rng)
        n = ctx.noise_columns.shape[1]
        nstar = np.zeros(n)
        p_n = MultiplierSet(np.zeros((n + 1, n + 1)), np.outer(np.r_[1.0, nstar], np.r_[1.0, nstar])[None],
                            np.zeros((0, 0)), np.zeros((1, 0, 0)))
        assert np.allclose(data_multiplier_noisy(ctx, p_n).value([1.0]),
                           data_multiplier_noise_free(ctx).value([1.0]))


class TestMultiRecord:
    def test_single_record_matches(self, rng):
        ctx, *_ = _ctx(rng)
        assert np.allclose(multi_record_multiplier([ctx]).value([2.0]),
                           data_multiplier_noise_free(ctx).value([2.0]))

    def test_two_records_exact(self, rng):
        sys = random_lfr(rng)
        u = square_structure([1, 1])
        d = random_delta(rng, u)
        lifted = lift(sys, 3)
        ctxs = [data_context(sys, simulate_record(sys, d, rng.standard_normal(sys.n),
                                                  rng.standard_normal((3, 1)), None, 3), lifted)
                for _ in range(2)]
        fam = multi_record_multiplier(ctxs)
        assert fam.n_params == 3
        nu = rng.standard_normal(3)
        assert abs(check_defining_inequality(fam, nu, data_factor(lifted, d))) < 1e-9
        merged = multi_record_context(ctxs)
        assert merged.g_matrix.shape[1] == 2

    def test_full_state_split_records(self, rng):
        # measuring x(k+1) and cutting the record into length-1 pieces yields the
        # classical (X+, X, R) data geometry: g = [-(C_z x + D_zr r); x+ - A x - B_r r]
        base = random_lfr(rng, n=2, n_w=1, n_z=1)
        sys = base.with_blocks(c_y=base.a, d_yw=base.b_w, d_yn=base.b_n, d_yr=base.b_r)
        u = square_structure([1])
        d = random_delta(rng, u)
        rec = simulate_record(sys, d, rng.standard_normal(2), rng.standard_normal((4, 1)), None, 4)
        from liftcert.simulate import split_record

        ys = rec.y_star.reshape(4, 2)
        xs = np.vstack([rec.x_star, ys[:-1]])
        pieces = split_record(rec, 1, states=xs)
        lifted = lift(sys, 1)
        fam = multi_record_multiplier([data_context(sys, p, lifted) for p in pieces])
        cols = [data_context(sys, p, lifted).g_matrix[:, 0] for p in pieces]
        for k, g in enumerate(cols):
            x, xp, r = xs[k], ys[k], rec.r_star[k]
            assert np.allclose(g[1:], xp - sys.a @ x - sys.b_r[:, 0] * r)
        assert abs(check_defining_inequality(fam, rng.standard_normal(fam.n_params), data_factor(lifted, d))) < 1e-9

