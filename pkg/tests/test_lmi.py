import json

import numpy as np
import pytest

from liftcert.errors import Infeasible, InvalidBracket
from liftcert.lfr import LfrSystem, UncertaintyStructure, normalize_intervals, precondition
from liftcert.lifting import check_assumption, lift
from liftcert.lmi import (Certificate, assemble_lemma1, assemble_lemma4, assemble_theorem3,
                          assemble_theorem8, evaluate_margin, min_gamma, solve_problem,
                          verify_certificate, warm_start_from_prior)
from liftcert.multipliers import (data_context, data_multiplier_noise_free, data_multiplier_noisy, dg_scalings,
                                  lift_prior, noise_toeplitz_multiplier, toeplitzify)
from liftcert.pipeline import prepare
from liftcert.simulate import (NoiseModel, ball_noise, delta_grid_oracle, gain_frequency_gridded,
                               simulate_record)

from systems import random_delta, random_lfr, scalar_gain_system, schur, square_structure

ONE = square_structure([1])


def _scalar_loop(a, bw=1.0, cz=1.0):
    return LfrSystem.build([[a]], [[bw]], [[cz]], [[0.0]])


def _nominal_system(rng, n=3):
    """Stable system whose uncertainty channel is disconnected."""
    return LfrSystem.build(schur(rng, n, 0.85), np.zeros((n, 1)), np.zeros((1, n)), [[0.0]],
                           b_n=rng.standard_normal((n, 1)), b_r=rng.standard_normal((n, 1)),
                           c_e=rng.standard_normal((1, n)), d_en=rng.standard_normal((1, 1)),
                           d_er=rng.standard_normal((1, 1)), c_y=np.eye(n), d_yw=np.zeros((n, 1)))


class TestPriorStability:
    def test_stable_decoupled(self):
        cert, _ = solve_problem(assemble_lemma1(_scalar_loop(0.5, 0.0, 0.0), dg_scalings(ONE)))
        assert cert is not None and cert.margin > 0

    def test_marginally_stable(self):
        cert, _ = solve_problem(assemble_lemma1(_scalar_loop(1.0, 0.0, 0.0), dg_scalings(ONE)))
        assert cert is None

    def test_interval_boundary_matches_grid_oracle(self):
        for half, expect in ((1.0, False), (0.3, True)):
            sys, u = normalize_intervals(_scalar_loop(0.5), UncertaintyStructure(((1, -half, half),)))
            rho = max(p.rho for p in delta_grid_oracle(sys, u, None, 41, with_gain=False))
            assert (rho < 1) == expect
            cert, _ = solve_problem(assemble_lemma1(sys, dg_scalings(u)))
            assert (cert is not None) == expect


class TestPriorGain:
    def test_scalar_threshold(self):
        sys, p = scalar_gain_system(0.5), dg_scalings(ONE)
        assert solve_problem(assemble_lemma4(sys, p, 2.05))[0] is not None
        assert solve_problem(assemble_lemma4(sys, p, 1.95))[0] is None
        assert solve_problem(assemble_lemma4(sys, p, 1e4))[0] is not None

    @pytest.mark.parametrize("method", ["bisection", "direct"])
    def test_min_gamma_scalar(self, method):
        sys, p = scalar_gain_system(0.5), dg_scalings(ONE)
        g, cert = min_gamma(lambda gm: assemble_lemma4(sys, p, gm), 1e-4, 1e6, 1e-3, method=method)
        assert abs(g - 2.0) <= 2.0 * 5e-3
        assert cert.gamma == g and cert.kind == "performance"

    def test_direct_route_is_shorter(self):
        sys, p = scalar_gain_system(0.5), dg_scalings(ONE)
        _, c1 = min_gamma(lambda gm: assemble_lemma4(sys, p, gm), method="bisection")
        _, c2 = min_gamma(lambda gm: assemble_lemma4(sys, p, gm), method="direct")
        assert c2.stats["probes"] < c1.stats["probes"]

    def test_matches_gridded_norm_without_uncertainty(self, rng):
        for _ in range(10):
            sys = _nominal_system(rng)
            sys_p, pc = precondition(sys, ONE)
            g, _ = min_gamma(lambda gm: assemble_lemma4(sys_p, dg_scalings(ONE), gm), 1e-4, 1e6, 1e-3,
                             method="direct")
            g *= pc.error_scale
            ref = gain_frequency_gridded(sys, random_delta(rng, ONE), 4000)
            assert ref * (1 - 1e-6) <= g <= ref * 1.01 + 1e-3

    def test_below_gridded_gain_is_infeasible(self, rng):
        sys, u = random_lfr(rng, n=2, n_w=1, n_z=1, scale_w=0.2), ONE
        d = random_delta(rng, u)
        ref = gain_frequency_gridded(sys, d)
        assert solve_problem(assemble_lemma4(sys, dg_scalings(u), 0.98 * ref))[0] is None

    def test_bracket_errors(self):
        sys, p = scalar_gain_system(0.5), dg_scalings(ONE)
        with pytest.raises(InvalidBracket):
            min_gamma(lambda gm: assemble_lemma4(sys, p, gm), 2.0, 1.0)
        with pytest.raises(Infeasible):
            min_gamma(lambda gm: assemble_lemma4(scalar_gain_system(1.0), p, gm), 1e-4, 1e6)

    def test_monotone_feasibility(self, rng):
        done = 0
        while done < 3:
            sys, _ = precondition(random_lfr(rng, n=2, n_w=1, n_z=1, scale_w=0.2), ONE)
            p = dg_scalings(ONE)
            try:
                g, _ = min_gamma(lambda gm: assemble_lemma4(sys, p, gm), rel_tol=1e-2)
            except Infeasible:
                continue
            for f in (1.1, 2.0, 10.0):
                assert solve_problem(assemble_lemma4(sys, p, f * g))[0] is not None
            done += 1


def _data_setup(rng, h=3, n_w=2):
    sys = random_lfr(rng, n=3, n_w=n_w, n_z=n_w, n_y=3, scale_w=0.25)
    u = square_structure([1] * n_w)
    d = random_delta(rng, u, 0.9)
    rec = simulate_record(sys, d, rng.standard_normal(3), rng.standard_normal((h, 1)), None, h)
    lifted = lift(sys, h)
    return sys, u, d, rec, lifted


class TestDataStability:
    def test_warm_start_margin_equals_lifted_prior_test(self, rng):
        for _ in range(3):
            sys, u, _, rec, lifted = _data_setup(rng)
            w = check_assumption(sys, 3, lifted=lifted)
            p = dg_scalings(u)
            cert, _ = solve_problem(assemble_lemma1(sys, p))
            if cert is None:
                continue
            fam = data_multiplier_noise_free(data_context(sys, rec, lifted))
            start = warm_start_from_prior(cert, w.sigma, fam.n_params)
            assert not start["PD"].any()
            p_hat = lift_prior(p, w.sigma)
            with_data = evaluate_margin(assemble_theorem3(lifted, w, p_hat, fam), start)
            without = evaluate_margin(assemble_theorem3(lifted, w, p_hat, None), start)
            assert abs(with_data - without) < 1e-8
            assert with_data >= -1e-9

    def test_data_dominance(self, rng):
        for _ in range(3):
            sys, u, _, rec, lifted = _data_setup(rng)
            w = check_assumption(sys, 3, lifted=lifted)
            p_hat = lift_prior(dg_scalings(u), w.sigma)
            fam = data_multiplier_noise_free(data_context(sys, rec, lifted))
            _, r0 = solve_problem(assemble_theorem3(lifted, w, p_hat, None))
            _, r1 = solve_problem(assemble_theorem3(lifted, w, p_hat, fam))
            assert -r1.objective >= -r0.objective - 1e-7

    def test_soundness_on_compatible_grid(self, rng):
        # noisy records leave a whole region of the box compatible with the data
        checked = 0
        h, eps = 4, 0.3
        u = square_structure([1, 1])
        for _ in range(8):
            sys = random_lfr(rng, n=3, n_w=2, n_z=2, n_y=2, n_n=2, scale_w=0.2, feedthrough=False)
            sys = sys.with_blocks(d_yn=np.eye(2), b_n=np.zeros((3, 2)))
            rec = simulate_record(sys, random_delta(rng, u, 0.9), rng.standard_normal(3),
                                  rng.standard_normal((h, 1)), ball_noise(rng, h, 2, eps / 2), h,
                                  noise_model=NoiseModel("per_sample_norm", eps))
            sp, recs, _ = prepare(sys, u, [rec])
            lifted = lift(sp, h)
            w = check_assumption(sp, h, lifted=lifted)
            fam = data_multiplier_noisy(toeplitzify(data_context(sp, recs[0], lifted)),
                                        noise_toeplitz_multiplier(h, 2, eps))
            cert, _ = solve_problem(assemble_theorem3(lifted, w, lift_prior(dg_scalings(u), w.sigma), fam))
            if cert is None:
                continue
            pts = delta_grid_oracle(sys, u, rec, 20, tol=1e-6, with_gain=False)
            assert all(p.rho < 1 for p in pts if p.compatible)
            checked += 1
        assert checked


class TestDataGain:
    def test_reduces_to_prior_gain_at_h_one(self, rng):
        sys = random_lfr(rng, n=2, n_w=1, n_z=1, n_y=2, scale_w=0.2)
        lifted = lift(sys, 1)
        w = check_assumption(sys, 1, True, lifted=lifted)
        p = dg_scalings(ONE)
        g4, _ = min_gamma(lambda gm: assemble_lemma4(sys, p, gm), rel_tol=1e-3)
        g8, _ = min_gamma(lambda gm: assemble_theorem8(lifted, w, lift_prior(p, 1), None, gm), rel_tol=1e-3)
        assert abs(g4 - g8) <= 2e-3 * g4

    def test_lifted_bound_dominates_true_gain(self, rng):
        hits = 0
        for _ in range(10):
            sys, u, d, rec, lifted = _data_setup(rng, h=2, n_w=1)
            w = check_assumption(sys, 2, True, lifted=lifted)
            if w is None:
                continue
            fam = data_multiplier_noise_free(data_context(sys, rec, lifted))
            try:
                g, _ = min_gamma(lambda gm: assemble_theorem8(lifted, w, lift_prior(dg_scalings(u), w.sigma),
                                                              fam, gm), rel_tol=1e-3, method="direct")
            except Infeasible:
                continue
            assert g >= gain_frequency_gridded(sys, d) * (1 - 1e-6) - 1e-6
            hits += 1
        assert hits >= 5


class TestVerification:
    def _cert(self):
        prob = assemble_lemma4(scalar_gain_system(0.5), dg_scalings(ONE), 3.0)
        cert, _ = solve_problem(prob, "performance")
        return cert, prob

    def test_pass(self):
        cert, prob = self._cert()
        assert verify_certificate(cert, prob).passed and cert.stats["verified"]

    def test_indefinite_x_fails(self):
        cert, prob = self._cert()
        bad = Certificate(cert.kind, dict(cert.point, X=-cert.point["X"]), cert.margin)
        rep = verify_certificate(bad, prob)
        assert not rep.passed and "X" in rep.failures

    def test_missing_variable(self):
        cert, prob = self._cert()
        pt = dict(cert.point)
        pt.pop("X")
        assert not verify_certificate(Certificate(cert.kind, pt, cert.margin), prob).passed

    def test_json_round_trip(self):
        cert, prob = self._cert()
        back = Certificate.from_dict(json.loads(cert.to_json()))
        assert back.to_json() == cert.to_json()
        assert verify_certificate(back, prob) == verify_certificate(cert, prob)

    def test_accessors(self):
        cert, _ = self._cert()
        assert cert.x_var.shape == (1, 1) and cert.x_var[0, 0] > 0
        assert cert.prior_params.size == 1 and cert.data_params.size == 0
