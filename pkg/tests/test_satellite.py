import numpy as np
import pytest

from liftcert.lifting import check_assumption
from liftcert.pipeline import AnalysisOptions, data_gain, prior_gain, prepare
from liftcert.satellite import (B_TRUE, K_TRUE, TS, error_weight, example_record, load_controller,
                                nominal_plant, open_plant, satellite_loop)
from liftcert.simulate import compatibility_residual, gain_frequency_gridded, spectral_radius_closed


@pytest.fixture(scope="module")
def loop():
    return satellite_loop()


@pytest.fixture(scope="module")
def prior(loop):
    return prior_gain(loop.system, loop.structure)


def test_open_plant_shapes():
    plant, unc = open_plant()
    assert plant.n == 4 and plant.n_w == 2 and plant.n_r == 2 and plant.n_y == 3
    assert unc.blocks == ((1, 0.08, 0.12), (1, 0.0034, 0.02))


def test_error_weight_has_integrator():
    w = error_weight()
    z = np.exp(1j * 0.3)
    val = (w.c @ np.linalg.solve(z * np.eye(1) - w.a, w.b) + w.d)[0, 0]
    assert np.isclose(val, (z - 0.9567) / (2 * z - 2))
    assert np.allclose(w.a, 1.0)


def test_nominal_plant_is_sampled():
    a, b, c = nominal_plant()
    assert a.shape == (4, 4) and b.shape == (4, 1)
    assert np.all(np.abs(np.linalg.eigvals(a)) <= 1 + 1e-9)


def test_controller_has_integral_action():
    k = load_controller()
    assert np.any(np.isclose(np.linalg.eigvals(k.a), 1.0, atol=1e-9))


def test_loop_is_robustly_stable_on_grid(loop):
    rho = max(spectral_radius_closed(loop.system, loop.physical_delta(k, b))
              for k in np.linspace(0.08, 0.12, 6) for b in np.linspace(0.0034, 0.02, 6))
    assert rho < 1
    assert loop.structure.is_normalized()
    assert np.allclose(loop.physical_delta(K_TRUE, B_TRUE).values, loop.delta_true.values)


def test_records_are_prefixes_and_compatible(loop):
    long, short = example_record(loop, 20, 0.05), example_record(loop, 10, 0.05)
    assert np.allclose(long.y_star[: short.y_star.size], short.y_star)
    assert compatibility_residual(loop.system, short, loop.delta_true) <= 1e-9
    assert example_record(loop, 10, 0.05).y_star.tobytes() == short.y_star.tobytes()
    assert short.noise_model.eps == 0.05 and TS == 0.05


def test_sigma_is_h_minus_one(loop):
    sys, _, _ = prepare(loop.system, loop.structure)
    for h in (5, 10):
        assert check_assumption(sys, h, True).sigma == h - 1


def test_prior_bound_exceeds_true_gain(loop, prior):
    true = gain_frequency_gridded(loop.system, loop.delta_true)
    assert prior.certified and prior.certificate.stats["verified"]
    assert prior.gamma > true


@pytest.mark.slow
@pytest.mark.parametrize("eps", [0.1, None])
def test_data_dominates_prior(loop, prior, eps):
    rec = example_record(loop, 10, eps)
    res = data_gain(loop.system, loop.structure, [rec], AnalysisOptions(), prior=prior)
    true = gain_frequency_gridded(loop.system, loop.delta_true)
    assert res.certified and res.certificate.stats["verified"]
    assert res.gamma <= prior.gamma * (1 + AnalysisOptions().rel_tol)
    assert res.gamma >= true * (1 - 1e-3)
    # the lifted prior certificate is feasible for the data test at the prior gain
    margin = float(res.notes[0].split(":")[1])
    assert margin >= 0
