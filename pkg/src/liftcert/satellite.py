"""Flexible-satellite tracking loop used as the worked example.

The loop is the usual weighted tracking configuration: the controller sees
``r - v``, the weighted errors are ``W_e (r - v)`` and ``W_u u``, and the
disturbances are the torque noise ``W_n n`` and the reference ``W_r r``.
Spring constant and damping are interval uncertainties.  The controller is
a fixed observer-based design with integral action, bundled as data (see
``scripts/design_satellite_controller.py``).
"""

import json
from dataclasses import dataclass
from importlib import resources
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .lfr import (LfrSystem, StateSpace, Uncertainty, UncertaintyStructure, connect_controller,
                  controllable_part, discretize_lfr, normalize_intervals, satellite_lfr,
                  to_normalized_values, zoh_discretize)
from .simulate import DataRecord, NoiseModel, ball_noise, reference_signal, simulate_record

__all__ = [
    "TS",
    "K_TRUE",
    "B_TRUE",
    "K_DESIGN",
    "B_DESIGN",
    "W_N",
    "W_U",
    "W_E_ZERO",
    "HORIZONS",
    "EPSILONS",
    "SatelliteLoop",
    "open_plant",
    "error_weight",
    "nominal_plant",
    "load_controller",
    "physical_loop",
    "model_document",
    "satellite_loop",
    "example_record",
]

TS = 0.05
K_TRUE, B_TRUE = 0.091, 0.0036
K_DESIGN, B_DESIGN = 0.1, 0.0117
W_N, W_U, W_R = 0.4, 0.1, 1.0
W_E_ZERO = 0.9567
HORIZONS = (10, 15, 20, 30, 40)
EPSILONS = (0.1, 0.05, 0.01)
DEFAULT_SEED = 20230323


def open_plant(ts: float = TS) -> Tuple[LfrSystem, UncertaintyStructure]:
    """Sampled generalized plant before the controller is attached.

    r-channel inputs ``(r, u)``; e outputs ``(r - v, W_u u)`` (``W_e`` is
    attached later); y outputs ``(r, v, r - v)``, the last one being the
    controller input.
    """
    sat, unc = satellite_lfr()
    n = sat.n
    b_u = sat.b_r
    c_v = sat.c_y
    plant = LfrSystem.build(
        sat.a, sat.b_w, sat.c_z, sat.d_zw,
        b_n=sat.b_n,
        b_r=np.hstack([np.zeros((n, 1)), b_u]),
        c_e=np.vstack([-c_v, np.zeros((1, n))]),
        d_er=np.array([[1.0, 0.0], [0.0, W_U]]),
        c_y=np.vstack([np.zeros((1, n)), c_v, -c_v]),
        d_yr=np.array([[1.0, 0.0], [0.0, 0.0], [1.0, 0.0]]),
    )
    return discretize_lfr(plant, ts), unc


def error_weight(zero: float = W_E_ZERO) -> StateSpace:
    """``W_e(z) = (z - zero) / (2 z - 2)`` as ``s+ = s + m``, ``out = (1 - zero)/2 s + m/2``."""
    return StateSpace([[1.0]], [[1.0]], [[0.5 * (1.0 - zero)]], [[0.5]])


def nominal_plant(k: float = K_DESIGN, b: float = B_DESIGN, ts: float = TS):
    """``(A, B_u, C_v)`` of the sampled plant with the uncertainty fixed at ``(k, b)``."""
    sat, _ = satellite_lfr()
    a = sat.a + sat.b_w @ np.diag([k, b]) @ sat.c_z
    a_d, b_d = zoh_discretize(a, sat.b_r, ts)
    return a_d, b_d, sat.c_y


def load_controller() -> StateSpace:
    """The bundled controller (input ``r - v``, output ``u``)."""
    text = resources.files("liftcert").joinpath("data/satellite_controller.json").read_text()
    d = json.loads(text)
    return StateSpace(np.array(d["a"]), np.array(d["b"]), np.array(d["c"]), np.array(d["d"]))


@dataclass(frozen=True)
class SatelliteLoop:
    """Closed loop in normalized coordinates with the physical truth attached."""

    system: LfrSystem
    structure: UncertaintyStructure
    physical: UncertaintyStructure
    delta_true: Uncertainty
    delta_design: Uncertainty

    def physical_delta(self, k: float, b: float) -> Uncertainty:
        return Uncertainty(self.structure, tuple(to_normalized_values(self.physical, (k, b))))


def physical_loop(controller: Optional[StateSpace] = None, ts: float = TS):
    """Closed weighted loop in physical parameter units, unreachable modes removed.

    Disturbances are ``d = (n~, r)`` with ``n = W_n n~``; measured outputs are
    ``y = (r, v)``.  Returns ``(system, physical intervals)``.
    """
    plant, unc = open_plant(ts)
    k = controller if controller is not None else load_controller()
    w_e = StateSpace.append(error_weight(), StateSpace.static([[1.0]]))
    loop = connect_controller(plant, k, u_cols=[1], m_rows=[2], keep_measurement=False,
                              w_n=StateSpace.static([[W_N]]), w_r=StateSpace.static([[W_R]]), w_e=w_e)
    return controllable_part(loop), unc


def model_document(controller: Optional[StateSpace] = None, ts: float = TS, analysis=None) -> dict:
    """Model file contents (see :mod:`liftcert.io`) for the satellite loop."""
    from .io import model_to_dict

    loop, unc = physical_loop(controller, ts)
    return model_to_dict(loop, unc, analysis if analysis is not None else {"h": 10})


def satellite_loop(controller: Optional[StateSpace] = None, ts: float = TS) -> SatelliteLoop:
    """The loop of :func:`physical_loop` with intervals normalized to [-1, 1]."""
    loop, unc = physical_loop(controller, ts)
    sys_n, unc_n = normalize_intervals(loop, unc)
    true = Uncertainty(unc_n, tuple(to_normalized_values(unc, (K_TRUE, B_TRUE))))
    design = Uncertainty(unc_n, tuple(to_normalized_values(unc, (K_DESIGN, B_DESIGN))))
    return SatelliteLoop(sys_n, unc_n, unc, true, design)


def example_record(loop: SatelliteLoop, h: int, eps: Optional[float], seed: int = DEFAULT_SEED,
                   noise_scale: float = 1.0) -> DataRecord:
    """Zero-initialized experiment with the piecewise-constant reference.

    The noise ``n~(k)`` is drawn uniformly from the unit ball (fixed seed) and
    scaled by ``noise_scale * eps``, so records for different ``eps`` and
    ``h`` share one noise shape and shorter records are prefixes of longer
    ones.  ``eps=None`` gives a noise-free record.
    """
    sys = loop.system
    h_max = max(int(h), max(HORIZONS))
    r = reference_signal(h_max, TS)
    rng = np.random.default_rng(seed)
    shape = ball_noise(rng, h_max, sys.n_n, 1.0)
    if eps is None:
        n, model = np.zeros((h_max, sys.n_n)), None
    else:
        n, model = noise_scale * eps * shape, NoiseModel("per_sample_norm", float(eps))
    prov = {"seed": int(seed), "delta_true": list(loop.delta_true.values), "eps": eps,
            "noise_scale": noise_scale, "reference": "3 on [0,1), -2 on [1.5,3)", "ts": TS}
    rec = simulate_record(sys, loop.delta_true, np.zeros(sys.n), r[:, None], n, h_max,
                          noise_model=model, provenance=prov)
    return rec.with_horizon(int(h))
