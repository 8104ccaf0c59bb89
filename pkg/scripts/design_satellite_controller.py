"""Design the bundled satellite controller and write it as package data.

Observer-based state feedback with an integrator on ``m = r - v``.  The
LQR and Kalman weights are parametrized by ``THETA`` (log-scale entries);
the values below were tuned offline by Nelder-Mead on the logarithm of the
prior-only DG gain bound, so the controller is robust on the whole
parameter box rather than only at the nominal plant.

    python scripts/design_satellite_controller.py [--check]
"""

import argparse
import json
from pathlib import Path

import numpy as np
import scipy.linalg

from liftcert.satellite import nominal_plant

OUT = Path(__file__).resolve().parents[1] / "src" / "liftcert" / "data" / "satellite_controller.json"

# q_diag (5, log), relative-mode penalty (log), input weight (log),
# process noise diag (4, log), measurement noise (log)
THETA = [13.6268, 1.6744, 10.2614, 3.7431, 6.3938, -14.1869, 2.7849, 1.1716, 0.2625, -0.1081, -1.4758, -0.1531]


def design(theta=THETA):
    th = np.asarray(theta, dtype=float)
    a, b, c = nominal_plant()
    n = a.shape[0]
    q = np.diag(np.exp(th[:5]))
    # penalize the relative motion of the two bodies
    rel = np.array([[-1.0, 0, 1, 0, 0], [0, -1, 0, 1, 0]])
    q = q + np.exp(th[5]) * rel.T @ rel
    r_u = np.exp(th[6]) * np.eye(1)
    # integrator q+ = q + (r - v), regulated with r = 0
    a_aug = np.block([[a, np.zeros((n, 1))], [-c, np.ones((1, 1))]])
    b_aug = np.vstack([b, [[0.0]]])
    p = scipy.linalg.solve_discrete_are(a_aug, b_aug, q, r_u)
    k = np.linalg.solve(r_u + b_aug.T @ p @ b_aug, b_aug.T @ p @ a_aug)
    k_x, k_q = k[:, :n], k[:, n:]
    # predictor observer driven by v - r = -m
    w_proc, v_meas = np.diag(np.exp(th[7:11])), np.exp(th[11]) * np.eye(1)
    pe = scipy.linalg.solve_discrete_are(a.T, c.T, w_proc, v_meas)
    l_gain = np.linalg.solve(v_meas + c @ pe @ c.T, c @ pe @ a.T).T
    a_k = np.block([[a - b @ k_x - l_gain @ c, -b @ k_q], [np.zeros((1, n)), np.ones((1, 1))]])
    b_k = np.vstack([-l_gain, [[1.0]]])
    c_k = -np.hstack([k_x, k_q])
    d_k = np.zeros((1, 1))
    return a_k, b_k, c_k, d_k


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--check", action="store_true", help="compare with the bundled file instead of writing")
    args = ap.parse_args(argv)
    a, b, c, d = design()
    doc = {"description": "observer-based controller with integral action, input r - v, output u",
           "ts": 0.05, "theta": list(THETA),
           "a": a.tolist(), "b": b.tolist(), "c": c.tolist(), "d": d.tolist()}
    if args.check:
        old = json.loads(OUT.read_text())
        diff = max(np.max(np.abs(np.array(old[k]) - np.array(doc[k]))) for k in "abcd")
        print(f"max deviation from bundled controller: {diff:.3e}")
        return 0 if diff < 1e-10 else 1
    OUT.write_text(json.dumps(doc, indent=1) + "\n")
    print(f"wrote {OUT}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
