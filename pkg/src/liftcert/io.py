"""JSON model, data and report files.

Matrices are nested row-major arrays.  Every block is checked against the
channel sizes before any numerics run; errors name the offending block.

Model file layout::

    {
      "system": {"a": [[...]], "b_w": [[...]], "c_z": [[...]], ...,
                 "dims": {"x": 4, "w": 2, "n": 1, ...}},
      "uncertainty": [{"repetition": 2, "lower": -1, "upper": 1}, ...],
      "controller": {"a": ..., "b": ..., "c": ..., "d": ...,
                     "u_cols": [1], "m_rows": [2], "keep_measurement": false},
      "weights": {"w_n": {...}, "w_r": {...}, "w_e": {...}},
      "sampling": {"ts": 0.05},
      "analysis": {"h": 10, "sigma": null, "eps": 0.1, "gamma_lo": 1e-4,
                   "gamma_hi": 1e6, "rel_tol": 1e-3, "tol_kernel": 1e-8,
                   "toeplitz": true, "multi_record": false,
                   "unknown_x0": {"Y": [[...]], "kappa": 1.0}}
    }

With ``sampling`` present the system blocks are continuous time and are
sampled with a zero-order hold before the (discrete) controller is
attached.  Intervals that are not ``[-1, 1]`` are normalized on load.
Missing blocks are zero; ``dims`` (state ``x`` and channels ``w, n, r, z,
e, y``) is only needed for channels no block mentions.
"""

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from .errors import DimensionError, InputError, LiftCertError
from .lfr import (LfrSystem, StateSpace, UncertaintyStructure, connect_controller, discretize_lfr,
                  normalize_intervals)
from .simulate import DataRecord, NoiseModel

__all__ = [
    "Model",
    "load_model",
    "parse_model",
    "model_to_dict",
    "load_record",
    "parse_record",
    "record_to_dict",
    "save_record",
    "dumps",
    "digest",
]

_SYSTEM_KEYS = ("a", "b_w", "b_n", "b_r", "c_z", "c_e", "c_y", "d_zw", "d_zn", "d_zr",
                "d_ew", "d_en", "d_er", "d_yw", "d_yn", "d_yr")
_ANALYSIS_KEYS = {"h", "sigma", "eps", "gamma_lo", "gamma_hi", "rel_tol", "tol_kernel", "toeplitz",
                  "multi_record", "unknown_x0", "multiplier", "split_records", "h_range"}


@dataclass
class Model:
    """A loaded model: the (discrete, normalized) loop and its analysis settings."""

    system: LfrSystem
    structure: UncertaintyStructure
    physical: UncertaintyStructure
    analysis: Dict[str, Any] = field(default_factory=dict)
    source: Optional[dict] = None


def _matrix(block: str, value) -> np.ndarray:
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InputError(f"block {block!r} is not a numeric array: {exc}") from None
    if arr.ndim == 1 and arr.size == 0:
        arr = arr.reshape(0, 0)
    if arr.ndim != 2:
        raise InputError(f"block {block!r} must be a 2-D nested array, got {arr.ndim} dimensions")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"block {block!r} contains non-finite entries")
    return arr


def _shape_of(name: str, dims: Dict[str, int]):
    """Expected shape of a system block; ``x`` is the state, letters are channels."""
    if name == "a":
        return dims["x"], dims["x"]
    if name.startswith("b_"):
        return dims["x"], dims[name[2]]
    if name.startswith("c_"):
        return dims[name[2]], dims["x"]
    return dims[name[2]], dims[name[3]]


def _block_axes(name: str):
    if name == "a":
        return "x", "x"
    if name.startswith("b_"):
        return "x", name[2]
    if name.startswith("c_"):
        return name[2], "x"
    return name[2], name[3]


def _infer_dims(blocks: Dict[str, np.ndarray], declared: Dict[str, int]) -> Dict[str, int]:
    dims = dict(declared)
    for name, arr in blocks.items():
        for ch, size in zip(_block_axes(name), arr.shape):
            if ch in dims and dims[ch] != size:
                what = "state size" if ch == "x" else f"{ch}-channel width"
                raise InputError(f"block {name!r} has shape {arr.shape}, inconsistent with {what} {dims[ch]}")
            dims[ch] = size
    if "x" not in dims:
        raise InputError("block 'a' (or dims.x) is missing")
    for ch in "wnrzey":
        dims.setdefault(ch, 0)
    return dims


def _system(doc: dict) -> LfrSystem:
    if not isinstance(doc, dict):
        raise InputError("section 'system' must be an object")
    unknown = set(doc) - set(_SYSTEM_KEYS) - {"dims"}
    if unknown:
        raise InputError(f"unknown system blocks: {sorted(unknown)}")
    blocks = {k: _matrix(k, v) for k, v in doc.items() if k in _SYSTEM_KEYS}
    declared = doc.get("dims", {})
    if not isinstance(declared, dict) or set(declared) - set("xwnrzey"):
        raise InputError("system.dims must map a subset of x, w, n, r, z, e, y to sizes")
    declared = {k: int(v) for k, v in declared.items()}
    dims = _infer_dims(blocks, declared)
    full = {}
    for name in _SYSTEM_KEYS:
        shape = _shape_of(name, dims)
        full[name] = blocks.get(name, np.zeros(shape))
    return LfrSystem(**full)


def _structure(doc) -> UncertaintyStructure:
    if not isinstance(doc, list) or not doc:
        raise InputError("section 'uncertainty' must be a non-empty list of blocks")
    blocks = []
    for j, blk in enumerate(doc):
        try:
            blocks.append((int(blk["repetition"]), float(blk["lower"]), float(blk["upper"])))
        except (KeyError, TypeError, ValueError):
            raise InputError(f"uncertainty block {j} needs numeric 'repetition', 'lower', 'upper'") from None
    try:
        return UncertaintyStructure(tuple(blocks))
    except LiftCertError as exc:
        raise InputError(f"uncertainty: {exc}") from None


def _state_space(name: str, doc: dict) -> StateSpace:
    if not isinstance(doc, dict) or "d" not in doc:
        raise InputError(f"{name} needs at least a 'd' block")
    d = _matrix(f"{name}.d", doc["d"])
    nx = np.array(doc.get("a", []), dtype=float).shape[0] if doc.get("a") else 0
    a = _matrix(f"{name}.a", doc["a"]) if nx else np.zeros((0, 0))
    b = _matrix(f"{name}.b", doc["b"]) if nx else np.zeros((0, d.shape[1]))
    c = _matrix(f"{name}.c", doc["c"]) if nx else np.zeros((d.shape[0], 0))
    for part, arr, shape in (("a", a, (nx, nx)), ("b", b, (nx, d.shape[1])), ("c", c, (d.shape[0], nx))):
        if arr.shape != shape:
            raise InputError(f"block '{name}.{part}' has shape {arr.shape}, expected {shape}")
    return StateSpace(a, b, c, d)


def parse_model(doc: dict) -> Model:
    """Validate a model document and build the discrete normalized loop."""
    if not isinstance(doc, dict):
        raise InputError("model file must contain a JSON object")
    for key in ("system", "uncertainty"):
        if key not in doc:
            raise InputError(f"model file lacks the {key!r} section")
    sys = _system(doc["system"])
    unc = _structure(doc["uncertainty"])
    if unc.size != sys.n_w or unc.size != sys.n_z:
        raise InputError(f"uncertainty has total size {unc.size} but b_w has {sys.n_w} columns "
                         f"and c_z has {sys.n_z} rows")
    ts = doc.get("sampling", {}).get("ts") if isinstance(doc.get("sampling"), dict) else None
    if ts is not None:
        sys = discretize_lfr(sys, float(ts))
    if "controller" in doc:
        k = dict(doc["controller"])
        ctrl = _state_space("controller", k)
        weights = doc.get("weights", {}) or {}
        w = {key: _state_space(f"weights.{key}", weights[key]) for key in ("w_n", "w_r", "w_e")
             if key in weights}
        try:
            sys = connect_controller(sys, ctrl, u_cols=k.get("u_cols", []), m_rows=k.get("m_rows", []),
                                     keep_measurement=bool(k.get("keep_measurement", False)), **w)
        except (DimensionError, IndexError) as exc:
            raise InputError(f"controller: {exc}") from None
    analysis = dict(doc.get("analysis", {}) or {})
    unknown = set(analysis) - _ANALYSIS_KEYS
    if unknown:
        raise InputError(f"unknown analysis settings: {sorted(unknown)}")
    sys_n, unc_n = normalize_intervals(sys, unc)
    return Model(sys_n, unc_n, unc, analysis, doc)


def load_model(path: Union[str, Path]) -> Model:
    return parse_model(_read_json(path))


def model_to_dict(sys: LfrSystem, unc: UncertaintyStructure, analysis: Optional[dict] = None) -> dict:
    """Model document of an already discrete loop (no controller section)."""
    out = {
        "system": {k: np.asarray(getattr(sys, k)).tolist() for k in _SYSTEM_KEYS},
        "uncertainty": [{"repetition": r, "lower": lo, "upper": hi} for r, lo, hi in unc.blocks],
    }
    out["system"]["dims"] = {"x": sys.n, "w": sys.n_w, "n": sys.n_n, "r": sys.n_r, "z": sys.n_z,
                             "e": sys.n_e, "y": sys.n_y}
    if analysis:
        out["analysis"] = dict(analysis)
    return out


# ------------------------------------------------------------------- records


def parse_record(doc: dict) -> DataRecord:
    if not isinstance(doc, dict):
        raise InputError("data file must contain a JSON object")
    try:
        r = np.array(doc["r"], dtype=float)
        y = np.array(doc["y"], dtype=float)
    except KeyError as exc:
        raise InputError(f"data file lacks the {exc.args[0]!r} signal") from None
    except (TypeError, ValueError):
        raise InputError("signals 'r' and 'y' must be numeric arrays (one row per sample)") from None
    if r.ndim != 2 or y.ndim != 2:
        raise InputError("signals 'r' and 'y' must be 2-D: one row per sample")
    if r.shape[0] != y.shape[0]:
        raise InputError(f"'r' has {r.shape[0]} samples but 'y' has {y.shape[0]}")
    h = int(doc.get("h", r.shape[0]))
    if h != r.shape[0]:
        raise InputError(f"declared h={h} but the signals have {r.shape[0]} samples")
    x0 = doc.get("x0")
    noise = doc.get("noise")
    model = None
    if noise:
        try:
            model = NoiseModel(str(noise["kind"]), float(noise["eps"]))
        except (KeyError, ValueError) as exc:
            raise InputError(f"noise block: {exc}") from None
    return DataRecord(h, r.ravel(), y.ravel(), None if x0 is None else np.array(x0, dtype=float),
                      model, dict(doc.get("provenance", {})))


def record_to_dict(rec: DataRecord) -> dict:
    return {
        "h": rec.h,
        "x0": None if rec.x_star is None else rec.x_star.tolist(),
        "r": rec.r_star.reshape(rec.h, rec.n_r).tolist(),
        "y": rec.y_star.reshape(rec.h, rec.n_y).tolist(),
        "noise": None if rec.noise_model is None else {"kind": rec.noise_model.kind,
                                                       "eps": rec.noise_model.eps},
        "provenance": _plain(rec.provenance),
    }


def load_record(path: Union[str, Path]) -> DataRecord:
    return parse_record(_read_json(path))


def save_record(rec: DataRecord, path: Union[str, Path]) -> None:
    Path(path).write_text(dumps(record_to_dict(rec)))


# ------------------------------------------------------------------- helpers


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise InputError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        obj = float(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return None if np.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def dumps(obj) -> str:
    """Deterministic JSON text (sorted keys, fixed float repr)."""
    return json.dumps(_plain(obj), sort_keys=True, indent=1) + "\n"


def digest(obj) -> str:
    """SHA-256 of the canonical JSON form of ``obj`` (or of raw bytes/text)."""
    if isinstance(obj, bytes):
        data = obj
    elif isinstance(obj, str):
        data = obj.encode()
    else:
        data = json.dumps(_plain(obj), sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(data).hexdigest()
