"""Scenario, result and trace serialization.

Scenario files are JSON documents with the following keys (SI units):

* ``nodes_free``       int, number of free nodes
* ``boundary_coords``  [[x, y, z], ...] frame-attachment coordinates
* ``edges``            [{"s", "t", "kind", "ea", "l0"}, ...]; boundary-edge
  input indices follow file order
* ``loads_z``          [..] per-free-node vertical loads
* ``r_des``            [[x, y, z], ...] target free-node coordinates
* ``u0``               [..] starting inputs (optional, default zeros)
* ``q_r``              [..] of length 3*nodes_free in x0,y0,z0,x1,... order,
  or a scalar (optional, default 1.0)
* ``control``          {"c_conv", "max_outer", "wolfe_c1", "wolfe_c2"} (optional)
* ``sparse``           {"gamma", "tau", "epsilon", "c_w", "zero_threshold"} (optional)
* ``equilibrium``      {"tol_force", "max_iters"} (optional)
* ``seed``             int (optional, default 0)
* ``u_true``           [..] ground-truth inputs of synthetic scenarios (optional)
* ``noise_sigma``      float (optional, default 0)

Unknown keys are rejected, and every structural invariant of the net is
checked at load time with the offending key path in the error message.
Traces are written as CSV with the fixed column order
``iter,cost,alpha,delta_u_norm,residual_norm,kkt_measure`` and as JSON
(which additionally carries the input-vector snapshots).  Floats are
emitted with Python's shortest round-tripping representation, so
write/parse cycles are exact.
"""

import csv
import json

import numpy as np

from .control import ControlProblem
from .equilibrium import EquilibriumConfig
from .model import CableNet, Edge
from .scenario import Scenario
from .sparse import SparseConfig

TRACE_COLUMNS = ("iter", "cost", "alpha", "delta_u_norm", "residual_norm",
                 "kkt_measure")

_SCENARIO_KEYS = {"nodes_free", "boundary_coords", "edges", "loads_z",
                  "r_des", "u0", "q_r", "control", "sparse", "equilibrium",
                  "seed", "u_true", "noise_sigma"}
_EDGE_KEYS = {"s", "t", "kind", "ea", "l0"}
_CONTROL_KEYS = {"c_conv", "max_outer", "wolfe_c1", "wolfe_c2"}
_SPARSE_KEYS = {"gamma", "tau", "epsilon", "c_w", "zero_threshold"}
_EQ_KEYS = {"tol_force", "max_iters"}


class ScenarioFormatError(ValueError):
    """Scenario document is malformed; message names the key path."""


def _fail(path, msg):
    raise ScenarioFormatError(f"{path}: {msg}")


def _require(doc, key, path):
    if key not in doc:
        _fail(path, f"missing required key {key!r}")
    return doc[key]


def _check_keys(doc, allowed, path):
    unknown = set(doc) - allowed
    if unknown:
        _fail(path, f"unknown key {sorted(unknown)[0]!r}")


def _as_matrix(value, path, width=3):
    arr = np.asarray(value, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != width:
        _fail(path, f"expected a list of {width}-element rows")
    if not np.all(np.isfinite(arr)):
        _fail(path, "contains non-finite values")
    return arr


def _as_vector(value, path, length=None):
    arr = np.asarray(value, dtype=float).reshape(-1)
    if length is not None and arr.size != length:
        _fail(path, f"expected {length} entries, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        _fail(path, "contains non-finite values")
    return arr


def scenario_from_dict(doc):
    if not isinstance(doc, dict):
        raise ScenarioFormatError("scenario document must be a JSON object")
    _check_keys(doc, _SCENARIO_KEYS, "scenario")
    n_free = _require(doc, "nodes_free", "scenario")
    if not isinstance(n_free, int) or n_free < 1:
        _fail("nodes_free", "must be a positive integer")
    boundary = _as_matrix(_require(doc, "boundary_coords", "scenario"),
                          "boundary_coords")
    raw_edges = _require(doc, "edges", "scenario")
    edges = []
    next_input = 0
    for i, e in enumerate(raw_edges):
        path = f"edges[{i}]"
        if not isinstance(e, dict):
            _fail(path, "must be an object")
        _check_keys(e, _EDGE_KEYS, path)
        for key in ("s", "t", "kind", "ea", "l0"):
            _require(e, key, path)
        if e["kind"] not in ("free", "boundary"):
            _fail(f"{path}.kind", f"must be 'free' or 'boundary', got {e['kind']!r}")
        if e["ea"] <= 0:
            _fail(f"{path}.ea", "must be > 0")
        if e["l0"] <= 0:
            _fail(f"{path}.l0", "must be > 0")
        idx = None
        if e["kind"] == "boundary":
            idx = next_input
            next_input += 1
        edges.append(Edge(e["s"], e["t"], e["kind"], e["ea"], e["l0"], idx))
    loads = _as_vector(_require(doc, "loads_z", "scenario"), "loads_z", n_free)
    try:
        net = CableNet(n_free, boundary, edges, loads)
    except ValueError as exc:
        raise ScenarioFormatError(str(exc)) from exc

    r_des = _as_matrix(_require(doc, "r_des", "scenario"), "r_des")
    if r_des.shape[0] != n_free:
        _fail("r_des", f"expected {n_free} rows, got {r_des.shape[0]}")
    u0 = _as_vector(doc.get("u0", np.zeros(net.m_boundary)), "u0",
                    net.m_boundary)
    q_raw = doc.get("q_r", 1.0)
    if np.isscalar(q_raw):
        q_r = float(q_raw)
    else:
        q_r = _as_vector(q_raw, "q_r", 3 * n_free)
    if np.any(np.asarray(q_r) < 0):
        _fail("q_r", "weights must be >= 0")

    ctrl = dict(doc.get("control", {}))
    _check_keys(ctrl, _CONTROL_KEYS, "control")
    sparse = dict(doc.get("sparse", {}))
    _check_keys(sparse, _SPARSE_KEYS, "sparse")
    eq = dict(doc.get("equilibrium", {}))
    _check_keys(eq, _EQ_KEYS, "equilibrium")
    try:
        control = ControlProblem(r_des=r_des, q_r=q_r, **ctrl)
        sparse_cfg = SparseConfig(**sparse)
        eq_cfg = EquilibriumConfig(**eq)
    except ValueError as exc:
        raise ScenarioFormatError(str(exc)) from exc

    u_true = doc.get("u_true")
    if u_true is not None:
        u_true = _as_vector(u_true, "u_true", net.m_boundary)
    return Scenario(net=net, control=control, u0=u0, sparse=sparse_cfg,
                    equilibrium=eq_cfg, u_true=u_true,
                    noise_sigma=float(doc.get("noise_sigma", 0.0)),
                    seed=int(doc.get("seed", 0)))


def scenario_to_dict(s):
    doc = {
        "nodes_free": s.net.n_free,
        "boundary_coords": s.net.boundary_coords.tolist(),
        "edges": [{"s": e.s, "t": e.t, "kind": e.kind, "ea": e.ea, "l0": e.l0}
                  for e in _edges_in_input_order(s.net)],
        "loads_z": s.net.loads_z.tolist(),
        "r_des": s.control.r_des.tolist(),
        "u0": s.u0.tolist(),
        "q_r": s.control.q_r.tolist(),
        "control": {"c_conv": s.control.c_conv,
                    "max_outer": s.control.max_outer,
                    "wolfe_c1": s.control.wolfe_c1,
                    "wolfe_c2": s.control.wolfe_c2},
        "sparse": {"gamma": s.sparse.gamma, "tau": s.sparse.tau,
                   "epsilon": s.sparse.epsilon, "c_w": s.sparse.c_w,
                   "zero_threshold": s.sparse.zero_threshold},
        "equilibrium": {"tol_force": s.equilibrium.tol_force,
                        "max_iters": s.equilibrium.max_iters},
        "seed": s.seed,
        "noise_sigma": s.noise_sigma,
    }
    if s.u_true is not None:
        doc["u_true"] = s.u_true.tolist()
    return doc


def _edges_in_input_order(net):
    """Edges ordered so that boundary file order matches input indices.

    Nets built by the parser or the generators already store boundary edges
    in input order, so their edge list is written unchanged (exact round
    trip); otherwise boundary edges are re-sorted by input index.
    """
    idx = [e.input_index for e in net.edges if e.kind == "boundary"]
    if idx == sorted(idx):
        return net.edges
    free = [e for e in net.edges if e.kind == "free"]
    boundary = sorted((e for e in net.edges if e.kind == "boundary"),
                      key=lambda e: e.input_index)
    return free + boundary


def parse_scenario(path):
    """Load and fully validate a scenario JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioFormatError(f"{path}: invalid JSON ({exc})") from exc
    return scenario_from_dict(doc)


def write_scenario(scenario, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(scenario), fh, indent=1)
        fh.write("\n")


# -- results -----------------------------------------------------------------

def write_result(result, path):
    """Write a result dictionary (plain JSON-compatible types)."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(result, fh, indent=1)
        fh.write("\n")


def read_result(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


# -- traces ------------------------------------------------------------------

def write_trace_csv(trace, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for row in trace.rows:
            writer.writerow([row.iter, repr(row.cost), repr(row.alpha),
                             repr(row.delta_u_norm), repr(row.residual_norm),
                             repr(row.kkt_measure)])


def write_trace_json(trace, path):
    doc = {
        "converged": trace.converged,
        "message": trace.message,
        "rows": [{
            "iter": row.iter,
            "cost": row.cost,
            "alpha": row.alpha,
            "delta_u_norm": row.delta_u_norm,
            "residual_norm": row.residual_norm,
            "kkt_measure": row.kkt_measure,
            "u": np.asarray(row.u).tolist(),
        } for row in trace.rows],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
