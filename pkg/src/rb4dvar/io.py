"""Artifact serialization: model dumps, trained bases, CSV tables.

All writes are atomic (temp file in the target directory + os.replace)
so interrupted runs never leave half-written artifacts.  Floating-point
CSV fields use the %.17g round-trip format, which makes repeated runs
byte-comparable.
"""

import csv
import hashlib
import io as _io
import json
import os
import tempfile

import numpy as np
import scipy.sparse as sp

from .basis import ReducedBasis
from .certification import Constants
from .errors import ConfigurationError
from .fem import AffineOperator, FullOrderModel
from .greedy import GreedyIterationRecord, GreedyResult
from .mesh import Mesh

FORMAT_VERSION = 1


def config_hash(cfg_dict):
    """Stable sha256 of a configuration (canonical JSON serialization)."""
    blob = json.dumps(cfg_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _atomic_write_bytes(path, payload):
    d = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    _atomic_write_bytes(path, text.encode())


def save_npz_atomic(path, **arrays):
    buf = _io.BytesIO()
    np.savez_compressed(buf, **arrays)
    _atomic_write_bytes(path, buf.getvalue())


def _load_npz(path):
    try:
        return np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise ConfigurationError(f"cannot read artifact {path}: {exc}",
                                 path=path) from exc


def _check_version(z, path):
    v = int(z["format_version"])
    if v != FORMAT_VERSION:
        raise ConfigurationError(
            f"artifact format version {v} unsupported (expected "
            f"{FORMAT_VERSION})", path=path)


def _csr_fields(name, mat):
    m = sp.csr_matrix(mat)
    return {f"{name}_data": m.data, f"{name}_indices": m.indices,
            f"{name}_indptr": m.indptr, f"{name}_shape": np.array(m.shape)}


def _csr_load(z, name):
    return sp.csr_matrix((z[f"{name}_data"], z[f"{name}_indices"],
                          z[f"{name}_indptr"]), shape=tuple(z[f"{name}_shape"]))


def save_model(path, fom, meta=None):
    """Dump a full-order model (matrices + mesh) to a versioned npz."""
    mesh = fom.mesh
    arrays = {
        "format_version": np.array(FORMAT_VERSION),
        "kind": np.array("full_order_model"),
        "nodes": mesh.nodes, "triangles": mesh.triangles,
        "dirichlet_nodes": mesh.dirichlet_nodes, "h": np.array(mesh.h),
        "free_nodes": fom.free_nodes,
        "F": fom.F, "C": fom.C, "D_w": fom.D_w,
        "tau": np.array(fom.tau), "K": np.array(fom.K),
        "mu_domain": np.array(fom.mu_domain), "mu_ref": np.array(fom.mu_ref),
        "theta_ids": np.array([cid for cid, _ in fom.A.terms]),
        "meta": np.array(json.dumps(meta or {})),
    }
    arrays.update(_csr_fields("M", fom.M))
    arrays.update(_csr_fields("X_Y", fom.X_Y))
    for q, (_, mat) in enumerate(fom.A.terms):
        arrays.update(_csr_fields(f"A{q}", mat))
    save_npz_atomic(path, **arrays)


def load_model(path):
    z = _load_npz(path)
    _check_version(z, path)
    if str(z["kind"]) != "full_order_model":
        raise ConfigurationError("artifact is not a model dump", path=path)
    mesh = Mesh(nodes=z["nodes"], triangles=z["triangles"],
                dirichlet_nodes=z["dirichlet_nodes"], h=float(z["h"]))
    theta_ids = [str(s) for s in z["theta_ids"]]
    terms = tuple((cid, _csr_load(z, f"A{q}"))
                  for q, cid in enumerate(theta_ids))
    M = _csr_load(z, "M")
    return FullOrderModel(
        mesh=mesh, free_nodes=z["free_nodes"], M=M,
        A=AffineOperator(terms=terms), B=M, M_u=M, F=z["F"], C=z["C"],
        D_w=z["D_w"], X_Y=_csr_load(z, "X_Y"), X_U=M,
        tau=float(z["tau"]), K=int(z["K"]),
        mu_domain=tuple(z["mu_domain"]), mu_ref=float(z["mu_ref"]))


def save_truth(path, truth, meta=None):
    save_npz_atomic(
        path, format_version=np.array(FORMAT_VERSION),
        kind=np.array("truth"), mu_true=np.array(truth.mu_true),
        y0_true=truth.y0_true, z_clean=truth.z_clean, z_d=truth.z_d,
        noise_std=np.array(truth.noise_std), seed=np.array(truth.seed),
        meta=np.array(json.dumps(meta or {})))


def load_truth(path):
    from .experiments import TruthData
    z = _load_npz(path)
    _check_version(z, path)
    if str(z["kind"]) != "truth":
        raise ConfigurationError("artifact is not a truth dump", path=path)
    return TruthData(mu_true=float(z["mu_true"]), y0_true=z["y0_true"],
                     z_clean=z["z_clean"], z_d=z["z_d"],
                     noise_std=float(z["noise_std"]), seed=int(z["seed"]))


def save_greedy(path, result: GreedyResult, meta=None):
    b, c = result.basis, result.constants
    trace = np.array([(r.n, r.mu_selected, r.max_rel_bound, r.mu_next,
                       *r.dims, r.wall_time) for r in result.trace])
    save_npz_atomic(
        path, format_version=np.array(FORMAT_VERSION),
        kind=np.array("greedy"), variant=np.array(result.variant),
        V_y=b.V_y, V_u0=b.V_u0, V_u=b.V_u,
        history=np.array(b.history, dtype=int).reshape(-1, 3),
        gamma_b=np.array(c.gamma_b), gamma_c=np.array(c.gamma_c),
        mu_ref=np.array(c.mu_ref), mu_domain=np.array(c.mu_domain),
        train_set=np.asarray(result.train_set, dtype=float),
        trace=trace, meta=np.array(json.dumps(meta or {})))


def load_greedy(path):
    z = _load_npz(path)
    _check_version(z, path)
    if str(z["kind"]) != "greedy":
        raise ConfigurationError("artifact is not a trained basis", path=path)
    basis = ReducedBasis(V_y=z["V_y"], V_u0=z["V_u0"], V_u=z["V_u"],
                         history=[tuple(row) for row in z["history"]])
    constants = Constants(gamma_b=float(z["gamma_b"]),
                          gamma_c=float(z["gamma_c"]),
                          mu_ref=float(z["mu_ref"]),
                          mu_domain=tuple(z["mu_domain"]))
    trace = [GreedyIterationRecord(
        n=int(r[0]), mu_selected=r[1], max_rel_bound=r[2], mu_next=r[3],
        dims=(int(r[4]), int(r[5]), int(r[6])), wall_time=r[7])
        for r in z["trace"]]
    return GreedyResult(basis=basis, constants=constants, trace=trace,
                        variant=str(z["variant"]), train_set=z["train_set"])


def _format_field(v):
    if isinstance(v, bool):
        return str(v)
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    return str(v)


def write_csv(path, rows, fieldnames):
    """Write dict rows as CSV with round-trip float formatting, atomically."""
    buf = _io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: _format_field(row.get(k)) for k in fieldnames})
    atomic_write_text(path, buf.getvalue())
