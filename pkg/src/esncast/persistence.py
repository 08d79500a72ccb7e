"""Deterministic serialization of reservoirs, readouts, and calibrations.

Snapshots are JSON documents. Scalars rely on shortest-repr round-tripping
(bit-exact for finite doubles); matrices are encoded as base64 of canonical
little-endian float64 payloads, sparse-triplet form when the density drops
under 25%. Loading re-runs the structural invariants of the stored
topology and reports every violation at once, so a loaded reservoir always
reproduces the exact in-memory behavior of the saved one.
"""
from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .systems import ChaoticSystem
from .topology import CYCLE, GENERAL, K1_CYCLE, K1_CUT_CYCLE, LINE, HyperParams, Reservoir, spectral_radius
from .training import Readout

SNAPSHOT_FORMAT_VERSION = 1
_SPARSE_DENSITY_CUTOFF = 0.25


class SnapshotError(RuntimeError):
    """Raised when a snapshot cannot be read or written."""


class SnapshotValidationError(SnapshotError):
    """Raised when a loaded snapshot violates its structural invariants."""

    def __init__(self, violations: list[str]):
        super().__init__("snapshot validation failed:\n  " + "\n  ".join(violations))
        self.violations = violations


def config_hash(obj) -> str:
    """Short stable hash of any JSON-serializable configuration."""
    payload = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(payload).hexdigest()[:12]


def _b64_floats(a: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode()


def _floats_from_b64(s: str, count: int) -> np.ndarray:
    raw = base64.b64decode(s.encode())
    a = np.frombuffer(raw, dtype="<f8")
    if a.size != count:
        raise SnapshotError(f"float payload holds {a.size} values, expected {count}")
    return a.astype(np.float64)


def encode_matrix(m: np.ndarray) -> dict:
    """Lossless JSON form; sparse triplets below the density cutoff."""
    m = np.asarray(m, dtype=float)
    nnz = int(np.count_nonzero(m))
    if m.size and nnz / m.size < _SPARSE_DENSITY_CUTOFF:
        rows, cols = np.nonzero(m)
        return {
            "encoding": "coo-f64le-b64",
            "shape": list(m.shape),
            "rows": rows.tolist(),
            "cols": cols.tolist(),
            "values": _b64_floats(m[rows, cols]),
        }
    return {
        "encoding": "dense-f64le-b64",
        "shape": list(m.shape),
        "values": _b64_floats(m.ravel()),
    }


def decode_matrix(d: dict) -> np.ndarray:
    shape = tuple(d["shape"])
    if d["encoding"] == "dense-f64le-b64":
        return _floats_from_b64(d["values"], int(np.prod(shape))).reshape(shape)
    if d["encoding"] == "coo-f64le-b64":
        vals = _floats_from_b64(d["values"], len(d["rows"]))
        m = np.zeros(shape)
        m[np.asarray(d["rows"], dtype=int), np.asarray(d["cols"], dtype=int)] = vals
        return m
    raise SnapshotError(f"unknown matrix encoding {d['encoding']!r}")


@dataclass
class Snapshot:
    """Everything needed to rebuild a reservoir (and optionally its readout)."""

    system: ChaoticSystem | None
    hp: HyperParams
    seed: int
    n: int
    w_r: np.ndarray
    w_in: np.ndarray
    fout_split: int
    readout: Readout | None = None
    provenance: dict | None = None
    format_version: int = SNAPSHOT_FORMAT_VERSION

    def to_reservoir(self) -> Reservoir:
        return Reservoir(n=self.n, w_r=self.w_r, w_in=self.w_in,
                         gamma=self.hp.gamma, fout_split=self.fout_split,
                         seed=self.seed, topology=self.hp.topology, hp=self.hp)


def snapshot_of(reservoir: Reservoir, system: ChaoticSystem | None = None,
                readout: Readout | None = None,
                extra_provenance: dict | None = None) -> Snapshot:
    if reservoir.hp is None:
        raise ValueError("reservoir carries no hyperparameters to snapshot")
    prov = {
        "created": datetime.now(timezone.utc).isoformat(),
        "config_hash": config_hash({
            "topology": reservoir.topology, "seed": reservoir.seed,
            "n": reservoir.n, "gamma": reservoir.gamma,
        }),
    }
    if extra_provenance:
        prov.update(extra_provenance)
    return Snapshot(system=system, hp=reservoir.hp, seed=reservoir.seed,
                    n=reservoir.n, w_r=reservoir.w_r, w_in=reservoir.w_in,
                    fout_split=reservoir.fout_split, readout=readout,
                    provenance=prov)


def _system_to_dict(s: ChaoticSystem) -> dict:
    return {
        "name": s.name,
        "params": s.params,
        "time_scale": s.time_scale,
        "channel_transform": list(s.channel_transform),
        "norm_shift": s.norm_shift.tolist(),
        "norm_scale": s.norm_scale.tolist(),
        "substeps": s.substeps,
    }


def _system_from_dict(d: dict) -> ChaoticSystem:
    return ChaoticSystem(
        name=d["name"], params={k: float(v) for k, v in d["params"].items()},
        time_scale=d["time_scale"],
        channel_transform=tuple(d["channel_transform"]),
        norm_shift=np.asarray(d["norm_shift"]),
        norm_scale=np.asarray(d["norm_scale"]),
        substeps=int(d.get("substeps", 1)),
    )


def _hp_to_dict(hp: HyperParams) -> dict:
    return {"gamma": hp.gamma, "sigma": hp.sigma, "rho_in": hp.rho_in,
            "k": hp.k, "rho_r": hp.rho_r, "topology": hp.topology}


def save_snapshot(snapshot: Snapshot, path: str | Path) -> None:
    """Write the snapshot as one JSON document (atomically)."""
    doc = {
        "format_version": snapshot.format_version,
        "system": None if snapshot.system is None else _system_to_dict(snapshot.system),
        "hyperparams": _hp_to_dict(snapshot.hp),
        "topology": snapshot.hp.topology,
        "seed": snapshot.seed,
        "n": snapshot.n,
        "fout_split": snapshot.fout_split,
        "w_r": encode_matrix(snapshot.w_r),
        "w_in": encode_matrix(snapshot.w_in),
        "readout": None,
        "provenance": snapshot.provenance or {},
    }
    if snapshot.readout is not None:
        doc["readout"] = {
            "w_out": encode_matrix(snapshot.readout.w_out),
            "alpha": snapshot.readout.alpha,
            "fout_split": snapshot.readout.fout_split,
            "degenerate": snapshot.readout.degenerate,
        }
    path = Path(path)
    try:
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(json.dumps(doc))
        tmp.replace(path)
    except OSError as exc:
        raise SnapshotError(f"cannot write snapshot to {path}: {exc}") from exc


def _pattern_nilpotent(w: np.ndarray) -> bool:
    """Exact nilpotency via boolean reachability squaring."""
    p = (w != 0)
    n = w.shape[0]
    steps = 1
    while steps < n:
        if not p.any():
            return True
        p = (p.astype(np.uint8) @ p.astype(np.uint8)) > 0
        steps *= 2
    return not p.any()


def _row_degrees(w: np.ndarray) -> np.ndarray:
    return (w != 0).sum(axis=1)


def validate_reservoir_structure(w_r: np.ndarray, hp: HyperParams) -> list[str]:
    """Structural invariant violations of a coupling matrix, empty if sound."""
    from .topology import connected_components  # local import to stay cheap

    violations: list[str] = []
    n = w_r.shape[0]
    deg = _row_degrees(w_r)
    topo = hp.topology
    if topo == GENERAL:
        bad = np.nonzero(deg != hp.k)[0]
        for row in bad[:5]:
            violations.append(
                f"row {int(row)} has {int(deg[row])} inputs, expected k={hp.k}")
        if bad.size > 5:
            violations.append(f"... and {bad.size - 5} more rows off-degree")
    elif topo in (K1_CYCLE, CYCLE):
        bad = np.nonzero(deg != 1)[0]
        for row in bad[:5]:
            violations.append(f"row {int(row)} has {int(deg[row])} inputs, expected 1")
        if connected_components(w_r) != 1:
            violations.append("graph is not a single weakly connected component")
        if _pattern_nilpotent(w_r):
            violations.append("graph has no cycle but topology requires one")
    elif topo in (K1_CUT_CYCLE, LINE):
        if sorted(deg.tolist()) != [0] + [1] * (n - 1):
            violations.append("cut topology must have exactly one empty row and in-degree 1 elsewhere")
        if not _pattern_nilpotent(w_r):
            violations.append("cut topology is not nilpotent")
    if topo in (CYCLE, LINE):
        vals = w_r[w_r != 0]
        if vals.size and not np.all(vals == vals[0]):
            violations.append("ring/chain weights are not identical")
    if topo not in (K1_CUT_CYCLE, LINE) and hp.rho_r > 0:
        sr = spectral_radius(w_r)
        if abs(sr - hp.rho_r) > 1e-6 * hp.rho_r:
            violations.append(
                f"spectral radius {sr!r} misses target rho_r={hp.rho_r!r}")
    return violations


def load_snapshot(path: str | Path) -> Snapshot:
    """Read and validate a snapshot; raises with every violated invariant."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SnapshotError(f"cannot read snapshot {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SnapshotError(f"snapshot {path} is not valid JSON: {exc}") from exc
    version = doc.get("format_version")
    if version != SNAPSHOT_FORMAT_VERSION:
        raise SnapshotError(
            f"snapshot {path} has format_version {version!r}, "
            f"this build reads {SNAPSHOT_FORMAT_VERSION}")
    hp = HyperParams(**doc["hyperparams"])
    w_r = decode_matrix(doc["w_r"])
    w_in = decode_matrix(doc["w_in"])
    n = int(doc["n"])
    violations = []
    if w_r.shape != (n, n):
        violations.append(f"w_r shape {w_r.shape} does not match n={n}")
    if w_in.shape[0] != n:
        violations.append(f"w_in shape {w_in.shape} does not match n={n}")
    if not (np.all(np.isfinite(w_r)) and np.all(np.isfinite(w_in))):
        violations.append("non-finite coupling weights")
    if not violations:
        violations.extend(validate_reservoir_structure(w_r, hp))
    if violations:
        raise SnapshotValidationError(violations)
    readout = None
    if doc.get("readout"):
        rd = doc["readout"]
        readout = Readout(w_out=decode_matrix(rd["w_out"]), alpha=rd["alpha"],
                          fout_split=int(rd["fout_split"]),
                          degenerate=bool(rd["degenerate"]))
    system = None if doc.get("system") is None else _system_from_dict(doc["system"])
    return Snapshot(system=system, hp=hp, seed=int(doc["seed"]), n=n,
                    w_r=w_r, w_in=w_in, fout_split=int(doc["fout_split"]),
                    readout=readout, provenance=doc.get("provenance"),
                    format_version=version)


def save_calibration(system: ChaoticSystem, path: str | Path) -> None:
    Path(path).write_text(json.dumps(_system_to_dict(system)))


def load_calibration(path: str | Path) -> ChaoticSystem:
    return _system_from_dict(json.loads(Path(path).read_text()))


def cached_calibration(name: str, rng_seed: int, sample_horizon: float,
                       cache_dir: str | Path) -> ChaoticSystem:
    """Calibrate once per (system, seed, horizon) and reuse the JSON result."""
    from .systems import calibrate_system

    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    key = f"calibration_{name}_{rng_seed}_{sample_horizon:g}.json"
    path = cache_dir / key
    if path.exists():
        return load_calibration(path)
    system = calibrate_system(name, sample_horizon=sample_horizon, rng_seed=rng_seed)
    save_calibration(system, path)
    return system
