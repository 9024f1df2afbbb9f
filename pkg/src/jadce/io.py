"""On-disk formats.

* ``*.jdce`` datasets: magic ``b"JDCE"``, u32 format version, u32 ``L, N, M,
  count`` (all little-endian), then for each sample the lifted ``X*`` and
  ``Y`` as row-major little-endian f64, then the complex pilot as interleaved
  ``(re, im)`` f64 pairs.  A ``.json`` manifest sits next to it.
* ``*.mat64`` matrices (dictionaries): magic ``b"JMAT"``, u32 version, u32
  rows, u32 cols, row-major f64, with a JSON sidecar of metadata.
* Networks, tuned hyperparameters and reports are plain JSON.
"""
from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .core import RealizedSystem, lift_dictionary, row_group_norms
from .datagen import Dataset, SceneConfig
from .dictionary import AnalyticDictionary

DATASET_MAGIC = b"JDCE"
MATRIX_MAGIC = b"JMAT"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIIII")
_MAT_HEADER = struct.Struct("<4sIII")


class FormatError(ValueError):
    """A file does not follow the expected layout."""


def _f64(a) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def manifest_path(path) -> Path:
    return Path(path).with_suffix(".json")


def dataset_manifest(ds: Dataset) -> dict:
    return {
        "format": "JDCE",
        "version": FORMAT_VERSION,
        "config": ds.config.to_dict(),
        "master_seed": int(ds.master_seed),
        "count": ds.count,
    }


def fingerprint(manifest: dict) -> str:
    """Short SHA-256 of the canonical JSON form of a manifest."""
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def dataset_fingerprint(ds: Dataset) -> str:
    return fingerprint(dataset_manifest(ds))


def write_dataset(path, ds: Dataset) -> Path:
    path = Path(path)
    cfg = ds.config
    L, N, M = cfg.pilot_len, cfg.n_devices, cfg.n_antennas
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(DATASET_MAGIC, FORMAT_VERSION, L, N, M, ds.count))
        for sys in ds.systems:
            fh.write(_f64(sys.x_star_tilde))
            fh.write(_f64(sys.y_tilde))
        pilot = np.asarray(ds.pilot, dtype=complex)
        fh.write(_f64(np.stack([pilot.real, pilot.imag], axis=-1)))
    with open(manifest_path(path), "w") as fh:
        json.dump(dataset_manifest(ds), fh, indent=2, sort_keys=True)
    return path


def read_dataset(path) -> Dataset:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, L, N, M, count = _HEADER.unpack_from(raw)
    if magic != DATASET_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    per = 2 * N * M + 2 * L * M
    expected = _HEADER.size + 8 * (count * per + 2 * L * N)
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).astype(float)
    samples = body[: count * per].reshape(count, per)
    pr = body[count * per:].reshape(L, N, 2)
    pilot = pr[..., 0] + 1j * pr[..., 1]
    s_tilde = lift_dictionary(pilot)

    mpath = manifest_path(path)
    if mpath.exists():
        man = json.loads(mpath.read_text())
        cfg = SceneConfig(**man["config"])
        master = man["master_seed"]
    else:
        cfg = SceneConfig(n_devices=N, n_antennas=M, pilot_len=L)
        master = 0
    systems, acts = [], []
    for row in samples:
        x = row[: 2 * N * M].reshape(2 * N, M)
        y = row[2 * N * M:].reshape(2 * L, M)
        systems.append(RealizedSystem.from_arrays(s_tilde, y, x, float(np.linalg.norm(y - s_tilde @ x))))
        norms = row_group_norms(x)
        acts.append((norms[:N] ** 2 + norms[N:] ** 2) > 0)
    return Dataset(systems, cfg, pilot, master, acts)


def write_matrix(path, a, meta: dict | None = None) -> Path:
    path = Path(path)
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise FormatError("only 2-D matrices can be stored")
    with open(path, "wb") as fh:
        fh.write(_MAT_HEADER.pack(MATRIX_MAGIC, FORMAT_VERSION, *a.shape))
        fh.write(_f64(a))
    if meta is not None:
        with open(manifest_path(path), "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True, default=float)
    return path


def read_matrix(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _MAT_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, rows, cols = _MAT_HEADER.unpack_from(raw)
    if magic != MATRIX_MAGIC or version != FORMAT_VERSION:
        raise FormatError(f"{path}: not a matrix file")
    if len(raw) != _MAT_HEADER.size + 8 * rows * cols:
        raise FormatError(f"{path}: size does not match {rows}x{cols}")
    a = np.frombuffer(raw, dtype="<f8", offset=_MAT_HEADER.size).reshape(rows, cols).astype(float)
    mpath = manifest_path(path)
    meta = json.loads(mpath.read_text()) if mpath.exists() else {}
    return a, meta


def write_dictionary(path, d: AnalyticDictionary, extra: dict | None = None) -> Path:
    meta = d.metadata()
    meta.update(extra or {})
    return write_matrix(path, d.b, meta)


def read_dictionary(path) -> AnalyticDictionary:
    b, meta = read_matrix(path)
    return AnalyticDictionary(
        b,
        meta.get("source", "plain"),
        meta.get("final_objective", float("nan")),
        meta.get("max_constraint_residual", float("nan")),
        [],
        meta.get("tau"),
        meta.get("steps", 0),
        meta.get("lr", 0.0),
    )


def write_json(path, obj) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def write_train_log(path, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stage", "phase", "iter", "train_loss", "val_nmse_db"])
        for r in rows:
            w.writerow([r.stage, r.phase, r.iter, repr(float(r.train_loss)), repr(float(r.val_nmse_db))])
    return path
