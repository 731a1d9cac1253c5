"""File formats: dataset CSV, ground-truth/report/state JSON.

All files are plain text so runs can be diffed. Floats are written with
``repr`` (shortest round-trip form) and JSON keys are sorted, which makes
every artifact byte-stable for a fixed seed. Writes go through a temp file
plus rename so a failed run never leaves a partial artifact.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict

import numpy as np

from .engine import FilterConfig, FilterState
from .exceptions import DataFormatError
from .synthgen import GroundTruth

STATE_FORMAT = "hsmoe-filter-state"
STATE_VERSION = 1


def _atomic_write(path: str, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def dump_json(obj, path: str | None = None) -> str:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is not None:
        _atomic_write(path, text)
    return text


# ---------------------------------------------------------------------------
# dataset CSV: header x_1..x_d,y[,z_true]
# ---------------------------------------------------------------------------


def write_dataset_csv(path: str, X: np.ndarray, y: np.ndarray, z=None) -> None:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    header = [f"x_{j + 1}" for j in range(X.shape[1])] + ["y"]
    if z is not None:
        header.append("z_true")
    lines = [",".join(header)]
    for i in range(X.shape[0]):
        row = [repr(float(v)) for v in X[i]] + [repr(float(y[i]))]
        if z is not None:
            row.append(str(int(z[i])))
        lines.append(",".join(row))
    _atomic_write(path, "\n".join(lines) + "\n")


def read_dataset_csv(path: str):
    """Parse a dataset CSV; returns (X, y, z_or_None).

    Raises DataFormatError naming the offending row and column on any
    malformed cell, short row, or unexpected header.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        has_z = header[-1] == "z_true" if header else False
        feat_names = header[:-2] if has_z else header[:-1]
        d = len(feat_names)
        expected = [f"x_{j + 1}" for j in range(d)] + ["y"] + (["z_true"] if has_z else [])
        if d < 1 or header != expected:
            raise DataFormatError(
                f"{path}: header row must be x_1..x_d,y[,z_true], got {header!r}"
            )
        xs, ys, zs = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataFormatError(
                    f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}"
                )
            vals = []
            for col, cell in zip(header, row):
                try:
                    v = int(cell) if col == "z_true" else float(cell)
                except ValueError:
                    raise DataFormatError(
                        f"{path}: row {lineno}, column {col!r}: cannot parse {cell!r}"
                    ) from None
                if col != "z_true" and not np.isfinite(v):
                    raise DataFormatError(
                        f"{path}: row {lineno}, column {col!r}: non-finite value {cell!r}"
                    )
                vals.append(v)
            xs.append(vals[:d])
            ys.append(vals[d])
            if has_z:
                zs.append(vals[d + 1])
    if not xs:
        raise DataFormatError(f"{path}: no data rows")
    X = np.array(xs, dtype=float)
    y = np.array(ys, dtype=float)
    z = np.array(zs, dtype=np.int64) if has_z else None
    return X, y, z


def write_allocation_csv(path: str, freqs: np.ndarray) -> None:
    lines = ["expert,frequency"]
    lines += [f"{k + 1},{repr(float(f))}" for k, f in enumerate(freqs)]
    _atomic_write(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# ground truth JSON
# ---------------------------------------------------------------------------


def ground_truth_to_json(truth: GroundTruth) -> dict:
    return {
        "betas": truth.betas.tolist(),
        "sigma2s": truth.sigma2s.tolist(),
        "gate_coeffs": truth.gate_coeffs.tolist(),
        "gate_bias": truth.gate_bias.tolist(),
        "temperature": truth.temperature,
        "config": asdict(truth.config) if truth.config is not None else None,
    }


# ---------------------------------------------------------------------------
# filter state JSON snapshot
# ---------------------------------------------------------------------------

_STATE_ARRAYS = (
    "pid", "expert_m", "expert_P", "expert_a", "expert_b", "stick_L",
    "stick_h", "phi", "tau2", "xi", "lambda2", "hs_nu", "alloc_counts",
    "last_z", "log_weights",
)


def state_to_json(fs: FilterState) -> dict:
    config = asdict(fs.config)
    config["n_threads"] = 1  # execution detail; must not break byte-identity
    doc = {
        "format": STATE_FORMAT,
        "version": STATE_VERSION,
        "config": config,
        "dim": fs.dim,
        "t": fs.t,
        "log_ml": fs.log_ml,
        "ess_history": list(fs.ess_history),
        "b_clamp_count": fs.b_clamp_count,
        "particles": {name: getattr(fs, name).tolist() for name in _STATE_ARRAYS},
    }
    if fs.paths is not None:
        doc["particles"]["paths"] = fs.paths.tolist()
    return doc


def state_from_json(doc: dict) -> FilterState:
    if doc.get("format") != STATE_FORMAT:
        raise DataFormatError(f"not a {STATE_FORMAT} document")
    if doc.get("version") != STATE_VERSION:
        raise DataFormatError(f"unsupported state version {doc.get('version')!r}")
    cfg = FilterConfig(**doc["config"])
    fs = FilterState(config=cfg, dim=int(doc["dim"]), t=int(doc["t"]),
                     log_ml=float(doc["log_ml"]),
                     ess_history=[float(v) for v in doc["ess_history"]],
                     b_clamp_count=int(doc["b_clamp_count"]))
    parts = doc["particles"]
    int_arrays = {"pid", "alloc_counts", "last_z"}
    for name in _STATE_ARRAYS:
        dtype = np.int64 if name in int_arrays else float
        setattr(fs, name, np.array(parts[name], dtype=dtype))
    # zero-size stick arrays lose their trailing shape in JSON; restore it
    K, d, N = cfg.n_experts, fs.dim, cfg.n_particles
    if K == 1:
        fs.stick_L = fs.stick_L.reshape(N, 0, d, d)
        fs.stick_h = fs.stick_h.reshape(N, 0, d)
        fs.phi = fs.phi.reshape(N, 0, d)
        fs.lambda2 = fs.lambda2.reshape(N, 0, d)
        fs.hs_nu = fs.hs_nu.reshape(N, 0, d)
    fs.paths = (
        np.array(parts["paths"], dtype=np.int64).reshape(N, fs.t)
        if "paths" in parts
        else None
    )
    return fs


def save_state(fs: FilterState, path: str) -> None:
    dump_json(state_to_json(fs), path)


def load_state(path: str) -> FilterState:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as err:
            raise DataFormatError(f"{path}: invalid JSON ({err})") from None
    return state_from_json(doc)
