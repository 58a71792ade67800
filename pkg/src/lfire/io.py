"""Artifact file formats.

Every artifact is a JSON metadata sidecar plus flat little-endian IEEE-754
float64 binary blobs (row-major). JSON is written with sorted keys and no
timestamps, so identical inputs produce byte-identical files.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .grids import PosteriorGrid
from .nnet.network import NetworkConfig, SummaryNetwork, build_layers
from .nnet.train import TrainConfig, TrainState
from .priors import PriorSpec
from .simulators import SimBatch

F64 = "f64-le"


def _write_json(path: Path, obj: dict):
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def _read_json(path: Path) -> dict:
    return json.loads(Path(path).read_text())


def _write_blob(path: Path, arr: np.ndarray):
    Path(path).write_bytes(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_blob(path: Path, shape) -> np.ndarray:
    data = np.frombuffer(Path(path).read_bytes(), dtype="<f8")
    expected = int(np.prod(shape)) if shape else data.size
    if data.size != expected:
        raise ConfigurationError(f"blob {path} has {data.size} values, expected {expected}")
    return data.reshape(shape).copy()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# SimBatch: <stem>.json + <stem>.x.f64 + <stem>.theta.f64
# ---------------------------------------------------------------------------

def save_simbatch(batch: SimBatch, stem) -> list:
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    x_file = stem.with_suffix(".x.f64")
    t_file = stem.with_suffix(".theta.f64")
    meta = {
        "kind": "simbatch",
        "model_id": batch.model_id,
        "m": len(batch),
        "master_seed": batch.master_seed,
        "seed_path": list(batch.seed_path),
        "prior": batch.prior.to_json(),
        "dtype": F64,
        "series_shape": list(batch.series.shape),
        "params_shape": list(batch.parameters.shape),
        "series_file": x_file.name,
        "params_file": t_file.name,
    }
    _write_json(stem.with_suffix(".json"), meta)
    _write_blob(x_file, batch.series)
    _write_blob(t_file, batch.parameters)
    return [stem.with_suffix(".json"), x_file, t_file]


def load_simbatch(stem) -> SimBatch:
    stem = Path(stem)
    meta = _read_json(stem.with_suffix(".json"))
    if meta.get("kind") != "simbatch":
        raise ConfigurationError(f"{stem}: not a simbatch artifact")
    folder = stem.parent
    series = _read_blob(folder / meta["series_file"], meta["series_shape"])
    params = _read_blob(folder / meta["params_file"], meta["params_shape"])
    return SimBatch(model_id=meta["model_id"], parameters=params, series=series,
                    prior=PriorSpec.from_json(meta["prior"]),
                    master_seed=meta["master_seed"],
                    seed_path=tuple(meta.get("seed_path", ())))


# ---------------------------------------------------------------------------
# PosteriorGrid: <stem>.json + <stem>.masses.f64
# ---------------------------------------------------------------------------

def save_posterior(grid: PosteriorGrid, stem) -> list:
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    m_file = stem.with_suffix(".masses.f64")
    meta = {
        "kind": "posterior-grid",
        "model_id": grid.model_id,
        "axes": [a.tolist() for a in grid.axes],
        "prior": grid.prior.to_json(),
        "dtype": F64,
        "shape": list(grid.shape),
        "masses_file": m_file.name,
    }
    _write_json(stem.with_suffix(".json"), meta)
    _write_blob(m_file, grid.masses)
    return [stem.with_suffix(".json"), m_file]


def load_posterior(stem) -> PosteriorGrid:
    stem = Path(stem)
    meta = _read_json(stem.with_suffix(".json"))
    if meta.get("kind") != "posterior-grid":
        raise ConfigurationError(f"{stem}: not a posterior-grid artifact")
    masses = _read_blob(stem.parent / meta["masses_file"], meta["shape"])
    return PosteriorGrid(axes=[np.asarray(a) for a in meta["axes"]],
                         masses=masses, prior=PriorSpec.from_json(meta["prior"]),
                         model_id=meta["model_id"])


# ---------------------------------------------------------------------------
# Network checkpoint: <stem>.json + <stem>.weights.f64
# ---------------------------------------------------------------------------

def _state_tensors(state: TrainState) -> list:
    tensors = []
    m_list, v_list, t = state.adam
    for k, (m, v) in enumerate(zip(m_list, v_list)):
        tensors.append((f"adam.m.{k}", m))
        tensors.append((f"adam.v.{k}", v))
    for name, arr in sorted(state.best_params.items()):
        tensors.append((f"best.{name}", arr))
    for name, arr in sorted(state.current_params.items()):
        tensors.append((f"cur.{name}", arr))
    return tensors


def save_checkpoint(net: SummaryNetwork, stem, train_config: TrainConfig = None,
                    include_state: bool = True) -> list:
    """Write config, report and all tensors; the training state (optimizer
    moments, best/current weights) rides along so training can resume."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    tensors = list(net.parameter_arrays())
    tensors += [("std.input_mean", net.input_mean), ("std.input_std", net.input_std),
                ("std.target_mean", net.target_mean), ("std.target_std", net.target_std)]
    report = {k: v for k, v in net.report.items() if k != "train_state"}
    state = net.report.get("train_state")
    state_meta = None
    if include_state and state is not None:
        tensors += _state_tensors(state)
        state_meta = {
            "epoch": state.epoch,
            "adam_t": state.adam[2],
            "adam_len": len(state.adam[0]),
            "best_val": state.best_val,
            "since_improvement": state.since_improvement,
            "history": state.history,
            "has_best": bool(state.best_params),
        }
    w_file = stem.with_suffix(".weights.f64")
    meta = {
        "kind": "network-checkpoint",
        "network": net.config.to_json(),
        "train_config": train_config.to_json() if train_config else None,
        "report": report,
        "tensors": [{"name": name, "shape": list(arr.shape)} for name, arr in tensors],
        "train_state": state_meta,
        "dtype": F64,
        "weights_file": w_file.name,
    }
    _write_json(stem.with_suffix(".json"), meta)
    blob = np.concatenate([np.asarray(arr, dtype=float).ravel() for _, arr in tensors])
    _write_blob(w_file, blob)
    return [stem.with_suffix(".json"), w_file]


def load_checkpoint(stem):
    """Returns (net, train_config or None, train_state or None)."""
    stem = Path(stem)
    meta = _read_json(stem.with_suffix(".json"))
    if meta.get("kind") != "network-checkpoint":
        raise ConfigurationError(f"{stem}: not a network checkpoint")
    blob = np.frombuffer((stem.parent / meta["weights_file"]).read_bytes(), dtype="<f8")
    values = {}
    offset = 0
    for entry in meta["tensors"]:
        size = int(np.prod(entry["shape"])) if entry["shape"] else 1
        values[entry["name"]] = blob[offset:offset + size].reshape(entry["shape"]).copy()
        offset += size
    if offset != blob.size:
        raise ConfigurationError("checkpoint blob size mismatch")
    config = NetworkConfig.from_json(meta["network"])
    net = SummaryNetwork(config=config, layers=build_layers(config),
                         input_mean=values["std.input_mean"],
                         input_std=values["std.input_std"],
                         target_mean=values["std.target_mean"],
                         target_std=values["std.target_std"],
                         report=dict(meta["report"]))
    net.set_parameters(values)
    train_config = (TrainConfig.from_json(meta["train_config"])
                    if meta.get("train_config") else None)
    state = None
    if meta.get("train_state"):
        sm = meta["train_state"]
        m_list = [values[f"adam.m.{k}"] for k in range(sm["adam_len"])]
        v_list = [values[f"adam.v.{k}"] for k in range(sm["adam_len"])]
        best = {name[5:]: arr for name, arr in values.items() if name.startswith("best.")}
        cur = {name[4:]: arr for name, arr in values.items() if name.startswith("cur.")}
        state = TrainState(epoch=sm["epoch"], adam=(m_list, v_list, sm["adam_t"]),
                           best_val=sm["best_val"],
                           best_params=best if sm["has_best"] else {},
                           since_improvement=sm["since_improvement"],
                           history=[tuple(h) for h in sm["history"]],
                           current_params=cur)
    return net, train_config, state


# ---------------------------------------------------------------------------
# Per-node ratio model dump: <stem>.json + <stem>.beta.f64
# ---------------------------------------------------------------------------

def save_ratio_models(models: dict, stem) -> list:
    """``models`` maps flat node index -> RatioModel."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    keys = sorted(models)
    entries = []
    chunks = []
    for k in keys:
        m = models[k]
        entries.append({"node": k,
                        "theta": None if m.theta is None else m.theta.tolist(),
                        "lambda": m.lambda_selected,
                        "p": int(len(m.beta))})
        chunks.append(np.asarray(m.beta, dtype=float))
    b_file = stem.with_suffix(".beta.f64")
    meta = {"kind": "ratio-models", "nodes": entries, "dtype": F64,
            "beta_file": b_file.name}
    _write_json(stem.with_suffix(".json"), meta)
    _write_blob(b_file, np.concatenate(chunks) if chunks else np.empty(0))
    return [stem.with_suffix(".json"), b_file]


def load_ratio_models(stem) -> dict:
    from .ratio import RatioModel  # cycle-free local import

    stem = Path(stem)
    meta = _read_json(stem.with_suffix(".json"))
    if meta.get("kind") != "ratio-models":
        raise ConfigurationError(f"{stem}: not a ratio-model dump")
    blob = np.frombuffer((stem.parent / meta["beta_file"]).read_bytes(), dtype="<f8")
    out = {}
    offset = 0
    for entry in meta["nodes"]:
        p = entry["p"]
        beta = blob[offset:offset + p].copy()
        offset += p
        out[entry["node"]] = RatioModel(
            beta=beta, lambda_selected=entry["lambda"],
            standardization=(None, None),
            theta=None if entry["theta"] is None else np.asarray(entry["theta"]))
    return out
