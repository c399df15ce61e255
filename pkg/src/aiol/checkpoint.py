"""Versioned model checkpoints stored as ``.npz`` blobs."""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .nn import EmaState, ParameterSet

FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    params: ParameterSet
    ema: EmaState
    config_hash: str
    config: dict
    seed: int

    @property
    def detector(self) -> ParameterSet:
        return self.ema.shadow


def save_checkpoint(path, params: ParameterSet, ema: EmaState, config_hash: str,
                    config: dict, seed: int) -> Path:
    path = Path(path)
    arrays = {}
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        arrays[f"W{i}"], arrays[f"b{i}"] = W, b
    for i, (W, b) in enumerate(zip(ema.shadow.weights, ema.shadow.biases)):
        arrays[f"ema_W{i}"], arrays[f"ema_b{i}"] = W, b
    meta = {
        "format_version": FORMAT_VERSION,
        "config_hash": config_hash,
        "config": config,
        "seed": int(seed),
        "n_layers": len(params.weights),
        "slope": params.slope,
        "ema_decay": ema.decay,
    }
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    _write_npz(path, arrays)
    return path


def _write_npz(path, arrays):
    # np.savez stamps the wall clock into the zip; fix the timestamp so reruns are byte-identical
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0)), buf.getvalue())


def load_checkpoint(path, expected_hash: str | None = None) -> Checkpoint:
    path = Path(path)
    with np.load(path) as z:
        meta = json.loads(bytes(z["meta"]).decode())
        if meta.get("format_version") != FORMAT_VERSION:
            raise ConfigError(f"{path}: unsupported checkpoint format {meta.get('format_version')}")
        n = meta["n_layers"]
        params = ParameterSet([z[f"W{i}"] for i in range(n)], [z[f"b{i}"] for i in range(n)],
                              meta["slope"])
        shadow = ParameterSet([z[f"ema_W{i}"] for i in range(n)], [z[f"ema_b{i}"] for i in range(n)],
                              meta["slope"])
    if expected_hash is not None and meta["config_hash"] != expected_hash:
        raise ConfigError(
            f"{path}: checkpoint was trained under config {meta['config_hash']} but the current "
            f"config hashes to {expected_hash}; refusing to evaluate a mismatched model")
    return Checkpoint(params, EmaState(shadow, meta["ema_decay"]), meta["config_hash"],
                      meta["config"], meta["seed"])
