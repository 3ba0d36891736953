"""Flat IQ files: little-endian float32 I/Q pairs plus a JSON sidecar."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .phy import ChirpParams, IqBuffer

_DTYPE = np.dtype("<f4")


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_iq(path, buf: IqBuffer, params: ChirpParams | None = None, **extra) -> Path:
    path = Path(path)
    inter = np.empty(2 * len(buf), dtype=_DTYPE)
    inter[0::2] = buf.samples.real
    inter[1::2] = buf.samples.imag
    path.write_bytes(inter.tobytes())
    meta = {"sample_rate": float(buf.sample_rate), "start_time": float(buf.start_time),
            "n_samples": len(buf), "format": "cf32_le"}
    if params is not None:
        meta["spreading_factor"] = int(params.spreading_factor)
        meta["bandwidth"] = float(params.bandwidth)
        meta["carrier_freq"] = float(params.carrier_freq)
    meta.update(extra)
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def read_iq(path) -> tuple[IqBuffer, dict]:
    """Load a buffer and its descriptor; the count in the sidecar is checked."""
    path = Path(path)
    meta = json.loads(sidecar_path(path).read_text())
    raw = np.frombuffer(path.read_bytes(), dtype=_DTYPE)
    if raw.size % 2:
        raise ValueError(f"{path}: odd number of float32 values")
    samples = raw[0::2].astype(np.float64) + 1j * raw[1::2].astype(np.float64)
    if "n_samples" in meta and meta["n_samples"] != samples.size:
        raise ValueError(f"{path}: sidecar says {meta['n_samples']} samples, file has {samples.size}")
    return IqBuffer(samples, meta["sample_rate"], meta.get("start_time", 0.0)), meta


def params_from_meta(meta: dict) -> ChirpParams:
    return ChirpParams(
        spreading_factor=meta["spreading_factor"],
        bandwidth=meta["bandwidth"],
        carrier_freq=meta.get("carrier_freq", 868e6),
        sample_rate=meta["sample_rate"],
    )
