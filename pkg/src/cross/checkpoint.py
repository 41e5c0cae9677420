"""Checkpoint I/O: a flat binary map from parameter paths to float64 arrays.

Stored as an uncompressed .npz so round-trips are bit-exact.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

from .autodiff import Tensor


def save_params(path, named_params: list[tuple[str, Tensor]]) -> None:
    arrays = {name: np.ascontiguousarray(p.data) for name, p in named_params}
    if len(arrays) != len(named_params):
        raise ValueError("duplicate parameter paths in checkpoint")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, **arrays)


def load_params(path) -> dict[str, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    with np.load(path, allow_pickle=False) as data:
        return {name: data[name].astype(np.float64) for name in data.files}


def assign_params(named_params: list[tuple[str, Tensor]], loaded: dict[str, np.ndarray]) -> None:
    """Copy loaded arrays into parameters, validating names and shapes."""
    params = dict(named_params)
    missing = sorted(set(params) - set(loaded))
    extra = sorted(set(loaded) - set(params))
    if missing or extra:
        raise ValueError(f"checkpoint mismatch: missing={missing[:5]} unexpected={extra[:5]}")
    for name, tensor in params.items():
        arr = loaded[name]
        if arr.shape != tensor.data.shape:
            raise ValueError(
                f"checkpoint shape mismatch for {name}: {arr.shape} vs {tensor.data.shape}")
        tensor.data[...] = arr


def params_digest(named_params: list[tuple[str, Tensor]]) -> str:
    """Stable content hash of a parameter set."""
    h = hashlib.sha256()
    for name, p in sorted(named_params):
        h.update(name.encode())
        h.update(np.ascontiguousarray(p.data).tobytes())
    return h.hexdigest()
