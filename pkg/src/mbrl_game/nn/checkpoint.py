"""
Parameter checkpoints: a flat float64 array plus a JSON header.

`<stem>.npy` holds the vector, `<stem>.json` the shapes and any metadata the
caller wants to keep next to it (layer sizes, normalizer statistics, hashes).
"""

import json
from pathlib import Path
from typing import Any

import numpy as np

from ..errors import CheckpointError
from .mlp import Mlp


def save_flat(stem: Path, flat: np.ndarray, header: dict[str, Any]) -> None:
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    flat = np.asarray(flat, dtype=np.float64)
    np.save(stem.with_suffix(".npy"), flat)
    with open(stem.with_suffix(".json"), "w") as f:
        json.dump({"n_params": int(flat.size), **header}, f, indent=2, sort_keys=True)


def load_flat(stem: Path) -> tuple[np.ndarray, dict[str, Any]]:
    stem = Path(stem)
    array_path, header_path = stem.with_suffix(".npy"), stem.with_suffix(".json")
    if not array_path.exists() or not header_path.exists():
        raise CheckpointError(f"checkpoint not found: {stem}")
    flat = np.load(array_path)
    with open(header_path) as f:
        header = json.load(f)
    if flat.size != header.get("n_params"):
        raise CheckpointError(f"checkpoint {stem} header does not match its array")
    return flat, header


def mlp_header(net: Mlp) -> dict[str, Any]:
    return {
        "sizes": net.sizes,
        "activation": net.activation,
        "shapes": [[list(W.shape), list(b.shape)] for W, b in zip(net.weights, net.biases)],
    }


def save_mlp(stem: Path, net: Mlp, **extra: Any) -> None:
    save_flat(stem, net.flatten(), {**mlp_header(net), **extra})


def load_mlp(stem: Path) -> tuple[Mlp, dict[str, Any]]:
    flat, header = load_flat(stem)
    net = Mlp(header["sizes"], activation=header["activation"])
    return net.unflatten(flat), header
