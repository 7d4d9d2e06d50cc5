"""Versioned binary checkpoint: config echo, named float32 tensors, sha256 trailer.

Layout::

    b"MGBRCKPT" | u32 version | u64 header length | header JSON | payload | sha256

The header lists each tensor's name, shape and element offset into the
payload; the payload is little-endian row-major float32.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .config import MgbrConfig
from .data import Dataset, DealGroup
from .errors import CheckpointError, CompatibilityError
from .graphs import build_views
from .model import MGBR

MAGIC = b"MGBRCKPT"
VERSION = 1


def train_fingerprint(groups: list[DealGroup]) -> str:
    h = hashlib.sha256()
    for g in groups:
        h.update(g.format().encode() + b"\n")
    return h.hexdigest()


def save_checkpoint(path: str | Path, model: MGBR, train_groups: list[DealGroup], extra: dict | None = None) -> None:
    arrays = {k: np.ascontiguousarray(v, dtype="<f4") for k, v in model.params.arrays().items()}
    index, offset = [], 0
    for name, arr in arrays.items():
        index.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size
    header = {"config": model.config.to_dict(), "n_users": model.n_users, "n_items": model.n_items,
              "train_fingerprint": train_fingerprint(train_groups), "tensors": index, "extra": extra or {}}
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    body = MAGIC + struct.pack("<IQ", VERSION, len(head)) + head + b"".join(a.tobytes() for a in arrays.values())
    Path(path).write_bytes(body + hashlib.sha256(body).digest())


def read_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 12 + 32 or raw[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    body, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError(f"{path}: checksum mismatch")
    version, head_len = struct.unpack_from("<IQ", body, len(MAGIC))
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    start = len(MAGIC) + 12
    header = json.loads(body[start:start + head_len].decode("utf-8"))
    payload = np.frombuffer(body[start + head_len:], dtype="<f4")
    arrays = {}
    for t in header["tensors"]:
        count = int(np.prod(t["shape"]))
        arrays[t["name"]] = payload[t["offset"]:t["offset"] + count].reshape(t["shape"]).astype(np.float32)
    return header, arrays


def load_checkpoint(path: str | Path, dataset: Dataset) -> MGBR:
    """Rebuild the model against ``dataset``; the vocabulary and training split must match."""
    header, arrays = read_checkpoint(path)
    if (header["n_users"], header["n_items"]) != (dataset.n_users, dataset.n_items):
        raise CompatibilityError(
            f"checkpoint covers {header['n_users']} users / {header['n_items']} items, "
            f"dataset has {dataset.n_users} / {dataset.n_items}")
    if header["train_fingerprint"] != train_fingerprint(dataset.train):
        raise CompatibilityError("checkpoint was trained on a different training split")
    config = MgbrConfig.from_dict(header["config"])
    views = build_views(dataset.train, dataset.n_users, dataset.n_items)
    return MGBR(config, dataset.n_users, dataset.n_items, views, arrays)
