"""Single-file model checkpoints.

Layout (all integers little-endian)::

    8 bytes   magic b"HSEGCKPT"
    uint32    format version
    uint64    manifest length L
    L bytes   UTF-8 JSON manifest
    payload   concatenated float64 ('<f8') parameter arrays

The manifest holds the architecture (``ModelConfig.to_dict``), the
observation variance, the seed lineage, free-form ``extra`` metadata and an
``arrays`` index of ``{name, shape, offset}`` entries (offsets in bytes from
the payload start) plus the CRC32 of the payload.
"""
from __future__ import annotations

import json
import os
import struct
import zlib
from pathlib import Path

import numpy as np

from .model import LatentOdeModel, ModelConfig

__all__ = [
    "CheckpointError",
    "save_checkpoint",
    "load_checkpoint",
    "read_checkpoint_manifest",
    "MAGIC",
    "CHECKPOINT_VERSION",
]

MAGIC = b"HSEGCKPT"
CHECKPOINT_VERSION = 1
_HEAD = struct.Struct("<8sIQ")


class CheckpointError(ValueError):
    pass


def save_checkpoint(model: LatentOdeModel, path, extra: dict | None = None) -> Path:
    path = Path(path)
    arrays, offset, chunks = [], 0, []
    for name in sorted(model.params):
        a = np.ascontiguousarray(model.params[name], dtype="<f8")
        arrays.append({"name": name, "shape": list(a.shape), "offset": offset})
        b = a.tobytes()
        chunks.append(b)
        offset += len(b)
    payload = b"".join(chunks)
    manifest = {
        "architecture": model.config.to_dict(),
        "obs_variance": model.config.obs_variance,
        "seed": model.seed,
        "extra": extra or {},
        "arrays": arrays,
        "payload_bytes": len(payload),
        "payload_crc32": zlib.crc32(payload),
    }
    blob = json.dumps(manifest, sort_keys=True).encode()
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_HEAD.pack(MAGIC, CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        fh.write(payload)
    os.replace(tmp, path)
    return path


def read_checkpoint_manifest(path) -> dict:
    return _read(path)[0]


def _read(path):
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _HEAD.size:
        raise CheckpointError(f"{path}: truncated checkpoint header")
    magic, version, mlen = _HEAD.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: checkpoint format version {version}, expected {CHECKPOINT_VERSION}")
    start = _HEAD.size + mlen
    if len(data) < start:
        raise CheckpointError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(data[_HEAD.size:start].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: malformed manifest ({exc})") from None
    payload = data[start:]
    if len(payload) != manifest.get("payload_bytes"):
        raise CheckpointError(
            f"{path}: payload is {len(payload)} bytes, manifest says {manifest.get('payload_bytes')}")
    if zlib.crc32(payload) != manifest.get("payload_crc32"):
        raise CheckpointError(f"{path}: payload checksum mismatch")
    return manifest, payload


def load_checkpoint(path, expect: ModelConfig | dict | None = None) -> LatentOdeModel:
    """Load a model; ``expect`` (config or dict of architecture fields) must match if given."""
    manifest, payload = _read(path)
    try:
        config = ModelConfig.from_dict(manifest["architecture"])
        params = {}
        for entry in manifest["arrays"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape))
            a = np.frombuffer(payload, dtype="<f8", count=count, offset=entry["offset"])
            params[entry["name"]] = a.reshape(shape).astype(np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: malformed checkpoint ({exc})") from None
    if expect is not None:
        want = expect.to_dict() if isinstance(expect, ModelConfig) else dict(expect)
        have = config.to_dict()
        diff = {k: (have.get(k), v) for k, v in want.items() if have.get(k) != v}
        if diff:
            detail = ", ".join(f"{k}: file has {a!r}, expected {b!r}" for k, (a, b) in diff.items())
            raise CheckpointError(f"{path}: architecture mismatch ({detail})")
    expected = set(LatentOdeModel.initialize(config, 0).params)
    if set(params) != expected:
        raise CheckpointError(f"{path}: parameter set does not match the architecture")
    return LatentOdeModel(config, params, manifest.get("seed"))
