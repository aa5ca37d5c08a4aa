"""Binary checkpoint format: magic ``EYTR``, versioned, self-describing.

Layout (all integers little-endian):

    magic       4 bytes  b"EYTR"
    version     u32
    meta_len    u32      followed by canonical JSON (sorted keys, compact)
    n_tensors   u32
    per tensor, sorted by name:
      name_len  u16      followed by the UTF-8 name
      rank      u32
      dims      u32 * rank
      payload   float32 little-endian, row-major

Text floats lose bit-exactness; this format round-trips exactly:
save -> load -> save reproduces identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from .dataset import atomic_write_bytes
from .errors import CheckpointError

MAGIC = b"EYTR"
CHECKPOINT_VERSION = 1


def _canonical_json(meta: dict) -> bytes:
    return json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")


def config_hash(config: dict) -> str:
    return hashlib.sha256(_canonical_json(config)).hexdigest()[:16]


def serialize_checkpoint(tensors: dict[str, np.ndarray], meta: dict) -> bytes:
    parts = [MAGIC, struct.pack("<I", CHECKPOINT_VERSION)]
    meta_blob = _canonical_json(meta)
    parts.append(struct.pack("<I", len(meta_blob)))
    parts.append(meta_blob)
    parts.append(struct.pack("<I", len(tensors)))
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        name_b = name.encode("utf-8")
        parts.append(struct.pack("<H", len(name_b)))
        parts.append(name_b)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def deserialize_checkpoint(blob: bytes) -> tuple[dict[str, np.ndarray], dict]:
    view = memoryview(blob)
    if bytes(view[:4]) != MAGIC:
        raise CheckpointError("bad magic; not an EYTR checkpoint")
    pos = 4
    (version,) = struct.unpack_from("<I", view, pos)
    pos += 4
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (meta_len,) = struct.unpack_from("<I", view, pos)
    pos += 4
    meta = json.loads(bytes(view[pos:pos + meta_len]))
    pos += meta_len
    (n_tensors,) = struct.unpack_from("<I", view, pos)
    pos += 4
    tensors: dict[str, np.ndarray] = {}
    for _ in range(n_tensors):
        (name_len,) = struct.unpack_from("<H", view, pos)
        pos += 2
        name = bytes(view[pos:pos + name_len]).decode("utf-8")
        pos += name_len
        (rank,) = struct.unpack_from("<I", view, pos)
        pos += 4
        dims = struct.unpack_from(f"<{rank}I", view, pos)
        pos += 4 * rank
        count = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(view, dtype="<f4", count=count, offset=pos).reshape(dims)
        pos += 4 * count
        tensors[name] = arr.copy()
    if pos != len(blob):
        raise CheckpointError(f"{len(blob) - pos} trailing bytes")
    return tensors, meta


def save_checkpoint(path: str, tensors: dict[str, np.ndarray], meta: dict) -> None:
    atomic_write_bytes(path, serialize_checkpoint(tensors, meta))


def load_checkpoint(path: str) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        return deserialize_checkpoint(fh.read())


# ---------------------------------------------------------------------------
# model-level save/load
# ---------------------------------------------------------------------------

def save_model(path: str, model, optimizer=None, seed: int = 0, epoch: int = 0,
               extra_meta: dict | None = None) -> None:
    from dataclasses import asdict

    cfg_dict = asdict(model.cfg)
    fusion_dict = asdict(model.fusion)
    meta = {
        "kind": model.kind,
        "model_config": cfg_dict,
        "fusion_config": fusion_dict,
        "seed": seed,
        "epoch": epoch,
        "config_hash": config_hash({"model": cfg_dict, "fusion": fusion_dict}),
    }
    if extra_meta:
        meta.update(extra_meta)
    tensors = {name: p.data for name, p in model.params().items()}
    if optimizer is not None:
        meta["adam_t"] = optimizer.t
        for name, arr in optimizer.m.items():
            tensors[f"opt.m.{name}"] = arr
        for name, arr in optimizer.v.items():
            tensors[f"opt.v.{name}"] = arr
    save_checkpoint(path, tensors, meta)


def load_model(path: str):
    """Rebuild (model, optimizer, meta) from a checkpoint file."""
    from .embedding import FusionConfig
    from .models import build_model
    from .nn import AdamState, ModelConfig

    tensors, meta = load_checkpoint(path)
    cfg = ModelConfig(**meta["model_config"])
    fusion = FusionConfig(**meta["fusion_config"])
    model = build_model(meta["kind"], cfg, fusion, seed=meta.get("seed", 0))
    params = model.params()
    for name, p in params.items():
        if name not in tensors:
            raise CheckpointError(f"checkpoint missing tensor {name!r}")
        if tuple(tensors[name].shape) != tuple(p.data.shape):
            raise CheckpointError(
                f"tensor {name!r} has shape {tensors[name].shape}, "
                f"model expects {p.data.shape}")
        p.data = tensors[name].astype(p.data.dtype)
    optimizer = None
    if "adam_t" in meta:
        optimizer = AdamState(t=meta["adam_t"])
        for name in params:
            if f"opt.m.{name}" in tensors:
                optimizer.m[name] = tensors[f"opt.m.{name}"].astype(np.float32)
                optimizer.v[name] = tensors[f"opt.v.{name}"].astype(np.float32)
    return model, optimizer, meta
