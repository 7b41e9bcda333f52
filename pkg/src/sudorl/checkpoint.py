"""Deterministic binary checkpoint container.

Layout: 8-byte magic, u64 little-endian header length, canonical JSON header
(sorted keys), then raw C-order array bytes concatenated in manifest order.
Identical state always serializes to identical bytes, so file hashes are
usable as provenance identities.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError
from .model import ModelConfig

MAGIC = b"SUDORL01"


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    config: ModelConfig
    step: int = 0
    vocab_hash: str = ""
    opt_arrays: dict[str, np.ndarray] = field(default_factory=dict)
    opt_t: int = 0
    extra: dict = field(default_factory=dict)


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_checkpoint(path, params: dict[str, np.ndarray], config: ModelConfig, *,
                    step: int = 0, vocab_hash: str = "",
                    opt_arrays: dict[str, np.ndarray] | None = None,
                    opt_t: int = 0, extra: dict | None = None) -> None:
    groups = [("param", params), ("opt", opt_arrays or {})]
    manifest = []
    payload = bytearray()
    for group, arrays in groups:
        for name in sorted(arrays):
            arr = np.ascontiguousarray(arrays[name])
            raw = arr.tobytes()
            manifest.append({
                "group": group,
                "name": name,
                "dtype": arr.dtype.str,
                "shape": list(arr.shape),
                "offset": len(payload),
                "nbytes": len(raw),
            })
            payload.extend(raw)
    header = _canonical_json({
        "version": 1,
        "config": {
            "n_layers": config.n_layers,
            "n_heads": config.n_heads,
            "d_model": config.d_model,
            "vocab_size": config.vocab_size,
            "max_seq_len": config.max_seq_len,
            "seed": config.seed,
            "dtype": config.dtype,
        },
        "step": int(step),
        "vocab_hash": vocab_hash,
        "opt_t": int(opt_t),
        "extra": extra or {},
        "arrays": manifest,
    })
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        f.write(bytes(payload))


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(blob) < 16 or blob[:8] != MAGIC:
        raise InputError(f"{path} is not a checkpoint file (bad magic)")
    (hlen,) = struct.unpack("<Q", blob[8:16])
    if 16 + hlen > len(blob):
        raise InputError(f"{path} is truncated (header)")
    try:
        header = json.loads(blob[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InputError(f"{path} has a corrupt header: {exc}") from exc
    base = 16 + hlen
    params: dict[str, np.ndarray] = {}
    opt: dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        lo = base + entry["offset"]
        hi = lo + entry["nbytes"]
        if hi > len(blob):
            raise InputError(f"{path} is truncated (array {entry['name']})")
        arr = np.frombuffer(blob[lo:hi], dtype=np.dtype(entry["dtype"]))
        arr = arr.reshape(entry["shape"]).copy()
        (params if entry["group"] == "param" else opt)[entry["name"]] = arr
    return Checkpoint(
        params=params,
        config=ModelConfig(**header["config"]),
        step=int(header["step"]),
        vocab_hash=header.get("vocab_hash", ""),
        opt_arrays=opt,
        opt_t=int(header.get("opt_t", 0)),
        extra=header.get("extra", {}),
    )
