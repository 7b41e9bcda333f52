"""Run manifests and content hashing.

Every CLI command writes a manifest recording the exact command, resolved
flag values, seed, and sha256 of each input and output file.  Manifests are
canonical JSON with no timestamps, so re-running a command byte-identically
reproduces its manifest.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .errors import InputError


def sha256_file(path) -> str:
    path = Path(path)
    h = hashlib.sha256()
    try:
        with open(path, "rb") as f:
            for chunk in iter(lambda: f.read(1 << 20), b""):
                h.update(chunk)
    except OSError as exc:
        raise InputError(f"cannot hash {path}: {exc}") from exc
    return h.hexdigest()


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def write_manifest(path, *, command: str, flags: dict, seed: int | None,
                   inputs: dict[str, str], outputs: dict[str, str]) -> None:
    """inputs/outputs map file path -> sha256 hex digest."""
    doc = {
        "command": command,
        "flags": {k: flags[k] for k in sorted(flags)},
        "seed": seed,
        "inputs": {k: inputs[k] for k in sorted(inputs)},
        "outputs": {k: outputs[k] for k in sorted(outputs)},
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def read_manifest(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"manifest {path} is not valid JSON: {exc}") from exc
