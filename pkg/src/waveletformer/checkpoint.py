"""Binary checkpoint format ``WFN1``.

Layout (all integers little-endian)::

    b"WFN1"                     4-byte magic
    uint32 manifest_len
    manifest                    UTF-8 JSON: {"config": {...},
                                 "params": [[name, dtype_code, shape], ...]}
    payload                     raw little-endian scalars, parameters in manifest order
    uint64 checksum             BLAKE2b (8-byte digest) of the payload

``dtype_code`` is ``"f8"`` or ``"f4"``.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .network import NetworkConfig, WaveletFormerNet

MAGIC = b"WFN1"


class CheckpointError(ValueError):
    """Corrupt, incompatible or mismatched checkpoint."""


class ConfigMismatchError(CheckpointError):
    pass


def _checksum(payload: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def save_checkpoint(model: WaveletFormerNet, path, extra: dict | None = None) -> None:
    params = model.parameters()
    entries, chunks = [], []
    for name, p in params.items():
        arr = np.ascontiguousarray(p.data)
        code = {np.dtype(np.float64): "f8", np.dtype(np.float32): "f4"}[arr.dtype]
        entries.append([name, code, list(arr.shape)])
        chunks.append(arr.astype("<" + code, copy=False).tobytes())
    manifest = {"config": model.cfg.to_dict(), "params": entries}
    if extra:
        manifest["extra"] = extra
    head = json.dumps(manifest, sort_keys=True).encode()
    payload = b"".join(chunks)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(MAGIC + struct.pack("<I", len(head)) + head + payload
                    + struct.pack("<Q", _checksum(payload)))
    tmp.replace(path)


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Parse and verify a checkpoint; returns ``(manifest, {name: array})``."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"bad magic {raw[:4]!r}; expected {MAGIC!r}")
    if len(raw) < 16:
        raise CheckpointError("truncated checkpoint")
    (mlen,) = struct.unpack_from("<I", raw, 4)
    start = 8 + mlen
    if start + 8 > len(raw):
        raise CheckpointError("truncated checkpoint manifest")
    try:
        manifest = json.loads(raw[8:start].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt manifest: {exc}") from None
    payload = raw[start:-8]
    (stored,) = struct.unpack("<Q", raw[-8:])
    if _checksum(payload) != stored:
        raise CheckpointError("checksum mismatch: payload is corrupt")
    arrays, offset = {}, 0
    for name, code, shape in manifest["params"]:
        if code not in ("f8", "f4"):
            raise CheckpointError(f"unsupported dtype code {code!r}")
        dt = np.dtype("<" + code)
        n = int(np.prod(shape)) * dt.itemsize
        if offset + n > len(payload):
            raise CheckpointError(f"payload too short for parameter {name}")
        arrays[name] = np.frombuffer(payload, dt, int(np.prod(shape)), offset).reshape(shape).astype(dt.newbyteorder("="))
        offset += n
    if offset != len(payload):
        raise CheckpointError("payload has trailing bytes")
    return manifest, arrays


def load_checkpoint(path, cfg: NetworkConfig | None = None) -> WaveletFormerNet:
    """Rebuild the stored model; if ``cfg`` is given it must equal the stored config."""
    manifest, arrays = read_checkpoint(path)
    stored = NetworkConfig.from_dict(manifest["config"])
    if cfg is not None and cfg != stored:
        diff = {k: (v, getattr(stored, k)) for k, v in cfg.to_dict().items()
                if stored.to_dict().get(k) != v}
        raise ConfigMismatchError(f"checkpoint config differs (requested, stored): {diff}")
    model = WaveletFormerNet(stored)
    params = model.parameters()
    if list(params) != list(arrays):
        raise CheckpointError("parameter names in checkpoint do not match the architecture")
    for name, p in params.items():
        if p.shape != arrays[name].shape:
            raise CheckpointError(f"shape mismatch for {name}: {arrays[name].shape} vs {p.shape}")
        p.data = arrays[name].copy()
    return model
