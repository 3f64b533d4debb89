"""Binary weight checkpoints.

Layout (all little-endian):

    bytes 0..3    magic b"CTXR"
    bytes 4..7    uint32 header length N
    bytes 8..8+N  UTF-8 JSON header:
                    {"format_version": 1,
                     "encoder": {...EncoderConfig fields...},
                     "tokenizer": {...TokenizerConfig fields...},
                     "tensors": [{"name": str, "shape": [int, ...]}, ...],
                     "extra": {...}}
    then          for each tensor, in header order: float32 values,
                  C (row-major) order, little-endian

The header's tensor list is authoritative for order and shapes, so the
file can be read from any language without knowing the architecture.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .encoder import EncoderConfig, TokenizerConfig

MAGIC = b"CTXR"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path: str | Path, encoder_cfg: EncoderConfig,
                    tok_cfg: TokenizerConfig, tensors: dict[str, np.ndarray],
                    extra: dict | None = None) -> None:
    manifest = [{"name": name, "shape": list(arr.shape)}
                for name, arr in tensors.items()]
    header = {
        "format_version": FORMAT_VERSION,
        "encoder": asdict(encoder_cfg),
        "tokenizer": asdict(tok_cfg),
        "tensors": manifest,
        "extra": extra or {},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for arr in tensors.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path: str | Path) -> tuple[EncoderConfig, TokenizerConfig,
                                               dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise CheckpointError(f"bad magic {magic!r}; not a checkpoint file")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(
                f"unsupported format_version {header.get('format_version')!r}")
        encoder_cfg = EncoderConfig(**header["encoder"])
        tok_cfg = TokenizerConfig(**header["tokenizer"])
        tensors: dict[str, np.ndarray] = {}
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 4)
            if len(raw) != count * 4:
                raise CheckpointError(f"truncated tensor {entry['name']!r}")
            tensors[entry["name"]] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
        trailing = fh.read(1)
        if trailing:
            raise CheckpointError("trailing bytes after last tensor")
    return encoder_cfg, tok_cfg, tensors, header.get("extra", {})
