"""Bit-exact on-disk cache for frozen-encoder embeddings.

Entry file layout: 8-byte magic ``EMBCACH1``, 4-byte little-endian header
length, JSON header ``{sample_id, encoder_id, shape:[C,H,W], dtype:"f32le",
checksum}`` where checksum is the CRC32 of the payload, then the raw float32
little-endian payload in C-row-major order. Header JSON is canonical (sorted
keys, no whitespace), so rewriting the same embedding produces identical
bytes. Writes go through a temp file + rename; concurrent readers are safe
under the single-writer contract.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import zlib
from pathlib import Path

import numpy as np

from . import errors
from .encoder import Embedding

MAGIC = b"EMBCACH1"


def entry_bytes(sample_id: str, encoder_id: str, emb: Embedding) -> bytes:
    payload = np.ascontiguousarray(
        emb.values.astype("<f4", copy=False)).tobytes()
    header = json.dumps({
        "sample_id": sample_id,
        "encoder_id": encoder_id,
        "shape": list(emb.values.shape),
        "dtype": "f32le",
        "checksum": zlib.crc32(payload) & 0xFFFFFFFF,
    }, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<I", len(header)) + header + payload


def parse_entry(blob: bytes) -> tuple[dict, np.ndarray]:
    if len(blob) < len(MAGIC) + 4 or blob[:len(MAGIC)] != MAGIC:
        raise errors.CorruptEntry("bad magic or truncated entry")
    (header_len,) = struct.unpack("<I", blob[8:12])
    header_end = 12 + header_len
    if len(blob) < header_end:
        raise errors.CorruptEntry("truncated header")
    try:
        header = json.loads(blob[12:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise errors.CorruptEntry(f"unreadable header: {exc}") from exc
    if header.get("dtype") != "f32le":
        raise errors.CorruptEntry(f"unsupported dtype {header.get('dtype')!r}")
    shape = tuple(header["shape"])
    payload = blob[header_end:]
    expected = 4 * int(np.prod(shape))
    if len(payload) != expected:
        raise errors.CorruptEntry(
            f"payload is {len(payload)} bytes, expected {expected}")
    if (zlib.crc32(payload) & 0xFFFFFFFF) != header["checksum"]:
        raise errors.CorruptEntry("checksum mismatch")
    values = np.frombuffer(payload, dtype="<f4").reshape(shape)
    return header, values


class EmbeddingCache:
    """Directory of embedding entries keyed by (sample_id, encoder_id)."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path_for(self, sample_id: str, encoder_id: str) -> Path:
        key = hashlib.sha256(
            f"{sample_id}\x00{encoder_id}".encode("utf-8")).hexdigest()[:24]
        return self.root / f"{key}.emb"

    def put(self, sample_id: str, encoder_id: str, emb: Embedding) -> Path:
        path = self.path_for(sample_id, encoder_id)
        blob = entry_bytes(sample_id, encoder_id, emb)
        tmp = path.with_suffix(".tmp")
        tmp.write_bytes(blob)
        os.replace(tmp, path)
        return path

    def get(self, sample_id: str, encoder_id: str) -> Embedding | None:
        path = self.path_for(sample_id, encoder_id)
        if not path.exists():
            return None
        header, values = parse_entry(path.read_bytes())
        if header["sample_id"] != sample_id or header["encoder_id"] != encoder_id:
            raise errors.CorruptEntry(
                f"key mismatch in {path.name}: header says "
                f"({header['sample_id']}, {header['encoder_id']})")
        return Embedding(values=values.copy(), encoder_id=encoder_id)

    def __contains__(self, key: tuple[str, str]) -> bool:
        return self.path_for(*key).exists()
