"""Binary container for datasets, packaged models, and checkpoints.

One magic, three format versions, all little-endian:

  magic    4 bytes  b"UNND"
  version  u16      1 = dataset, 2 = model, 3 = checkpoint

A dataset body is a u16 section count followed by named tensor sections.
Each section is: name length (u8), name bytes (utf-8), rank (u8), dims
(u32 each), then the payload as float32 values in row-major order.
Datasets carry exactly the sections train_x, train_y, test_x, test_y.

Model and checkpoint bodies start with a u32 length-prefixed canonical
JSON header (sorted keys, no whitespace) before their tensor sections,
so identical content always produces identical bytes.
"""
from __future__ import annotations

import io
import json
import struct

import numpy as np

from .errors import FormatError

MAGIC = b"UNND"
VERSION_DATASET = 1
VERSION_MODEL = 2
VERSION_CHECKPOINT = 3

DATASET_SECTIONS = ("train_x", "train_y", "test_x", "test_y")

F32 = np.float32


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _write_section(buf: io.BytesIO, name: str, arr: np.ndarray) -> None:
    encoded = name.encode("utf-8")
    if len(encoded) > 255:
        raise FormatError(f"section name too long: {name!r}")
    arr = np.ascontiguousarray(arr, dtype="<f4")
    if arr.ndim > 255:
        raise FormatError(f"section {name!r}: rank {arr.ndim} too large")
    buf.write(struct.pack("<B", len(encoded)))
    buf.write(encoded)
    buf.write(struct.pack("<B", arr.ndim))
    for d in arr.shape:
        buf.write(struct.pack("<I", d))
    buf.write(arr.tobytes())


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise FormatError("truncated container")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return struct.unpack("<B", self.take(1))[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def done(self) -> bool:
        return self.pos == len(self.blob)


def _read_section(r: _Reader) -> tuple[str, np.ndarray]:
    name = r.take(r.u8()).decode("utf-8")
    rank = r.u8()
    shape = tuple(r.u32() for _ in range(rank))
    count = int(np.prod(shape)) if shape else 1
    payload = r.take(count * 4)
    arr = np.frombuffer(payload, dtype="<f4").reshape(shape).astype(F32)
    return name, arr


def _open(blob: bytes, expect_version: int) -> _Reader:
    r = _Reader(blob)
    if r.take(4) != MAGIC:
        raise FormatError("bad magic: not a container file")
    version = r.u16()
    if version != expect_version:
        raise FormatError(f"expected format version {expect_version}, got {version}")
    return r


def _read_sections(r: _Reader) -> dict[str, np.ndarray]:
    count = r.u16()
    sections: dict[str, np.ndarray] = {}
    for _ in range(count):
        name, arr = _read_section(r)
        if name in sections:
            raise FormatError(f"duplicate section {name!r}")
        sections[name] = arr
    if not r.done():
        raise FormatError("trailing bytes after final section")
    return sections


# ---------------------------------------------------------------------------
# datasets


def encode_dataset(splits: dict[str, np.ndarray]) -> bytes:
    missing = [s for s in DATASET_SECTIONS if s not in splits]
    if missing:
        raise FormatError(f"dataset missing sections {missing}")
    extra = [s for s in splits if s not in DATASET_SECTIONS]
    if extra:
        raise FormatError(f"dataset has unexpected sections {sorted(extra)}")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<H", VERSION_DATASET))
    buf.write(struct.pack("<H", len(DATASET_SECTIONS)))
    for name in DATASET_SECTIONS:
        _write_section(buf, name, splits[name])
    return buf.getvalue()


def decode_dataset(blob: bytes) -> dict[str, np.ndarray]:
    r = _open(blob, VERSION_DATASET)
    sections = _read_sections(r)
    missing = [s for s in DATASET_SECTIONS if s not in sections]
    if missing:
        raise FormatError(f"dataset missing sections {missing}")
    extra = [s for s in sections if s not in DATASET_SECTIONS]
    if extra:
        raise FormatError(f"dataset has unexpected sections {sorted(extra)}")
    for split in ("train", "test"):
        nx = sections[f"{split}_x"].shape
        ny = sections[f"{split}_y"].shape
        if not nx or not ny or nx[0] != ny[0]:
            raise FormatError(
                f"{split} split rows disagree: x {nx}, y {ny}"
            )
    return sections


# ---------------------------------------------------------------------------
# models


def encode_model(header: dict, params: dict[str, np.ndarray], order: list[str]) -> bytes:
    """Package a model: canonical JSON header, then params in graph order."""
    if sorted(order) != sorted(params):
        raise FormatError("parameter order does not cover the parameter set")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<H", VERSION_MODEL))
    blob = canonical_json(header)
    buf.write(struct.pack("<I", len(blob)))
    buf.write(blob)
    buf.write(struct.pack("<H", len(order)))
    for pid in order:
        _write_section(buf, pid, params[pid])
    return buf.getvalue()


def decode_model(blob: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    r = _open(blob, VERSION_MODEL)
    header = json.loads(r.take(r.u32()).decode("utf-8"))
    sections = _read_sections(r)
    declared = header.get("param_count")
    actual = sum(int(a.size) for a in sections.values())
    if declared is not None and declared != actual:
        raise FormatError(f"header says {declared} parameters, file holds {actual}")
    return header, sections


# ---------------------------------------------------------------------------
# checkpoints


def encode_checkpoint(header: dict, sections: dict[str, np.ndarray], order: list[str]) -> bytes:
    if sorted(order) != sorted(sections):
        raise FormatError("section order does not cover the section set")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<H", VERSION_CHECKPOINT))
    blob = canonical_json(header)
    buf.write(struct.pack("<I", len(blob)))
    buf.write(blob)
    buf.write(struct.pack("<H", len(order)))
    for name in order:
        _write_section(buf, name, sections[name])
    return buf.getvalue()


def decode_checkpoint(blob: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    r = _open(blob, VERSION_CHECKPOINT)
    header = json.loads(r.take(r.u32()).decode("utf-8"))
    sections = _read_sections(r)
    return header, sections
