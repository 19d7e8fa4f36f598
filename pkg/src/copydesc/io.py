"""Bit-exact descriptor file I/O plus the CSV sidecar formats.

Binary layout (all little-endian), canonical interchange format:

    magic   4 bytes  b"ISCD"
    version u16      1
    dim     u16
    count   u64
    role    u8       0=query, 1=reference, 2=training
    reserved 7 bytes 0x00
    ids     count times (u16 byte length + UTF-8 bytes)
    vectors count*dim IEEE-754 float32, row-major

CSV files are debugging conveniences: descriptors as ``id,v0,...,v{d-1}``,
candidates as ``query_id,reference_id,score`` (scores printed with 9
significant digits, which round-trips float32 exactly), ground truth as
``query_id,reference_id``. Zero vectors are rejected when loading
descriptors — they poison fusion and stretching downstream.
"""
from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .descriptors import DescriptorSet, Role
from .exceptions import (
    BadMagicError,
    DuplicateIdError,
    FormatError,
    TruncatedFileError,
    UnsupportedVersionError,
    ValidationError,
)
from .metrics import GroundTruth
from .search import CandidateList, MatchCandidate
from .validation import check_no_zero_rows

MAGIC = b"ISCD"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHHQB7s")


def write_descriptors(dset: DescriptorSet, path) -> None:
    """Write a descriptor set in the binary format (atomic via .tmp rename)."""
    path = Path(path)
    if dset.dim > 0xFFFF:
        raise ValidationError(f"dim {dset.dim} does not fit the u16 header field")
    parts = [
        _HEADER.pack(MAGIC, FORMAT_VERSION, dset.dim, len(dset), int(dset.role), b"\x00" * 7)
    ]
    for name in dset.ids:
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ValidationError(f"id {name!r} exceeds 65535 UTF-8 bytes")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
    parts.append(np.ascontiguousarray(dset.vectors, dtype="<f4").tobytes())
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(b"".join(parts))
    tmp.replace(path)


def read_descriptors(path) -> DescriptorSet:
    """Read a binary descriptor file, checking magic, version, and payload size."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        if data[: len(MAGIC)] != MAGIC[: len(data)]:
            raise BadMagicError(f"{path}: not a descriptor file (bad magic)")
        raise TruncatedFileError(f"{path}: truncated header")
    magic, version, dim, count, role_code, _reserved = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise BadMagicError(f"{path}: not a descriptor file (bad magic {magic!r})")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"{path}: format version {version}, reader supports {FORMAT_VERSION}"
        )
    if dim == 0:
        raise FormatError(f"{path}: dim must be positive")
    if count == 0:
        raise FormatError(f"{path}: empty descriptor set")
    try:
        role = Role(role_code)
    except ValueError:
        raise FormatError(f"{path}: unknown role code {role_code}") from None

    offset = _HEADER.size
    ids: list[str] = []
    for _ in range(count):
        if offset + 2 > len(data):
            raise TruncatedFileError(f"{path}: truncated id table")
        (id_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        if offset + id_len > len(data):
            raise TruncatedFileError(f"{path}: truncated id table")
        try:
            ids.append(data[offset : offset + id_len].decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise FormatError(f"{path}: id is not valid UTF-8 ({exc})") from None
        offset += id_len

    payload = count * dim * 4
    if len(data) - offset < payload:
        raise TruncatedFileError(
            f"{path}: vector payload is {len(data) - offset} bytes, expected {payload}"
        )
    if len(data) - offset > payload:
        raise FormatError(f"{path}: {len(data) - offset - payload} trailing bytes")
    vectors = np.frombuffer(data, dtype="<f4", count=count * dim, offset=offset)
    vectors = vectors.reshape(count, dim)
    if not np.all(np.isfinite(vectors)):
        raise ValidationError(f"{path}: vectors contain NaN or Inf")
    check_no_zero_rows(vectors, str(path))
    if len(set(ids)) != len(ids):
        dup = next(i for i in ids if ids.count(i) > 1)
        raise DuplicateIdError(f"{path}: duplicate id {dup!r}")
    return DescriptorSet(role, ids, vectors)


def write_descriptors_csv(dset: DescriptorSet, path) -> None:
    """Debugging CSV with header ``id,v0,...,v{d-1}``; values at 9 significant digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + [f"v{i}" for i in range(dset.dim)])
        for name, row in zip(dset.ids, dset.vectors):
            writer.writerow([name] + [f"{v:.9g}" for v in row])


def read_descriptors_csv(path, role: Role) -> DescriptorSet:
    """Read the CSV variant; the role is not stored there and must be supplied."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or not header or header[0] != "id":
            raise FormatError(f"{path}: expected header starting with 'id'")
        dim = len(header) - 1
        if dim < 1 or header[1:] != [f"v{i}" for i in range(dim)]:
            raise FormatError(f"{path}: malformed descriptor CSV header")
        ids: list[str] = []
        rows: list[list[float]] = []
        for line_no, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != dim + 1:
                raise FormatError(f"{path}:{line_no}: expected {dim + 1} fields")
            ids.append(rec[0])
            try:
                rows.append([float(x) for x in rec[1:]])
            except ValueError as exc:
                raise FormatError(f"{path}:{line_no}: {exc}") from None
    if not ids:
        raise FormatError(f"{path}: empty descriptor CSV")
    if len(set(ids)) != len(ids):
        dup = next(i for i in ids if ids.count(i) > 1)
        raise DuplicateIdError(f"{path}: duplicate id {dup!r}")
    vectors = np.asarray(rows, dtype=np.float32)
    check_no_zero_rows(vectors, str(path))
    return DescriptorSet(role, ids, vectors)


def write_candidates(candidates: CandidateList, path) -> None:
    """pairs.csv with header ``query_id,reference_id,score``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["query_id", "reference_id", "score"])
        for c in candidates:
            writer.writerow([c.query_id, c.reference_id, f"{c.score:.9g}"])


def read_candidates(path, k: int | None = None) -> CandidateList:
    """Read pairs.csv; duplicate (query, reference) pairs are a format error.

    `k` defaults to the largest per-query group found, so externally produced
    files load without knowing the producer's cap.
    """
    entries: list[MatchCandidate] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["query_id", "reference_id", "score"]:
            raise FormatError(f"{path}: expected header query_id,reference_id,score")
        for line_no, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 3:
                raise FormatError(f"{path}:{line_no}: expected 3 fields")
            try:
                score = float(rec[2])
            except ValueError:
                raise FormatError(f"{path}:{line_no}: bad score {rec[2]!r}") from None
            entries.append(MatchCandidate(rec[0], rec[1], score))
    if k is None:
        counts: dict[str, int] = {}
        for c in entries:
            counts[c.query_id] = counts.get(c.query_id, 0) + 1
        k = max(counts.values(), default=1)
    entries.sort(key=lambda c: (c.query_id, c.score, c.reference_id))
    return CandidateList(entries=tuple(entries), k=k)


def write_truth(truth: GroundTruth, path) -> None:
    """truth.csv with header ``query_id,reference_id``, sorted for reproducibility."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["query_id", "reference_id"])
        for q, r in sorted(truth.pairs):
            writer.writerow([q, r])


def read_truth(path) -> GroundTruth:
    """Read truth.csv; a query id listed twice is a format error."""
    pairs: list[tuple[str, str]] = []
    seen: set[str] = set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["query_id", "reference_id"]:
            raise FormatError(f"{path}: expected header query_id,reference_id")
        for line_no, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 2:
                raise FormatError(f"{path}:{line_no}: expected 2 fields")
            if rec[0] in seen:
                raise FormatError(f"{path}:{line_no}: query {rec[0]!r} listed twice")
            seen.add(rec[0])
            pairs.append((rec[0], rec[1]))
    return GroundTruth.from_pairs(pairs)
