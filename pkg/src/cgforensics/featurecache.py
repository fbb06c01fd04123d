"""Binary feature cache.

Little-endian layout: header {magic "MCEF", version u32, count u32,
dim u32}, then count records of {image_id u64, label u8, branch u8,
dim float32 values}. The branch byte is the colorspace's index in the
fixed table order (RGB=0 ... YUV=10).
"""

import os
import struct

import numpy as np

from .colorspace import COLORSPACES

MAGIC = b"MCEF"
VERSION = 1
_HEADER = struct.Struct("<4sIII")
_REC_PREFIX = struct.Struct("<QBB")


class CacheFormatError(Exception):
    pass


def branch_index(space: str) -> int:
    try:
        return COLORSPACES.index(space)
    except ValueError:
        raise CacheFormatError("unknown branch %r" % (space,))


def branch_name(idx: int) -> str:
    if not 0 <= idx < len(COLORSPACES):
        raise CacheFormatError("branch byte %d out of range" % idx)
    return COLORSPACES[idx]


def _pack_record(image_id, label, branch, vec, dim):
    vec = np.asarray(vec, dtype="<f4")
    if vec.shape != (dim,):
        raise CacheFormatError("vector length %r, cache dim %d" % (vec.shape, dim))
    if not 0 <= int(label) <= 255 or not 0 <= int(branch) <= 255:
        raise CacheFormatError("label/branch must fit one byte")
    return _REC_PREFIX.pack(int(image_id), int(label), int(branch)) + vec.tobytes()


def write_cache(path, dim: int, records):
    """Create a cache file from an iterable of (image_id, label, branch, vector)."""
    count = 0
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, 0, dim))
        for image_id, label, branch, vec in records:
            f.write(_pack_record(image_id, label, branch, vec, dim))
            count += 1
        f.seek(0)
        f.write(_HEADER.pack(MAGIC, VERSION, count, dim))
    return count


def append_cache(path, records):
    """Append records to an existing cache, updating the header count."""
    dim, existing = _read_header(path)
    added = 0
    with open(path, "r+b") as f:
        f.seek(0, os.SEEK_END)
        for image_id, label, branch, vec in records:
            f.write(_pack_record(image_id, label, branch, vec, dim))
            added += 1
        f.seek(0)
        f.write(_HEADER.pack(MAGIC, VERSION, existing + added, dim))
    return added


def _read_header(path):
    with open(path, "rb") as f:
        head = f.read(_HEADER.size)
    if len(head) < _HEADER.size:
        raise CacheFormatError("file too short for a cache header")
    magic, version, count, dim = _HEADER.unpack(head)
    if magic != MAGIC:
        raise CacheFormatError("bad magic %r" % magic)
    if version != VERSION:
        raise CacheFormatError("unsupported cache version %d" % version)
    return dim, count


def read_cache(path):
    """Return (dim, records); records are (image_id, label, branch, float32 vector)."""
    dim, count = _read_header(path)
    rec_size = _REC_PREFIX.size + 4 * dim
    records = []
    with open(path, "rb") as f:
        f.seek(_HEADER.size)
        body = f.read()
    if len(body) != count * rec_size:
        raise CacheFormatError(
            "expected %d records of %d bytes, found %d bytes" % (count, rec_size, len(body)))
    for i in range(count):
        chunk = body[i * rec_size:(i + 1) * rec_size]
        image_id, label, branch = _REC_PREFIX.unpack_from(chunk)
        vec = np.frombuffer(chunk, dtype="<f4", count=dim, offset=_REC_PREFIX.size)
        records.append((image_id, label, branch, vec))
    return dim, records


def read_ids(path):
    """Image ids present in a cache, without loading the vectors."""
    dim, count = _read_header(path)
    rec_size = _REC_PREFIX.size + 4 * dim
    ids = set()
    with open(path, "rb") as f:
        f.seek(_HEADER.size)
        for _ in range(count):
            chunk = f.read(rec_size)
            if len(chunk) != rec_size:
                raise CacheFormatError("truncated record")
            image_id, _, _ = _REC_PREFIX.unpack_from(chunk)
            ids.add(image_id)
    return ids


def as_matrix(records, expect_branch=None):
    """Stack cache records into (ids, labels, features) arrays, sorted by id."""
    if expect_branch is not None:
        want = branch_index(expect_branch)
        for r in records:
            if r[2] != want:
                raise CacheFormatError(
                    "record branch %s, expected %s" % (branch_name(r[2]), expect_branch))
    recs = sorted(records, key=lambda r: r[0])
    ids = np.array([r[0] for r in recs], dtype=np.uint64)
    labels = np.array([r[1] for r in recs], dtype=np.int64)
    feats = np.stack([r[3] for r in recs]).astype(np.float32)
    return ids, labels, feats
