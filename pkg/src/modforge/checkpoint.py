"""``MMF1`` parameter checkpoints.

Layout (little-endian): magic ``MMF1``, version u32, count u32, then per
parameter: name length u16, UTF-8 name, rank u8, dims as u32, f64 payload.
"""
import struct

import numpy as np

from .errors import FormatError

MAGIC = b"MMF1"
VERSION = 1


def dumps(arrays):
    out = [MAGIC, struct.pack("<II", VERSION, len(arrays))]
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw)))
        out.append(raw)
        out.append(struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(out)


def loads(buf):
    def take(n, off, what):
        if off + n > len(buf):
            raise FormatError(f"truncated checkpoint while reading {what}", off)
        return buf[off:off + n], off + n

    head, off = take(4, 0, "magic")
    if head != MAGIC:
        raise FormatError(f"bad magic {head!r}", 0)
    raw, off = take(8, off, "header")
    version, count = struct.unpack("<II", raw)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", 4)
    arrays = {}
    for _ in range(count):
        raw, off = take(2, off, "name length")
        (nlen,) = struct.unpack("<H", raw)
        raw, off = take(nlen, off, "name")
        name = raw.decode("utf-8")
        raw, off = take(1, off, "rank")
        rank = raw[0]
        raw, off = take(4 * rank, off, "dims")
        dims = struct.unpack(f"<{rank}I", raw)
        size = int(np.prod(dims, dtype=np.int64)) if rank else 1
        raw, off = take(8 * size, off, f"payload of {name!r}")
        arrays[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(dims)
    if off != len(buf):
        raise FormatError("trailing bytes after last record", off)
    return arrays


def save(arrays, path):
    with open(path, "wb") as fh:
        fh.write(dumps(arrays))


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
