"""Binary snapshot of a :class:`BipartiteGraph` for fast reload.

Layout (all integers little-endian)::

    magic        4 bytes   b"SGR1"
    version      u32       1
    n_users      u64
    n_hashtags   u64
    n_edges      u64
    user_indptr  i64[n_users + 1]
    user_tags    i32[n_edges]
    user_weights i64[n_edges]
    tag_indptr   i64[n_hashtags + 1]
    tag_users    i32[n_edges]
    tag_weights  i64[n_edges]
    users        symbol block
    hashtags     symbol block

A symbol block is ``u8 kind`` followed by either nothing (kind 0: names are
the decimal indices) or, for kind 1, ``u64 total_bytes``, ``u32[n]`` lengths
and the concatenated UTF-8 names.
"""

from __future__ import annotations

import struct

import numpy as np

from .graph import BipartiteGraph, GraphError, RangeSymbols, SymbolTable

MAGIC = b"SGR1"
VERSION = 1
_HEADER = struct.Struct("<4sIQQQ")


def _write_symbols(fh, symbols) -> None:
    if isinstance(symbols, RangeSymbols):
        fh.write(b"\x00")
        return
    encoded = [s.encode("utf-8") for s in symbols]
    lengths = np.fromiter((len(b) for b in encoded), dtype="<u4", count=len(encoded))
    fh.write(b"\x01")
    fh.write(struct.pack("<Q", int(lengths.sum())))
    fh.write(lengths.tobytes())
    fh.write(b"".join(encoded))


def _read_symbols(fh, n: int):
    kind = fh.read(1)
    if kind == b"\x00":
        return RangeSymbols(n)
    if kind != b"\x01":
        raise GraphError("corrupt snapshot: bad symbol block")
    (total,) = struct.unpack("<Q", fh.read(8))
    lengths = np.frombuffer(fh.read(4 * n), dtype="<u4")
    blob = fh.read(total)
    if len(blob) != total or len(lengths) != n:
        raise GraphError("corrupt snapshot: truncated symbol block")
    offsets = np.r_[0, np.cumsum(lengths, dtype=np.int64)]
    return SymbolTable(blob[offsets[i]:offsets[i + 1]].decode("utf-8") for i in range(n))


def save_snapshot(g: BipartiteGraph, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, g.n_users, g.n_hashtags, g.n_edges))
        fh.write(g.user_indptr.astype("<i8").tobytes())
        fh.write(g.user_tags.astype("<i4").tobytes())
        fh.write(g.user_weights.astype("<i8").tobytes())
        fh.write(g.tag_indptr.astype("<i8").tobytes())
        fh.write(g.tag_users.astype("<i4").tobytes())
        fh.write(g.tag_weights.astype("<i8").tobytes())
        _write_symbols(fh, g.users)
        _write_symbols(fh, g.hashtags)


def load_snapshot(path) -> BipartiteGraph:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise GraphError(f"{path}: truncated snapshot header")
        magic, version, nu, nh, ne = _HEADER.unpack(head)
        if magic != MAGIC:
            raise GraphError(f"{path}: not a graph snapshot (magic {magic!r})")
        if version != VERSION:
            raise GraphError(f"{path}: unsupported snapshot version {version}")

        def arr(dtype, count):
            raw = fh.read(np.dtype(dtype).itemsize * count)
            if len(raw) != np.dtype(dtype).itemsize * count:
                raise GraphError(f"{path}: truncated snapshot")
            return np.frombuffer(raw, dtype=dtype)

        user_indptr = arr("<i8", nu + 1)
        user_tags = arr("<i4", ne)
        user_weights = arr("<i8", ne)
        tag_indptr = arr("<i8", nh + 1)
        tag_users = arr("<i4", ne)
        tag_weights = arr("<i8", ne)
        users = _read_symbols(fh, nu)
        hashtags = _read_symbols(fh, nh)
    g = BipartiteGraph(users, hashtags, user_indptr, user_tags, user_weights,
                       tag_indptr, tag_users, tag_weights)
    if user_indptr[-1] != ne or tag_indptr[-1] != ne:
        raise GraphError(f"{path}: inconsistent snapshot index")
    return g
