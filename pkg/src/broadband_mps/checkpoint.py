"""Binary checkpoint format for :class:`~broadband_mps.mps.MpsState`.

Layout (all integers little-endian):

==========  ==========  ==================================================
offset      type        meaning
==========  ==========  ==================================================
0           8 bytes     magic ``b"BBMPSCK\\x00"``
8           uint32      format version (currently 1)
12          uint32      n_sites
16          uint32      local_dim d
20          int32       orthogonality center, -1 if unknown
24          float64     cumulative discarded weight
32          uint32[n+1] bond dimensions, boundary bonds included
...         complex128  site tensors in order, each row-major (left, phys, right)
==========  ==========  ==================================================

Complex numbers are stored as interleaved (real, imag) float64 pairs.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .mps import MpsState

MAGIC = b"BBMPSCK\x00"
VERSION = 1
_HEAD = struct.Struct("<8sIIIid")


def to_bytes(state: MpsState) -> bytes:
    center = -1 if state.ortho_center is None else state.ortho_center
    parts = [
        _HEAD.pack(MAGIC, VERSION, state.n_sites, state.local_dim, center, state.cumulative_discarded_weight),
        np.asarray(state.bond_dims, dtype="<u4").tobytes(),
    ]
    parts += [np.ascontiguousarray(t, dtype="<c16").tobytes() for t in state.tensors]
    return b"".join(parts)


def from_bytes(buf: bytes) -> MpsState:
    if len(buf) < _HEAD.size:
        raise ValueError("checkpoint truncated before header end")
    magic, version, n, d, center, discarded = _HEAD.unpack_from(buf, 0)
    if magic != MAGIC:
        raise ValueError(f"bad checkpoint magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    off = _HEAD.size
    bonds = np.frombuffer(buf, dtype="<u4", count=n + 1, offset=off).astype(int)
    off += 4 * (n + 1)
    tensors = []
    for k in range(n):
        shape = (bonds[k], d, bonds[k + 1])
        count = int(np.prod(shape))
        if off + 16 * count > len(buf):
            raise ValueError(f"checkpoint truncated in tensor {k}")
        t = np.frombuffer(buf, dtype="<c16", count=count, offset=off).reshape(shape)
        tensors.append(t.astype(np.complex128))
        off += 16 * count
    if off != len(buf):
        raise ValueError(f"{len(buf) - off} trailing bytes after last tensor")
    return MpsState(tensors, d, None if center < 0 else center, discarded)


def save(state: MpsState, path: str | Path) -> None:
    Path(path).write_bytes(to_bytes(state))


def load(path: str | Path) -> MpsState:
    return from_bytes(Path(path).read_bytes())
