"""Binary snapshot files.

Layout: the 4 magic bytes ``PBLB``, a little-endian u32 format version, a
u32 lattice size N, then the full ``(3, N, N, N)`` coefficient array in C
order as little-endian f64 (re, im) pairs.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from . import spectral as sp
from .errors import InvalidFieldError

MAGIC = b"PBLB"
VERSION = 1
_HEADER = struct.Struct("<4sII")


def encode(lat, uh):
    lat.check(uh)
    full = sp.to_full(lat, uh).astype("<c16", copy=False)
    return _HEADER.pack(MAGIC, VERSION, lat.n) + full.tobytes(order="C")


def decode(data, dealias_cut=2.0 / 3.0, rtol=1e-12):
    """Parse snapshot bytes; returns (lattice, half-spectrum field)."""
    if len(data) < _HEADER.size:
        raise InvalidFieldError("snapshot shorter than its header")
    magic, version, n = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise InvalidFieldError(f"bad magic {magic!r}")
    if version != VERSION:
        raise InvalidFieldError(f"unsupported snapshot version {version}")
    lat = sp.WaveLattice(int(n), dealias_cut)
    expected = _HEADER.size + 16 * 3 * n ** 3
    if len(data) != expected:
        raise InvalidFieldError(f"snapshot has {len(data)} bytes, expected {expected}")
    full = np.frombuffer(data, dtype="<c16", offset=_HEADER.size).reshape(lat.grid_shape)
    scale = max(float(np.max(np.abs(full), initial=0.0)), 1e-300)
    if sp.hermitian_defect(lat, full) > rtol * scale:
        raise InvalidFieldError("snapshot coefficients are not Hermitian-symmetric")
    uh = sp.from_full(lat, full).astype(complex)
    sp.check_field(lat, uh, rtol)
    return lat, uh


def write_snapshot(path, lat, uh):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode(lat, uh))
    return path


def read_snapshot(path, dealias_cut=2.0 / 3.0):
    return decode(Path(path).read_bytes(), dealias_cut)
