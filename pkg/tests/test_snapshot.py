import struct

import numpy as np
import pytest

from pblab import spectral as sp
from pblab.errors import InvalidFieldError
from pblab.snapshot import MAGIC, decode, encode, read_snapshot, write_snapshot


def test_roundtrip_is_exact(tmp_path, lat8):
    u = sp.random_field(lat8, np.random.default_rng(0))
    path = write_snapshot(tmp_path / "a" / "u.pblb", lat8, u)
    lat, v = read_snapshot(path)
    assert lat == lat8
    assert np.array_equal(u, v)


def test_layout(lat8):
    data = encode(lat8, lat8.zeros())
    assert data[:4] == MAGIC
    assert struct.unpack_from("<II", data, 4) == (1, 8)
    assert len(data) == 12 + 16 * 3 * 8 ** 3


def test_rejects_corrupt_files(lat8):
    u = sp.random_field(lat8, np.random.default_rng(1))
    data = bytearray(encode(lat8, u))
    with pytest.raises(InvalidFieldError, match="magic"):
        decode(b"XXXX" + bytes(data[4:]))
    with pytest.raises(InvalidFieldError, match="version"):
        decode(bytes(data[:4]) + struct.pack("<I", 9) + bytes(data[8:]))
    with pytest.raises(InvalidFieldError, match="bytes"):
        decode(bytes(data[:-16]))
    with pytest.raises(InvalidFieldError, match="header"):
        decode(b"PB")
    # breaking Hermitian symmetry of one coefficient
    full = np.frombuffer(bytes(data[12:]), dtype="<c16").copy()
    full[100] += 1.0
    with pytest.raises(InvalidFieldError):
        decode(bytes(data[:12]) + full.tobytes())
