import numpy as np
import pytest

from evlign.errors import ParseError
from evlign.tensor_io import TNS_MAGIC, read_tensor, write_tensor


@pytest.mark.parametrize("shape", [(7,), (3, 5), (2, 4, 6), (1, 1)])
def test_roundtrip(tmp_path, rng, shape):
    arr = rng.standard_normal(shape).astype(np.float32)
    path = tmp_path / "t.tns"
    write_tensor(path, arr)
    back = read_tensor(path)
    assert back.dtype == np.float32
    assert np.array_equal(back, arr)


def test_header_layout(tmp_path):
    path = tmp_path / "t.tns"
    write_tensor(path, np.zeros((2, 3), np.float32))
    blob = path.read_bytes()
    assert blob[:4] == TNS_MAGIC
    assert blob[4] == 2
    assert np.frombuffer(blob, "<u8", 2, 5).tolist() == [2, 3]
    assert len(blob) == 5 + 16 + 4 * 6


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.tns"
    path.write_bytes(b"XXXX\x01" + b"\x00" * 12)
    with pytest.raises(ParseError, match="magic"):
        read_tensor(path)


def test_truncated_payload(tmp_path):
    path = tmp_path / "t.tns"
    write_tensor(path, np.ones((4, 4), np.float32))
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ParseError, match="payload"):
        read_tensor(path)


def test_writes_are_deterministic(tmp_path, rng):
    arr = rng.standard_normal((5, 5))
    a, b = tmp_path / "a.tns", tmp_path / "b.tns"
    write_tensor(a, arr)
    write_tensor(b, arr)
    assert a.read_bytes() == b.read_bytes()
