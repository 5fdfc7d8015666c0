"""The binary parameter container."""

import numpy as np
import pytest

from recfno.checkpoint import dump_config, parse_config, read_checkpoint, write_checkpoint
from recfno.errors import DataFormatError


def test_roundtrip_real_and_complex(tmp_path, rng):
    path = tmp_path / "model.rfck"
    real = rng.normal((3, 4)).astype(np.float32).astype(np.float64)
    cplx = (rng.normal((2, 2, 2)) + 1j * rng.normal((2, 2, 2))).astype(np.complex64).astype(np.complex128)
    scalar = np.array(rng.normal(1)[0], dtype=np.float64).astype(np.float32).astype(np.float64)
    config = {"model": "recfno", "width": "8", "norm.mean": repr(3.14)}
    write_checkpoint(path, config, [("a", real), ("b.r", cplx), ("c", scalar)])
    got_cfg, got = read_checkpoint(path)
    assert got_cfg == config
    assert np.array_equal(got["a"], real)
    assert np.array_equal(got["b.r"], cplx)
    assert got["c"].shape == ()
    assert np.array_equal(got["c"], scalar)


def test_float32_rounding_is_exact_on_reload(tmp_path, rng):
    path = tmp_path / "m.rfck"
    arr = rng.normal(100)  # full float64 entropy
    write_checkpoint(path, {}, [("x", arr)])
    _, got = read_checkpoint(path)
    assert np.array_equal(got["x"], arr.astype(np.float32).astype(np.float64))


def test_complex_interleaving_layout(tmp_path):
    path = tmp_path / "c.rfck"
    arr = np.array([1.0 + 2.0j, 3.0 + 4.0j])
    write_checkpoint(path, {}, [("z", arr)])
    raw = path.read_bytes()
    floats = np.frombuffer(raw[-16:], dtype="<f4")
    assert list(floats) == [1.0, 2.0, 3.0, 4.0]


def test_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.rfck"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(DataFormatError):
        read_checkpoint(path)


def test_rejects_wrong_version(tmp_path):
    path = tmp_path / "v.rfck"
    write_checkpoint(path, {}, [])
    raw = bytearray(path.read_bytes())
    raw[4] = 99
    path.write_bytes(bytes(raw))
    with pytest.raises(DataFormatError):
        read_checkpoint(path)


def test_rejects_truncated_file(tmp_path, rng):
    path = tmp_path / "t.rfck"
    write_checkpoint(path, {}, [("x", rng.normal(10))])
    raw = path.read_bytes()
    path.write_bytes(raw[:-4])
    with pytest.raises(Exception):
        read_checkpoint(path)


def test_config_text_roundtrip():
    config = {"a": "1", "b.c": "hello world", "f": repr(0.1)}
    assert parse_config(dump_config(config)) == config


def test_config_rejects_newlines():
    with pytest.raises(DataFormatError):
        dump_config({"a": "x\ny"})
