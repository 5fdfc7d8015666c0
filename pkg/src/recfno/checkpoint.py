"""Versioned binary container for named parameter tensors.

Layout (all integers little-endian):
  magic "RFCK" | u32 version | u32 len | config text (key = value lines)
  u32 tensor count, then per tensor:
    u32 name length | name UTF-8 | u8 dtype (0 real, 1 complex) |
    u32 rank | u32 extents[rank] | float32 payload
Complex tensors store interleaved real/imag float32 pairs.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataFormatError

MAGIC = b"RFCK"
VERSION = 1


def dump_config(config: dict[str, str]) -> str:
    lines = []
    for key, value in config.items():
        value = str(value)
        if "\n" in key or "\n" in value or "=" in key:
            raise DataFormatError(f"config entry {key!r} not representable")
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def parse_config(text: str) -> dict[str, str]:
    config: dict[str, str] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataFormatError(f"malformed config line {line!r}")
        key, value = line.split("=", 1)
        config[key.strip()] = value.strip()
    return config


def write_checkpoint(path, config: dict[str, str], tensors: list[tuple[str, np.ndarray]]) -> None:
    blob = dump_config(config).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors:
            nb = name.encode("utf-8")
            is_complex = np.iscomplexobj(arr)
            fh.write(struct.pack("<I", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<BI", 1 if is_complex else 0, arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            if is_complex:
                flat = np.empty(arr.size * 2, dtype="<f4")
                flat[0::2] = arr.real.reshape(-1)
                flat[1::2] = arr.imag.reshape(-1)
            else:
                flat = np.asarray(arr, dtype="<f4").reshape(-1)
            fh.write(flat.tobytes())


def read_checkpoint(path) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    """Returns (config, tensors); float64/complex128 arrays holding the
    exact float32 values that were written."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise DataFormatError(f"{path}: not a checkpoint file")
    version, clen = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise DataFormatError(f"{path}: unsupported version {version}")
    off = 12
    config = parse_config(raw[off : off + clen].decode("utf-8"))
    off += clen
    (count,) = struct.unpack_from("<I", raw, off)
    off += 4
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", raw, off)
        off += 4
        name = raw[off : off + nlen].decode("utf-8")
        off += nlen
        is_complex, rank = struct.unpack_from("<BI", raw, off)
        off += 5
        shape = struct.unpack_from(f"<{rank}I", raw, off)
        off += 4 * rank
        n = int(np.prod(shape)) if rank else 1
        width = 2 * n if is_complex else n
        flat = np.frombuffer(raw, dtype="<f4", count=width, offset=off)
        off += 4 * width
        if is_complex:
            arr = flat[0::2].astype(np.float64) + 1j * flat[1::2].astype(np.float64)
            tensors[name] = arr.reshape(shape)
        else:
            tensors[name] = flat.astype(np.float64).reshape(shape)
    if off != len(raw):
        raise DataFormatError(f"{path}: trailing bytes")
    return config, tensors
