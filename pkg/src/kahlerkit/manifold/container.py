"""Binary field container and its key=value metadata sidecar.

Layout::

    magic      8 bytes   b"KKFIELD1"
    hlen       uint32 little-endian, length of the header block
    header     hlen bytes of UTF-8 ``key=value`` lines
    payload    row-major little-endian complex values (complex64 unless the
               header says dtype=complex128)

Required header keys: manifold, m, grid (comma-separated shape), name, dtype.
Further keys carry the grid spec (N, n_theta, ...).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"KKFIELD1"
DTYPES = {"complex64": "<c8", "complex128": "<c16"}


class ContainerError(ValueError):
    pass


def _header_text(meta: dict) -> str:
    lines = []
    for k, v in meta.items():
        if "=" in str(k) or "\n" in str(v) or "\n" in str(k):
            raise ContainerError(f"unsafe header entry {k!r}")
        lines.append(f"{k}={v}")
    return "\n".join(lines) + "\n"


def parse_keyvalue(text: str) -> dict:
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ContainerError(f"line {n}: expected key=value, got {line!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def write_field(path, values, grid_spec: dict, name: str, dtype: str = "complex64", extra=None):
    """Write ``values`` (shape = grid shape) and a ``.meta`` sidecar next to it."""
    if dtype not in DTYPES:
        raise ContainerError(f"dtype must be one of {sorted(DTYPES)}")
    path = Path(path)
    values = np.asarray(values)
    meta = {
        "manifold": grid_spec["manifold"],
        "m": grid_spec["m"],
        "grid": ",".join(str(s) for s in values.shape),
        "name": name,
        "dtype": dtype,
    }
    for k, v in grid_spec.items():
        if k not in ("manifold", "m"):
            meta[k] = v
    if extra:
        meta.update(extra)
    header = _header_text(meta).encode("utf-8")
    payload = np.ascontiguousarray(values, dtype=DTYPES[dtype]).tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(payload)
    meta_path = path.with_name(path.name + ".meta")
    meta_path.write_text(_header_text({**meta, "bytes": len(payload)}), encoding="utf-8")
    return path


def read_field(path):
    """Return ``(values, header)``; values are complex128."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:8] != MAGIC:
        raise ContainerError(f"{path}: not a field container (bad magic)")
    (hlen,) = struct.unpack("<I", raw[8:12])
    header = parse_keyvalue(raw[12 : 12 + hlen].decode("utf-8"))
    for key in ("manifold", "m", "grid", "name", "dtype"):
        if key not in header:
            raise ContainerError(f"{path}: header lacks {key!r}")
    if header["dtype"] not in DTYPES:
        raise ContainerError(f"{path}: unknown dtype {header['dtype']!r}")
    shape = tuple(int(s) for s in header["grid"].split(","))
    data = np.frombuffer(raw[12 + hlen :], dtype=DTYPES[header["dtype"]])
    if data.size != int(np.prod(shape)):
        raise ContainerError(f"{path}: payload has {data.size} values, header promises {shape}")
    return data.reshape(shape).astype(np.complex128), header


def read_meta(path) -> dict:
    return parse_keyvalue(Path(path).read_text(encoding="utf-8"))
