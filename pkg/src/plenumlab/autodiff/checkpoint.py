"""PTN1 checkpoint format: named float32 tensors plus a JSON sidecar.

Layout (little-endian): magic 'PTN1'; u32 entry count; per entry u16 name
length, UTF-8 name, u32 rank, u32 dims[rank], float32 payload.
"""

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"PTN1"


class BadMagic(ValueError):
    pass


class TruncatedFile(ValueError):
    pass


def save_checkpoint(path, params: dict, sidecar: dict | None = None):
    """Write named arrays (Tensor or ndarray) and the optional sidecar."""
    path = Path(path)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(params)))
        for name, value in params.items():
            arr = np.asarray(getattr(value, "data", value), dtype="<f4")
            encoded = name.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes(order="C"))
    if sidecar is not None:
        with open(path.with_suffix(path.suffix + ".json"), "w") as f:
            json.dump(sidecar, f, indent=2, sort_keys=True)
            f.write("\n")


def _read_exact(f, n, what):
    buf = f.read(n)
    if len(buf) != n:
        raise TruncatedFile(f"checkpoint truncated while reading {what}")
    return buf


def load_checkpoint(path):
    """Read back (params: dict[str, float32 array], sidecar: dict | None)."""
    path = Path(path)
    params = {}
    with open(path, "rb") as f:
        if _read_exact(f, 4, "magic") != MAGIC:
            raise BadMagic(f"{path} is not a PTN1 checkpoint")
        (count,) = struct.unpack("<I", _read_exact(f, 4, "entry count"))
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(f, 2, "name length"))
            name = _read_exact(f, name_len, "name").decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(f, 4, "rank"))
            dims = struct.unpack(f"<{rank}I",
                                 _read_exact(f, 4 * rank, "dims"))
            n_bytes = 4 * int(np.prod(dims, dtype=np.int64)) if rank else 4
            payload = _read_exact(f, n_bytes, f"payload of {name}")
            params[name] = np.frombuffer(payload, dtype="<f4").reshape(dims)
    sidecar_path = path.with_suffix(path.suffix + ".json")
    sidecar = None
    if sidecar_path.exists():
        with open(sidecar_path) as f:
            sidecar = json.load(f)
    return params, sidecar
