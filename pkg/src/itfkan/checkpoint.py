"""Binary checkpoint format.

Layout (all integers little-endian):

    magic   4 bytes  b"ITFK"
    version u32
    config  u64 byte length, then UTF-8 "key=value" lines (LF separated)
    tensors repeated until EOF:
        u64 name length, name bytes (UTF-8)
        u64 rank, rank * u64 dims
        raw float64 data, row-major

Round-trips are bit-exact; writes go to a temp file and are renamed into
place.
"""

import os
import struct

import numpy as np

MAGIC = b"ITFK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, config, tensors):
    """config: list of (key, value-str) pairs; tensors: list of (name, array)."""
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        block = "".join(f"{k}={v}\n" for k, v in config).encode("utf-8")
        fh.write(struct.pack("<Q", len(block)))
        fh.write(block)
        for name, arr in tensors:
            arr = np.ascontiguousarray(arr, dtype=np.float64)
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<Q", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<Q", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<Q", dim))
            fh.write(arr.tobytes())
    os.replace(tmp, path)


def load_checkpoint(path):
    """Returns (config dict, ordered dict name -> float64 array)."""
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise CheckpointError(f"{path}: bad magic, not a checkpoint")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported format version {version}")
        (block_len,) = struct.unpack("<Q", fh.read(8))
        config = {}
        for line in fh.read(block_len).decode("utf-8").splitlines():
            if not line:
                continue
            key, _, value = line.partition("=")
            config[key] = value
        tensors = {}
        while True:
            raw = fh.read(8)
            if not raw:
                break
            (name_len,) = struct.unpack("<Q", raw)
            name = fh.read(name_len).decode("utf-8")
            (rank,) = struct.unpack("<Q", fh.read(8))
            dims = struct.unpack(f"<{rank}Q", fh.read(8 * rank)) if rank else ()
            count = int(np.prod(dims)) if dims else 1
            data = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(dims)
            tensors[name] = data.astype(np.float64)
    return config, tensors
