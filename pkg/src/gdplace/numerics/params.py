"""Named parameter storage and the binary checkpoint format.

Checkpoint layout (all integers little-endian unsigned 32-bit)::

    magic      8 bytes   b"GDPCKPT\\0"
    version    u32       currently 1
    count      u32       number of parameters
    repeated count times, in insertion order:
        name_len u32, name (utf-8, name_len bytes)
        ndim     u32, dims (ndim x u32)
        values   prod(dims) x float64 little-endian, row-major
"""

from __future__ import annotations

import struct
from collections.abc import Iterator, Mapping
from pathlib import Path

import numpy as np

from gdplace.errors import CheckpointError, ContractError
from gdplace.numerics.tensor import Tensor

MAGIC = b"GDPCKPT\0"
VERSION = 1


class ParamStore(Mapping):
    """Ordered name -> Tensor mapping; shapes are frozen at creation."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def create(self, name: str, value) -> Tensor:
        if name in self._params:
            raise ContractError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def assign(self, name: str, value) -> None:
        """Overwrite values in place; the shape must not change."""
        t = self._params[name]
        value = np.asarray(value, dtype=np.float64)
        if value.shape != t.shape:
            raise CheckpointError(f"{name}: shape {value.shape} != {t.shape}")
        t.data = value.copy()

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self._params.items()}

    def load_snapshot(self, snap: Mapping[str, np.ndarray]) -> None:
        missing = set(self._params) ^ set(snap)
        if missing:
            raise CheckpointError(f"parameter sets differ: {sorted(missing)}")
        for k, v in snap.items():
            self.assign(k, v)

    def num_values(self) -> int:
        return int(sum(t.data.size for t in self._params.values()))


def dumps(params: Mapping[str, Tensor]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(params))]
    for name, t in params.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack(f"<I{t.data.ndim}I", t.data.ndim, *t.data.shape))
        parts.append(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
    return b"".join(parts)


def loads(blob: bytes) -> dict[str, np.ndarray]:
    if blob[:8] != MAGIC:
        raise CheckpointError("not a gdplace checkpoint (bad magic)")
    pos = 8

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(blob):
            raise CheckpointError("truncated checkpoint")
        vals = struct.unpack_from(fmt, blob, pos)
        pos += size
        return vals

    version, count = take("<II")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = take("<I")
        name = blob[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (ndim,) = take("<I")
        dims = take(f"<{ndim}I")
        n = int(np.prod(dims, dtype=np.int64))
        end = pos + 8 * n
        if end > len(blob):
            raise CheckpointError(f"truncated values for {name!r}")
        out[name] = np.frombuffer(blob[pos:end], dtype="<f8").astype(np.float64).reshape(dims)
        pos = end
    if pos != len(blob):
        raise CheckpointError("trailing bytes after last parameter")
    return out


def save_checkpoint(params: Mapping[str, Tensor], path) -> None:
    Path(path).write_bytes(dumps(params))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    return loads(Path(path).read_bytes())
