"""Binary snapshot (PESF) and checkpoint (PECK) formats.

Snapshot: ``b"PESF"``, version, nx, ny, nz (``<u4``), then the full complex
coefficient array ``(2, nx, ny, nz)`` as little-endian (re, im) float64 pairs.

Checkpoint: ``b"PECK"``, version (``<u4``), member count (``<u4``), step
(``<u8``), 32-byte config digest; per member a snapshot block, a 16-byte
generator name, four ``<u8`` words (state high/low, increment high/low) and
the cached-``uint32`` pair; then a length-prefixed ``npz`` block of
auxiliary arrays; then the SHA-256 of everything before it.
"""
from __future__ import annotations

import hashlib
import io
import struct

import numpy as np

from .errors import CorruptCheckpoint, GridMismatch, VersionMismatch
from .grid import Grid, SpectralField, _half_to_full

SNAPSHOT_MAGIC = b"PESF"
SNAPSHOT_VERSION = 1
CHECKPOINT_MAGIC = b"PECK"
CHECKPOINT_VERSION = 1
_SNAP_HEADER = struct.Struct("<4sIIII")
_CK_HEADER = struct.Struct("<4sIIQ32s")
_RNG = struct.Struct("<16sQQQQII")
_MASK64 = (1 << 64) - 1


def snapshot_bytes(grid, half):
    full = _half_to_full(grid, np.asarray(half))
    return _SNAP_HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, grid.nx, grid.ny, grid.nz) + full.astype("<c16").tobytes()


def _read_snapshot(buf, offset=0):
    """Parse one snapshot block; returns ``(grid, half, next_offset)``."""
    if len(buf) - offset < _SNAP_HEADER.size:
        raise CorruptCheckpoint("truncated snapshot header")
    magic, version, nx, ny, nz = _SNAP_HEADER.unpack_from(buf, offset)
    if magic != SNAPSHOT_MAGIC:
        raise CorruptCheckpoint(f"bad snapshot magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise VersionMismatch(f"snapshot version {version}, expected {SNAPSHOT_VERSION}")
    grid = Grid(nx, ny, nz)
    offset += _SNAP_HEADER.size
    n = 2 * nx * ny * nz
    if len(buf) - offset < 16 * n:
        raise CorruptCheckpoint("truncated snapshot body")
    full = np.frombuffer(buf, dtype="<c16", count=n, offset=offset).reshape(2, nx, ny, nz)
    half = np.array(full[:, :, : ny // 2 + 1, :], dtype=complex)
    return grid, half, offset + 16 * n


def save_snapshot(path, v):
    with open(path, "wb") as fh:
        fh.write(snapshot_bytes(v.grid, v.data))


def load_snapshot(path, grid=None):
    with open(path, "rb") as fh:
        buf = fh.read()
    g, half, end = _read_snapshot(buf)
    if end != len(buf):
        raise CorruptCheckpoint("trailing bytes after snapshot")
    if grid is not None and g != grid:
        raise GridMismatch(f"snapshot grid {g} differs from {grid}")
    return SpectralField(g, half)


# generator state ---------------------------------------------------------


def rng_pack(rng):
    st = rng.bit_generator.state
    name = st["bit_generator"]
    if name != "PCG64":
        raise ValueError(f"only PCG64 generators can be checkpointed, got {name}")
    s, inc = st["state"]["state"], st["state"]["inc"]
    return _RNG.pack(
        name.encode().ljust(16, b"\0"),
        (s >> 64) & _MASK64,
        s & _MASK64,
        (inc >> 64) & _MASK64,
        inc & _MASK64,
        int(st["has_uint32"]),
        int(st["uinteger"]),
    )


def rng_unpack(buf, offset=0):
    name, sh, sl, ih, il, has, uint = _RNG.unpack_from(buf, offset)
    name = name.rstrip(b"\0").decode()
    if name != "PCG64":
        raise CorruptCheckpoint(f"unknown generator {name!r}")
    bg = np.random.PCG64()
    bg.state = {
        "bit_generator": name,
        "state": {"state": (sh << 64) | sl, "inc": (ih << 64) | il},
        "has_uint32": has,
        "uinteger": uint,
    }
    return np.random.Generator(bg), offset + _RNG.size


# checkpoints -------------------------------------------------------------


def config_digest(text):
    return hashlib.sha256(text.encode()).digest()


def checkpoint_bytes(grid, step, states, rngs, aux, digest):
    parts = [_CK_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(states), step, digest)]
    for a, r in zip(states, rngs):
        parts.append(snapshot_bytes(grid, a))
        parts.append(rng_pack(r))
    b = io.BytesIO()
    np.savez(b, **aux)
    blob = b.getvalue()
    parts.append(struct.pack("<Q", len(blob)))
    parts.append(blob)
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def checkpoint_save(path, grid, step, states, rngs, aux, digest):
    """Write a checkpoint atomically (temporary file then rename)."""
    import os

    data = checkpoint_bytes(grid, step, states, rngs, aux, digest)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def checkpoint_parse(buf):
    """Inverse of :func:`checkpoint_bytes`; returns a dict."""
    if len(buf) < _CK_HEADER.size + 32:
        raise CorruptCheckpoint("checkpoint truncated")
    body, trailer = buf[:-32], buf[-32:]
    magic, version, n, step, digest = _CK_HEADER.unpack_from(body, 0)
    if magic != CHECKPOINT_MAGIC:
        raise CorruptCheckpoint(f"bad checkpoint magic {magic!r}")
    if hashlib.sha256(body).digest() != trailer:
        raise CorruptCheckpoint("checkpoint integrity hash mismatch")
    if version != CHECKPOINT_VERSION:
        raise VersionMismatch(f"checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    off = _CK_HEADER.size
    states, rngs, grid = [], [], None
    for _ in range(n):
        grid, half, off = _read_snapshot(body, off)
        states.append(half)
        if len(body) - off < _RNG.size:
            raise CorruptCheckpoint("truncated generator state")
        r, off = rng_unpack(body, off)
        rngs.append(r)
    (size,) = struct.unpack_from("<Q", body, off)
    off += 8
    if off + size != len(body):
        raise CorruptCheckpoint("auxiliary block length mismatch")
    with np.load(io.BytesIO(body[off:]), allow_pickle=False) as z:
        aux = {k: z[k] for k in z.files}
    return {"grid": grid, "step": step, "digest": digest, "states": states, "rngs": rngs, "aux": aux}


def checkpoint_load(path):
    with open(path, "rb") as fh:
        return checkpoint_parse(fh.read())
