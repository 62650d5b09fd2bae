"""Binary channel files for bit-exact reuse across runs and implementations.

Layout (all integers little-endian uint32, all reals little-endian binary64)::

    "CFCH" | version | I | K
    for i ascending, for k ascending:
        N_k | M_i | N_k*M_i complex entries, row-major, (re, im) interleaved
    footer: K noise powers (NaN when unset)
            for each UE: |I_k| then the serving AP indices

Distances are not stored.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .errors import FormatError
from .network import ChannelSet

MAGIC = b"CFCH"
VERSION = 1
MAX_DIM = 1 << 16

_U32 = struct.Struct("<I")


def encode_channels(channels: ChannelSet) -> bytes:
    I, K = channels.num_aps, channels.num_ues
    out = [MAGIC, struct.pack("<III", VERSION, I, K)]
    for i in range(I):
        for k in range(K):
            h = channels.link(i, k)
            out.append(struct.pack("<II", *h.shape))
            out.append(np.ascontiguousarray(h, dtype="<c16").tobytes())
    noise = channels.noise_powers if channels.has_noise else np.full(K, np.nan)
    out.append(np.asarray(noise, dtype="<f8").tobytes())
    for s in channels.serving_sets:
        out.append(struct.pack(f"<I{len(s)}I", len(s), *s))
    return b"".join(out)


def dump_channels(channels: ChannelSet, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_channels(channels))


class _Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, n: int) -> memoryview:
        if n < 0 or self.pos + n > len(self.data):
            raise FormatError(f"truncated channel file at byte {self.pos} (need {n} more)")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]


def decode_channels(data: bytes) -> ChannelSet:
    r = _Reader(data)
    if bytes(r.take(4)) != MAGIC:
        raise FormatError("not a channel file (bad magic)")
    version = r.u32()
    if version != VERSION:
        raise FormatError(f"unsupported channel file version {version}")
    I, K = r.u32(), r.u32()
    if not (1 <= I <= MAX_DIM and 1 <= K <= MAX_DIM):
        raise FormatError(f"implausible dimensions I={I}, K={K}")
    links = []
    for i in range(I):
        row = []
        for k in range(K):
            n, m = r.u32(), r.u32()
            if not (1 <= n <= MAX_DIM and 1 <= m <= MAX_DIM):
                raise FormatError(f"implausible link ({i},{k}) shape {n}x{m}")
            raw = r.take(16 * n * m)
            row.append(np.frombuffer(raw, dtype="<c16").reshape(n, m).astype(complex))
        links.append(row)
    noise = np.frombuffer(r.take(8 * K), dtype="<f8").astype(float)
    serving = []
    for k in range(K):
        size = r.u32()
        if not 1 <= size <= I:
            raise FormatError(f"UE {k} serving set size {size} out of range")
        idx = struct.unpack(f"<{size}I", r.take(4 * size))
        if max(idx) >= I:
            raise FormatError(f"UE {k} serving set names a missing AP")
        serving.append(idx)
    if r.pos != len(r.data):
        raise FormatError(f"{len(r.data) - r.pos} trailing bytes after footer")
    if np.all(np.isnan(noise)):
        noise = None
    elif np.any(np.isnan(noise)):
        raise FormatError("noise powers are partially unset")
    try:
        return ChannelSet(links, serving, noise)
    except ValueError as exc:
        raise FormatError(f"inconsistent channel file: {exc}") from exc


def load_channels(path: str | os.PathLike) -> ChannelSet:
    with open(path, "rb") as fh:
        return decode_channels(fh.read())
