"""Packed bit sequences and the on-disk bitstream format.

Bit ``j`` of a stream lives in bit ``j % 8`` (least significant first) of
byte ``j // 8``. Pad bits in the last byte are always zero.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"SIQB"
VERSION = 1
_HEADER = struct.Struct("<4sHHQ")
HEADER_SIZE = _HEADER.size  # 16


def _pad_mask(length):
    rem = length % 8
    return 0xFF if rem == 0 else (1 << rem) - 1


class BitBuffer:
    """Immutable packed bit string with an authoritative ``length``."""

    __slots__ = ("_data", "_length")

    def __init__(self, data=b"", length=None):
        arr = np.frombuffer(bytes(data), dtype=np.uint8)
        if length is None:
            length = arr.size * 8
        if length < 0 or (length + 7) // 8 != arr.size:
            raise ValueError(f"{arr.size} bytes cannot hold exactly {length} bits")
        if length % 8 and int(arr[-1]) & ~_pad_mask(length) & 0xFF:
            arr = arr.copy()
            arr[-1] &= _pad_mask(length)
        self._data = arr.tobytes()
        self._length = int(length)

    @classmethod
    def from_bits(cls, bits):
        """Pack an iterable or array of 0/1 values."""
        arr = np.asarray(bits, dtype=np.uint8).ravel()
        if arr.size and arr.max() > 1:
            raise ValueError("bits must be 0 or 1")
        return cls(np.packbits(arr, bitorder="little").tobytes(), arr.size)

    @classmethod
    def zeros(cls, length):
        return cls(bytes((length + 7) // 8), length)

    def to_bits(self, dtype=np.uint8):
        """Unpacked copy as a 1-D array of 0/1."""
        raw = np.frombuffer(self._data, dtype=np.uint8)
        return np.unpackbits(raw, count=self._length, bitorder="little").astype(dtype, copy=False)

    @property
    def data(self):
        return self._data

    def __len__(self):
        return self._length

    def __eq__(self, other):
        if not isinstance(other, BitBuffer):
            return NotImplemented
        return self._length == other._length and self._data == other._data

    def __hash__(self):
        return hash((self._length, self._data))

    def __repr__(self):
        preview = "".join(map(str, self[:32].to_bits())) if self._length else ""
        more = "..." if self._length > 32 else ""
        return f"BitBuffer(length={self._length}, bits={preview}{more})"

    def __getitem__(self, key):
        if isinstance(key, slice):
            start, stop, step = key.indices(self._length)
            if step != 1:
                return BitBuffer.from_bits(self.to_bits()[key])
            stop = max(stop, start)
            nbits = stop - start
            chunk = self._data[start // 8 : (stop + 7) // 8]
            if start % 8 == 0:
                return BitBuffer(chunk, nbits)
            shift = start % 8
            bits = np.unpackbits(np.frombuffer(chunk, np.uint8), bitorder="little")
            return BitBuffer.from_bits(bits[shift : shift + nbits])
        if key < 0:
            key += self._length
        if not 0 <= key < self._length:
            raise IndexError("bit index out of range")
        return (self._data[key // 8] >> (key % 8)) & 1

    def __xor__(self, other):
        if len(other) != self._length:
            raise ValueError("xor needs equal lengths")
        a = np.frombuffer(self._data, dtype=np.uint8)
        b = np.frombuffer(other._data, dtype=np.uint8)
        return BitBuffer((a ^ b).tobytes(), self._length)

    def count_ones(self):
        return int(np.bitwise_count(np.frombuffer(self._data, dtype=np.uint8)).sum())

    @staticmethod
    def concat(parts):
        parts = list(parts)
        if all(len(p) % 8 == 0 for p in parts[:-1]):
            return BitBuffer(b"".join(p.data for p in parts), sum(len(p) for p in parts))
        return BitBuffer.from_bits(np.concatenate([p.to_bits() for p in parts] or [np.zeros(0, np.uint8)]))


def write_bitstream(path, buf: BitBuffer):
    header = _HEADER.pack(MAGIC, VERSION, 0, len(buf))
    Path(path).write_bytes(header + buf.data)


def read_bitstream(path) -> BitBuffer:
    blob = Path(path).read_bytes()
    if len(blob) < HEADER_SIZE:
        raise FormatError(f"{path}: truncated header ({len(blob)} bytes)")
    magic, version, _reserved, nbits = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    payload = blob[HEADER_SIZE:]
    if len(payload) != (nbits + 7) // 8:
        raise FormatError(f"{path}: header says {nbits} bits but payload has {len(payload)} bytes")
    if nbits % 8 and payload[-1] & ~_pad_mask(nbits) & 0xFF:
        raise FormatError(f"{path}: nonzero pad bits in final byte")
    return BitBuffer(payload, nbits)
