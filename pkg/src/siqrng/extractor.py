"""
Toeplitz-hashing randomness extraction.

An ``m x n`` Toeplitz matrix over GF(2) is fixed by ``n + m - 1`` seed bits:
``T[i][j] = seed[m - 1 + j - i]``. Output bit ``i`` is the parity of
``T[i] AND input``.

Two implementations are provided: :func:`extract_naive` evaluates the
definition row by row and serves as the reference, :func:`extract_fast`
computes the same parities through partitioned FFT correlation.
"""

from __future__ import annotations

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import fft

from .bits import BitBuffer
from .errors import DimensionMismatchError, InvalidParameterError

DEFAULT_BLOCK_N = 1 << 20
# sub-products are kept near this FFT length; larger transforms fall out of cache
_PART_TARGET = 1 << 19


@dataclass(frozen=True)
class ToeplitzSeed:
    bits: BitBuffer
    m: int
    n: int

    def __post_init__(self):
        if self.m < 0 or self.n < 1:
            raise DimensionMismatchError(f"need m >= 0 and n >= 1, got m={self.m}, n={self.n}")
        if self.m > self.n:
            raise DimensionMismatchError(f"output length m={self.m} exceeds input length n={self.n}")
        if len(self.bits) != self.seed_length(self.m, self.n):
            raise DimensionMismatchError(
                f"{self.m}x{self.n} Toeplitz matrix needs {self.seed_length(self.m, self.n)} "
                f"seed bits, got {len(self.bits)}"
            )

    @staticmethod
    def seed_length(m, n):
        return n + m - 1 if m > 0 else 0

    @classmethod
    def from_stream(cls, stream: BitBuffer, m, n, offset=0):
        """Take the seed for an ``m x n`` matrix from ``stream`` starting at ``offset``."""
        need = cls.seed_length(m, n)
        if offset + need > len(stream):
            raise DimensionMismatchError(
                f"seed stream has {len(stream)} bits, need {need} from offset {offset}"
            )
        return cls(stream[offset : offset + need], m, n)

    def matrix(self):
        """Dense 0/1 matrix; only sensible for small dimensions."""
        s = self.bits.to_bits()
        i = np.arange(self.m)[:, None]
        j = np.arange(self.n)[None, :]
        return s[self.m - 1 + j - i] if self.m else np.zeros((0, self.n), np.uint8)


def _check_dims(inp, seed):
    if len(inp) != seed.n:
        raise DimensionMismatchError(f"input has {len(inp)} bits, matrix expects n={seed.n}")


def extract_naive(inp: BitBuffer, seed: ToeplitzSeed) -> BitBuffer:
    """Row-by-row GF(2) matrix-vector product."""
    _check_dims(inp, seed)
    m, n = seed.m, seed.n
    if m == 0:
        return BitBuffer()
    s = seed.bits.to_bits()
    x = inp.to_bits()
    # row i of T is s[m-1-i : m-1-i+n]
    rows = sliding_window_view(s, n)[::-1]
    out = (rows & x).sum(axis=1, dtype=np.int64) & 1
    return BitBuffer.from_bits(out)


@numba.njit(cache=True, nogil=True)
def _block_toeplitz_mac(spectra, diag, x_hat, y_hat):
    # y_hat[i] = sum_j spectra[diag[i, j]] * x_hat[j], one pass over frequencies
    k, n_freq = x_hat.shape
    for f in range(n_freq):
        for i in range(k):
            acc = 0j
            for j in range(k):
                acc += spectra[diag[i, j], f] * x_hat[j, f]
            y_hat[i, f] = acc


@numba.njit(cache=True, nogil=True)
def _collect_parity(y, b, mb, out):
    """Round correlation sums to integers and keep their parity.

    Row ``r`` of output block ``i`` sits at ``y[i, b - 1 + mb - 1 - r]``.
    Returns the largest distance to the nearest integer seen.
    """
    worst = 0.0
    pos = 0
    for i in range(y.shape[0]):
        for r in range(mb):
            if pos >= out.shape[0]:
                return worst
            v = y[i, b + mb - 2 - r]
            c = np.rint(v)
            worst = max(worst, abs(v - c))
            out[pos] = np.int64(c) & 1
            pos += 1
    return worst


class ToeplitzHasher:
    """
    Precomputed fast multiplier for one Toeplitz seed.

    The matrix is cut into a ``k x k`` grid of sub-blocks. Sub-blocks on the
    same block diagonal share a generator, so only ``2k - 1`` seed spectra
    are stored; each input sub-block is transformed once and the products
    are summed in the frequency domain before a single inverse transform per
    output sub-block.
    """

    def __init__(self, seed: ToeplitzSeed, parts=None):
        self.m, self.n = seed.m, seed.n
        if self.m == 0:
            return
        k = parts or max(1, math.ceil((self.n + self.m) / _PART_TARGET))
        k = min(k, self.m)
        self.k = k
        self.b = math.ceil(self.n / k)
        self.mb = math.ceil(self.m / k)
        b, mb = self.b, self.mb
        self.fft_len = fft.next_fast_len(b + mb - 1, real=True)

        s = seed.bits.to_bits(np.float64)
        # zero-extend so generators of padded rows/columns read zeros
        lead = mb
        s_ext = np.concatenate([np.zeros(lead), s, np.zeros(k * b + lead)])
        offsets = {}
        spectra = []
        self._diag = np.empty((k, k), dtype=np.intp)
        for i_blk in range(k):
            for j_blk in range(k):
                d = self.m - 1 + j_blk * b - i_blk * mb
                if d not in offsets:
                    start = d - (mb - 1) + lead
                    gen = s_ext[start : start + b + mb - 1]
                    offsets[d] = len(spectra)
                    spectra.append(fft.rfft(gen, self.fft_len))
                self._diag[i_blk, j_blk] = offsets[d]
        self._spectra = np.stack(spectra)
        self._local = threading.local()

    def _workspace(self):
        # per-thread buffers, reused across blocks to avoid fresh page faults
        ws = getattr(self._local, "ws", None)
        if ws is None:
            k, b, L = self.k, self.b, self.fft_len
            ws = self._local.ws = (
                np.zeros((k, b)),
                np.zeros((k, L)),
                np.empty((k, L // 2 + 1), dtype=np.complex128),
                np.empty((k, L // 2 + 1), dtype=np.complex128),
                np.empty((k, L)),
            )
        return ws

    def hash_bits(self, x):
        """Hash an unpacked 0/1 array of length ``n``; returns a uint8 array of length ``m``."""
        if self.m == 0:
            return np.zeros(0, np.uint8)
        b, mb, L = self.b, self.mb, self.fft_len
        stage, padded, x_hat, y_hat, y = self._workspace()
        # entries past n stay zero from allocation; columns past b of padded likewise
        stage.ravel()[: self.n] = x
        padded[:, :b] = stage[:, ::-1]
        np.fft.rfft(padded, L, axis=1, out=x_hat)
        _block_toeplitz_mac(self._spectra, self._diag, x_hat, y_hat)
        np.fft.irfft(y_hat, L, axis=1, out=y)
        out = np.empty(self.m, dtype=np.uint8)
        margin = _collect_parity(y, b, mb, out)
        if margin > 0.25:
            raise ArithmeticError("FFT rounding margin exceeded; parity would be unreliable")
        return out

    def __call__(self, inp: BitBuffer) -> BitBuffer:
        if len(inp) != self.n:
            raise DimensionMismatchError(f"input has {len(inp)} bits, matrix expects n={self.n}")
        return BitBuffer.from_bits(self.hash_bits(inp.to_bits(np.float64)))


def extract_fast(inp: BitBuffer, seed: ToeplitzSeed) -> BitBuffer:
    """Same output as :func:`extract_naive`, in O(n log n)."""
    _check_dims(inp, seed)
    return ToeplitzHasher(seed)(inp)


def output_ratio(extractable_bits, n_z_single):
    if n_z_single <= 0 or extractable_bits <= 0:
        return 0.0
    return min(1.0, extractable_bits / n_z_single)


def plan_extraction(report, block_n=DEFAULT_BLOCK_N):
    """
    Output bits per full block and the seed length that block needs.

    ``report`` is a RateReport; the per-block output keeps the same
    final/raw ratio as the whole session.
    """
    if block_n < 1:
        raise InvalidParameterError("block_n", f"must be >= 1, got {block_n!r}")
    ratio = output_ratio(report.extractable_bits, report.n_z_single)
    m = math.floor(block_n * ratio)
    return m, ToeplitzSeed.seed_length(m, block_n)


@lru_cache(maxsize=8)
def _hasher(seed_bits: BitBuffer, m, n):
    return ToeplitzHasher(ToeplitzSeed(seed_bits, m, n))


def _block_layout(n_raw, block_n, ratio):
    blocks = []
    for start in range(0, n_raw, block_n):
        n_b = min(block_n, n_raw - start)
        blocks.append((start, n_b, math.floor(n_b * ratio)))
    return blocks


def seed_bits_required(n_raw, block_n, ratio, fresh_seed=False):
    layout = _block_layout(n_raw, block_n, ratio)
    lengths = [ToeplitzSeed.seed_length(m, n) for _, n, m in layout]
    if fresh_seed:
        return sum(lengths)
    return max(lengths, default=0)


def extract_stream(raw: BitBuffer, seed_stream: BitBuffer, ratio, block_n=DEFAULT_BLOCK_N,
                   fresh_seed=False, threads=1) -> BitBuffer:
    """
    Hash ``raw`` block by block and concatenate the outputs in block order.

    By default every block reuses the start of ``seed_stream``; with
    ``fresh_seed`` consecutive blocks consume consecutive seed segments.
    The final short block keeps the same output ratio.
    """
    if block_n < 1:
        raise InvalidParameterError("block_n", f"must be >= 1, got {block_n!r}")
    if not 0.0 <= ratio <= 1.0:
        raise InvalidParameterError("ratio", f"must lie in [0, 1], got {ratio!r}")
    layout = _block_layout(len(raw), block_n, ratio)
    need = seed_bits_required(len(raw), block_n, ratio, fresh_seed)
    if need > len(seed_stream):
        raise DimensionMismatchError(f"seed stream has {len(seed_stream)} bits, {need} required")

    jobs = []
    offset = 0
    for start, n_b, m_b in layout:
        length = ToeplitzSeed.seed_length(m_b, n_b)
        seed_off = offset if fresh_seed else 0
        jobs.append((start, n_b, m_b, seed_off, length))
        offset += length

    def run(job):
        start, n_b, m_b, seed_off, length = job
        if m_b == 0:
            return np.zeros(0, np.uint8)
        hasher = _hasher(seed_stream[seed_off : seed_off + length], m_b, n_b)
        return hasher.hash_bits(raw[start : start + n_b].to_bits(np.float64))

    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outputs = list(pool.map(run, jobs))
    else:
        outputs = [run(j) for j in jobs]
    if not outputs:
        return BitBuffer()
    return BitBuffer.from_bits(np.concatenate(outputs))
