"""
Statistical randomness battery.

Eight tests from the NIST SP 800-22 family, with the parameter choices the
reference suite recommends for the given sample length. Each sample yields
one p-value per test outcome; the battery then checks the fraction of
samples passing at level ``alpha`` against the binomial confidence interval
and, for tests with several outcomes, the uniformity of each outcome's
p-values.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import erfc, gammaincc, kolmogorov, ndtr

from .bits import BitBuffer
from .errors import InsufficientDataError, InvalidParameterError

MIN_SAMPLES = 10
MIN_SAMPLE_BITS = 1000
# p-value threshold for the uniformity of per-outcome p-values
UNIFORMITY_ALPHA = 1e-4

BLOCK_FREQUENCY_M = 128

# (min length, block length, category upper edges, category probabilities)
_LONGEST_RUN_TABLES = (
    (750_000, 10_000, (10, 11, 12, 13, 14, 15),
     (0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727)),
    (6_272, 128, (4, 5, 6, 7, 8),
     (0.1174, 0.2430, 0.2493, 0.1752, 0.1027, 0.1124)),
    (128, 8, (1, 2, 3),
     (0.2148, 0.3672, 0.2305, 0.1875)),
)


def _as_bits(sample):
    if isinstance(sample, BitBuffer):
        return sample.to_bits()
    arr = np.asarray(sample, dtype=np.uint8).ravel()
    if arr.size and arr.max() > 1:
        raise InvalidParameterError("bits", "sample must contain only 0 and 1")
    return arr


def _require_length(bits, minimum, test):
    if bits.size < minimum:
        raise InsufficientDataError(f"{test} needs at least {minimum} bits, got {bits.size}")


def _clip(p):
    return float(min(1.0, max(0.0, p)))


def monobit_p_value(sample, allow_short=False):
    """
    Frequency test.

    Parameters
    ----------
    sample : array_like or BitBuffer
        Bits to test.
    allow_short : bool
        Skip the 100-bit minimum; only meaningful for illustration.
    """
    bits = _as_bits(sample)
    if not allow_short:
        _require_length(bits, 100, "monobit")
    n = bits.size
    if n == 0:
        raise InsufficientDataError("monobit needs a nonempty sample")
    s = abs(2 * int(bits.sum()) - n) / math.sqrt(n)
    return _clip(erfc(s / math.sqrt(2.0)))


def block_frequency_p_value(sample, block=BLOCK_FREQUENCY_M):
    bits = _as_bits(sample)
    _require_length(bits, 100, "block frequency")
    n_blocks = bits.size // block
    if n_blocks == 0:
        raise InsufficientDataError(f"block frequency needs at least one {block}-bit block")
    pi = bits[: n_blocks * block].reshape(n_blocks, block).mean(axis=1)
    chi2 = 4.0 * block * float(np.sum((pi - 0.5) ** 2))
    return _clip(gammaincc(n_blocks / 2.0, chi2 / 2.0))


def runs_p_value(sample):
    bits = _as_bits(sample)
    _require_length(bits, 100, "runs")
    n = bits.size
    pi = bits.mean()
    # the runs statistic is meaningless when the frequency test already fails
    if abs(pi - 0.5) >= 2.0 / math.sqrt(n):
        return 0.0
    v_obs = 1 + int(np.count_nonzero(bits[1:] != bits[:-1]))
    spread = 2.0 * n * pi * (1.0 - pi)
    return _clip(erfc(abs(v_obs - spread) / (2.0 * math.sqrt(2.0 * n) * pi * (1.0 - pi))))


def _longest_runs(blocks):
    """Longest run of ones in each row of a 2-D 0/1 array."""
    n_blocks, width = blocks.shape
    padded = np.zeros((n_blocks, width + 2), dtype=np.int8)
    padded[:, 1:-1] = blocks
    edges = np.diff(padded.ravel())
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    longest = np.zeros(n_blocks, dtype=np.int64)
    np.maximum.at(longest, starts // (width + 2), ends - starts)
    return longest


def longest_run_p_value(sample):
    bits = _as_bits(sample)
    n = bits.size
    for min_len, block, edges, probs in _LONGEST_RUN_TABLES:
        if n >= min_len:
            break
    else:
        raise InsufficientDataError(f"longest run needs at least 128 bits, got {n}")
    n_blocks = n // block
    longest = _longest_runs(bits[: n_blocks * block].reshape(n_blocks, block))
    # category k holds runs <= edges[0], == edges[k], ..., >= edges[-1] + 1
    category = np.searchsorted(np.asarray(edges), longest, side="left")
    counts = np.bincount(category, minlength=len(probs))
    expected = n_blocks * np.asarray(probs)
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    return _clip(gammaincc((len(probs) - 1) / 2.0, chi2 / 2.0))


def _cusum_p(n, z):
    if z == 0:
        return 1.0
    root = math.sqrt(n)
    k1 = np.arange(int((-n / z + 1) / 4), int((n / z - 1) / 4) + 1)
    k2 = np.arange(int((-n / z - 3) / 4), int((n / z - 1) / 4) + 1)
    term1 = np.sum(ndtr((4 * k1 + 1) * z / root) - ndtr((4 * k1 - 1) * z / root))
    term2 = np.sum(ndtr((4 * k2 + 3) * z / root) - ndtr((4 * k2 + 1) * z / root))
    return _clip(1.0 - term1 + term2)


def cumulative_sums_p_values(sample):
    """Forward and backward cumulative-sums p-values."""
    bits = _as_bits(sample)
    _require_length(bits, 100, "cumulative sums")
    steps = 2 * bits.astype(np.int64) - 1
    forward = int(np.max(np.abs(np.cumsum(steps))))
    backward = int(np.max(np.abs(np.cumsum(steps[::-1]))))
    n = bits.size
    return _cusum_p(n, forward), _cusum_p(n, backward)


def _pattern_counts(bits, m):
    """Counts of every overlapping m-bit pattern, wrapping around the end."""
    if m == 0:
        return np.array([bits.size])
    ext = np.concatenate([bits, bits[: m - 1]]).astype(np.int64)
    n = bits.size
    code = np.zeros(n, dtype=np.int64)
    for j in range(m):
        code = (code << 1) | ext[j : j + n]
    return np.bincount(code, minlength=1 << m)


def _psi_sq(counts, n):
    if counts.size == 1:
        return 0.0
    return counts.size / n * float(np.sum(counts.astype(np.float64) ** 2)) - n


def serial_block_length(n):
    return max(3, min(16, int(math.floor(math.log2(n))) - 3))


def serial_p_values(sample, m=None):
    """The two serial-test p-values for overlapping ``m``-bit patterns."""
    bits = _as_bits(sample)
    _require_length(bits, 100, "serial")
    n = bits.size
    m = serial_block_length(n) if m is None else m
    if m < 2:
        raise InvalidParameterError("m", "serial test needs m >= 2")
    c_m = _pattern_counts(bits, m)
    # shorter-pattern counts follow by summing over the last bit
    c_m1 = c_m.reshape(-1, 2).sum(axis=1)
    c_m2 = c_m1.reshape(-1, 2).sum(axis=1)
    psi_m, psi_m1, psi_m2 = _psi_sq(c_m, n), _psi_sq(c_m1, n), _psi_sq(c_m2, n)
    d1 = psi_m - psi_m1
    d2 = psi_m - 2.0 * psi_m1 + psi_m2
    return (_clip(gammaincc(2.0 ** (m - 2), d1 / 2.0)),
            _clip(gammaincc(2.0 ** (m - 3), d2 / 2.0)))


def approximate_entropy_block_length(n):
    return max(2, min(10, int(math.floor(math.log2(n))) - 6))


def approximate_entropy_p_value(sample, m=None):
    bits = _as_bits(sample)
    _require_length(bits, 100, "approximate entropy")
    n = bits.size
    m = approximate_entropy_block_length(n) if m is None else m
    c_next = _pattern_counts(bits, m + 1)
    c_m = c_next.reshape(-1, 2).sum(axis=1)

    def phi(counts):
        freq = counts[counts > 0] / n
        return float(np.sum(freq * np.log(freq)))

    ap_en = phi(c_m) - phi(c_next)
    chi2 = 2.0 * n * (math.log(2.0) - ap_en)
    return _clip(gammaincc(2.0 ** (m - 1), chi2 / 2.0))


def spectral_p_value(sample):
    """Discrete Fourier transform test."""
    bits = _as_bits(sample)
    _require_length(bits, 1000, "spectral")
    n = bits.size
    x = 2.0 * bits - 1.0
    modulus = np.abs(np.fft.rfft(x))[: n // 2]
    threshold = math.sqrt(math.log(1.0 / 0.05) * n)
    n0 = 0.95 * n / 2.0
    n1 = int(np.count_nonzero(modulus < threshold))
    d = (n1 - n0) / math.sqrt(n * 0.95 * 0.05 / 4.0)
    return _clip(erfc(abs(d) / math.sqrt(2.0)))


def ks_uniformity(p_values):
    """
    Kolmogorov-Smirnov test of ``p_values`` against uniform(0, 1).

    Returns the asymptotic p-value ``Q_KS(sqrt(n) D)``.
    """
    n = len(p_values)
    if n < MIN_SAMPLES:
        raise InsufficientDataError(f"uniformity check needs at least {MIN_SAMPLES} p-values, got {n}")
    return float(kolmogorov(math.sqrt(n) * ks_statistic(p_values)))


def ks_statistic(p_values):
    """Largest gap between the empirical CDF of ``p_values`` and the uniform CDF."""
    p = np.sort(np.asarray(p_values, dtype=np.float64))
    n = p.size
    grid = np.arange(1, n + 1) / n
    return max(float(np.max(grid - p)), float(np.max(p - (grid - 1.0 / n))))


def proportion_interval(alpha, n_samples):
    """Three-sigma binomial interval around ``1 - alpha``."""
    centre = 1.0 - alpha
    half = 3.0 * math.sqrt(centre * alpha / n_samples)
    return centre - half, centre + half


# name -> (function, number of outcomes)
TESTS = {
    "monobit": (lambda b: (monobit_p_value(b),), 1),
    "block_frequency": (lambda b: (block_frequency_p_value(b),), 1),
    "runs": (lambda b: (runs_p_value(b),), 1),
    "longest_run": (lambda b: (longest_run_p_value(b),), 1),
    "cumulative_sums": (cumulative_sums_p_values, 2),
    "serial": (serial_p_values, 2),
    "approximate_entropy": (lambda b: (approximate_entropy_p_value(b),), 1),
    "spectral": (lambda b: (spectral_p_value(b),), 1),
}


@dataclass
class TestReport:
    """
    Aggregate result of one test over all samples.

    Attributes
    ----------
    name : str
    p_values : list of float
        One value per sample; the smallest outcome p-value for tests with
        several outcomes.
    outcome_p_values : list of list of float
        Per-outcome p-values, ``outcome_p_values[k][s]`` for outcome ``k``
        and sample ``s``.
    proportion : float
        Fraction of samples with ``p >= alpha``, averaged over outcomes.
    alpha : float
    interval : tuple of float
    uniformity_p : list of float
        KS p-value per outcome; empty for single-outcome tests.
    passed : bool
    """

    __test__ = False  # keep pytest from collecting this class

    name: str
    p_values: list
    outcome_p_values: list
    proportion: float
    alpha: float
    interval: tuple
    uniformity_p: list = field(default_factory=list)
    passed: bool = False

    def to_dict(self, include_samples=False):
        d = asdict(self)
        d["interval"] = list(self.interval)
        if not include_samples:
            d.pop("p_values")
            d.pop("outcome_p_values")
        return d


def _evaluate(name, outcome_p, alpha):
    outcome_p = [list(map(float, col)) for col in outcome_p]
    n_samples = len(outcome_p[0])
    lo, hi = proportion_interval(alpha, n_samples)
    proportion = float(np.mean([np.mean(np.asarray(col) >= alpha) for col in outcome_p]))
    uniformity = [ks_uniformity(col) for col in outcome_p] if len(outcome_p) > 1 else []
    passed = lo <= proportion <= hi and all(u >= UNIFORMITY_ALPHA for u in uniformity)
    per_sample = [min(vals) for vals in zip(*outcome_p)]
    return TestReport(name, per_sample, outcome_p, proportion, alpha, (lo, hi), uniformity, passed)


def _run_sample(sample_bits):
    return {name: fn(sample_bits) for name, (fn, _) in TESTS.items()}


def run_battery(bits: BitBuffer, sample_bits: int, alpha: float = 0.01, threads: int = 1):
    """
    Split ``bits`` into consecutive samples and run every test on each.

    Returns one :class:`TestReport` per test, in a fixed order. Results do not
    depend on ``threads``.
    """
    if not 0.0 < alpha <= 0.1:
        raise InvalidParameterError("alpha", f"must lie in (0, 0.1], got {alpha!r}")
    if sample_bits < MIN_SAMPLE_BITS:
        raise InvalidParameterError("sample_bits", f"must be >= {MIN_SAMPLE_BITS}, got {sample_bits!r}")
    n_samples = len(bits) // sample_bits
    if n_samples < MIN_SAMPLES:
        raise InsufficientDataError(
            f"{len(bits)} bits give {n_samples} samples of {sample_bits}; at least {MIN_SAMPLES} needed"
        )
    unpacked = bits[: n_samples * sample_bits].to_bits().reshape(n_samples, sample_bits)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_sample = list(pool.map(_run_sample, unpacked))
    else:
        per_sample = [_run_sample(s) for s in unpacked]

    reports = []
    for name, (_, n_outcomes) in TESTS.items():
        columns = [[res[name][k] for res in per_sample] for k in range(n_outcomes)]
        reports.append(_evaluate(name, columns, alpha))
    return reports
