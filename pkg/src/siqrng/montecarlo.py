"""
Pulse-level simulation of the four-detector receiver.

Each pulse makes four independent Bernoulli draws, one per detector, with the
analytic click probabilities. Pulses are processed in fixed-size chunks and
chunk ``i`` draws from a Philox stream keyed by ``(seed, i)``, so results do
not depend on how many workers process the chunks.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np

from .bits import BitBuffer
from .errors import DegenerateInputError, InvalidParameterError
from .model import SystemModel, click_probabilities
from .security import EstimationInput

CHUNK_PULSES = 1 << 20
_SEED_MASK = (1 << 64) - 1
# substream index reserved for double-click bit assignment; never a chunk index
_DOUBLE_CLICK_STREAM = _SEED_MASK

# click pattern code: bit0 = H, bit1 = V, bit2 = D, bit3 = A
_H, _V, _D, _A = 1, 2, 4, 8


@dataclass
class ClickTally:
    n_H_s: int = 0
    n_V_s: int = 0
    n_D_s: int = 0
    n_A_s: int = 0
    n_Z_d: int = 0
    n_X_d: int = 0
    n_cross: int = 0
    n_vacuum: int = 0
    n_pulses: int = 0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                raise InvalidParameterError(f.name, f"count must be an integer, got {v!r}")
            if v < 0:
                raise InvalidParameterError(f.name, f"count must be >= 0, got {v!r}")
            setattr(self, f.name, int(v))
        classified = sum(getattr(self, name) for name in self.event_classes())
        if classified != self.n_pulses:
            raise InvalidParameterError(
                "n_pulses", f"event classes sum to {classified}, not n_pulses={self.n_pulses}"
            )

    @staticmethod
    def event_classes():
        return ("n_H_s", "n_V_s", "n_D_s", "n_A_s", "n_Z_d", "n_X_d", "n_cross", "n_vacuum")

    @property
    def n_Z_single(self):
        return self.n_H_s + self.n_V_s

    @property
    def n_Z_tol(self):
        return self.n_H_s + self.n_V_s + self.n_Z_d

    @property
    def n_X_tol(self):
        return self.n_D_s + self.n_A_s + self.n_X_d

    def __add__(self, other):
        return ClickTally(**{f.name: getattr(self, f.name) + getattr(other, f.name) for f in fields(self)})

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        """
        Build a tally from a mapping of counts.

        ``n_vacuum`` may be omitted, in which case every pulse not in another
        class is counted as empty. This suits external data that only
        records click events.
        """
        data = dict(data)
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise InvalidParameterError(sorted(unknown)[0], "unknown tally field")
        if "n_pulses" not in data:
            raise InvalidParameterError("n_pulses", "tally must state the number of pulses")
        if "n_vacuum" not in data:
            clicked = sum(data.get(name, 0) for name in cls.event_classes() if name != "n_vacuum")
            data["n_vacuum"] = data["n_pulses"] - clicked
        return cls(**data)


def _chunk_generator(seed, index):
    key = np.array([seed & _SEED_MASK, index & _SEED_MASK], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _simulate_chunk(probs, seed, index, n):
    rng = _chunk_generator(seed, index)
    u = rng.random((4, n))
    code = (u[0] < probs[0]).view(np.uint8)
    code |= (u[1] < probs[1]).view(np.uint8) << 1
    code |= (u[2] < probs[2]).view(np.uint8) << 2
    code |= (u[3] < probs[3]).view(np.uint8) << 3
    hist = np.bincount(code, minlength=16)
    z_single = code[(code == _H) | (code == _V)]
    bits = (z_single == _V).astype(np.uint8)
    return hist, bits


def _tally_from_histogram(hist, n_pulses):
    # any click in both bases, whatever happens within each basis
    cross = sum(int(hist[c]) for c in range(16) if (c & (_H | _V)) and (c & (_D | _A)))
    return ClickTally(
        n_H_s=int(hist[_H]),
        n_V_s=int(hist[_V]),
        n_D_s=int(hist[_D]),
        n_A_s=int(hist[_A]),
        n_Z_d=int(hist[_H | _V]),
        n_X_d=int(hist[_D | _A]),
        n_cross=cross,
        n_vacuum=int(hist[0]),
        n_pulses=n_pulses,
    )


def _check_seed(seed):
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or not 0 <= seed <= _SEED_MASK:
        raise InvalidParameterError("seed", f"must be an integer in [0, 2^64), got {seed!r}")
    return int(seed)


def simulate(model: SystemModel, n_pulses: int, seed: int, threads: int = 1,
             chunk_pulses: int = CHUNK_PULSES):
    """
    Simulate ``n_pulses`` pulses; returns ``(ClickTally, raw_bits)``.

    Raw bits are the Z-basis single clicks in pulse order, H -> 0 and V -> 1.
    Output is identical for any ``threads``.
    """
    if isinstance(n_pulses, bool) or not isinstance(n_pulses, (int, np.integer)) or n_pulses < 1:
        raise InvalidParameterError("n_pulses", f"must be a positive integer, got {n_pulses!r}")
    seed = _check_seed(seed)
    probs = click_probabilities(model).as_tuple()
    n_pulses = int(n_pulses)
    chunks = [(i, min(chunk_pulses, n_pulses - i * chunk_pulses))
              for i in range(math.ceil(n_pulses / chunk_pulses))]

    def run(chunk):
        return _simulate_chunk(probs, seed, *chunk)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, chunks))
    else:
        results = [run(c) for c in chunks]

    hist = np.zeros(16, dtype=np.int64)
    for h, _ in results:
        hist += h
    bits = np.concatenate([b for _, b in results])
    return _tally_from_histogram(hist, n_pulses), BitBuffer.from_bits(bits)


def tally_to_estimation_input(tally: ClickTally, model: SystemModel, duration_s=None) -> EstimationInput:
    """
    Turn click counts into finite-key inputs.

    Errors are A-port singles plus half the X-basis double clicks.
    ``duration_s`` defaults to the time the tallied pulses take at ``f_hz``.
    """
    n_x = tally.n_A_s + tally.n_D_s + tally.n_X_d
    if n_x == 0:
        raise DegenerateInputError("tally has no X-basis events; the error rate is undefined")
    e_bx = (tally.n_A_s + 0.5 * tally.n_X_d) / n_x
    n_z_single = tally.n_H_s + tally.n_V_s
    if duration_s is None:
        duration_s = tally.n_pulses / model.f_hz if tally.n_pulses else model.t_s
    return EstimationInput(
        n_total=n_z_single + tally.n_Z_d + n_x,
        p_x=model.p_x,
        e_bx=e_bx,
        n_z_single=n_z_single,
        n_x=n_x,
        eta_0=model.eta_0,
        eta_1=model.eta_1,
        duration_s=duration_s,
    )


def double_click_assignment(raw: BitBuffer, tally: ClickTally, seed: int) -> BitBuffer:
    """Append one uniformly random bit per Z-basis double click."""
    seed = _check_seed(seed)
    if tally.n_Z_d == 0:
        return raw
    rng = _chunk_generator(seed, _DOUBLE_CLICK_STREAM)
    extra = rng.integers(0, 2, size=tally.n_Z_d, dtype=np.uint8)
    return BitBuffer.concat([raw, BitBuffer.from_bits(extra)])
