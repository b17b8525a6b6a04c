"""
Run configuration: one flat JSON object whose keys mirror the model symbols.

Missing keys take the reference-receiver defaults; unknown keys are rejected
so that typos cannot silently fall back to a default.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import ConfigError, InvalidParameterError
from .extractor import DEFAULT_BLOCK_N
from .model import SystemModel, reference_receiver
from .security import IDEAL_OVERLAP, SecurityParams

_REFERENCE = reference_receiver()
_INT_FIELDS = {"t_e", "n_pulses", "seed", "block_n"}


@dataclass(frozen=True)
class RunConfig:
    mu: float = _REFERENCE.mu
    f_hz: float = _REFERENCE.f_hz
    t_s: float = _REFERENCE.t_s
    p_z: float = _REFERENCE.p_z
    eta_0: float = _REFERENCE.eta_0
    eta_1: float = _REFERENCE.eta_1
    eta_plus: float = _REFERENCE.eta_plus
    eta_minus: float = _REFERENCE.eta_minus
    y_0: float = _REFERENCE.y_0
    m0_z: float = _REFERENCE.m0_z
    m_minus_x: float = _REFERENCE.m_minus_x
    t_e: int = 100
    overlap: float = IDEAL_OVERLAP
    n_pulses: int = 100_000_000
    seed: int = 1
    block_n: int = DEFAULT_BLOCK_N

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool):
                raise ConfigError(f.name, f"expected a number, got {value!r}")
            if f.name in _INT_FIELDS:
                if not isinstance(value, int):
                    raise ConfigError(f.name, f"expected an integer, got {value!r}")
            elif not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ConfigError(f.name, f"expected a finite number, got {value!r}")
        if self.n_pulses < 1:
            raise ConfigError("n_pulses", f"must be >= 1, got {self.n_pulses}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed", f"must lie in [0, 2^64), got {self.seed}")
        if self.block_n < 1:
            raise ConfigError("block_n", f"must be >= 1, got {self.block_n}")
        # revalidate the module-level invariants so errors surface at load time
        try:
            self.model()
            self.security()
        except InvalidParameterError as exc:
            raise ConfigError(exc.field, str(exc).split(": ", 1)[-1]) from exc

    def model(self) -> SystemModel:
        return SystemModel(**{name: getattr(self, name) for name in SystemModel.field_names()})

    def security(self) -> SecurityParams:
        return SecurityParams(t_e=self.t_e, overlap=self.overlap)

    def to_dict(self):
        return asdict(self)

    def replace(self, **changes):
        data = self.to_dict()
        data.update(changes)
        return RunConfig.from_dict(data)

    @classmethod
    def keys(cls):
        return tuple(f.name for f in fields(cls))

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("<root>", "configuration must be a JSON object")
        for key in data:
            if key not in cls.keys():
                raise ConfigError(key, "unknown configuration key")
        return cls(**data)

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("<json>", f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
        return cls.from_dict(data)

    @classmethod
    def load(cls, path):
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    def save(self, path):
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")


def coerce_override(key, text):
    """Parse a command-line string for configuration field ``key``."""
    if key not in RunConfig.keys():
        raise ConfigError(key, "unknown configuration key")
    try:
        if key not in _INT_FIELDS:
            return float(text)
        try:
            return int(text, 0)
        except ValueError:
            # accept integral values written in float notation, e.g. 1e8
            value = float(text)
            if not value.is_integer():
                raise
            return int(value)
    except ValueError as exc:
        raise ConfigError(key, f"cannot parse {text!r}") from exc
