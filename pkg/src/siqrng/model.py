"""
Analytic response-probability model of the four-detector passive-basis receiver.

A weak coherent pulse of mean photon number ``mu`` is split passively between
the Z basis (H/V detectors) and the X basis (D/A detectors). Every detector
is a threshold detector, so its click probability is one minus the Poisson
vacuum probability of the light reaching it, with dark counts folded in:

    p_k = 1 - exp(-mu * p_basis * eta_k * M_k) * (1 - y_0)

Event probabilities for single and double clicks follow from treating the
four detectors as independent.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

from .errors import DegenerateInputError, InvalidParameterError

_UNIT_FIELDS = (
    "p_z",
    "eta_0",
    "eta_1",
    "eta_plus",
    "eta_minus",
    "y_0",
    "m0_z",
    "m_minus_x",
)


def _check_finite(name, value):
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise InvalidParameterError(name, f"expected a number, got {value!r}")
    if not math.isfinite(value):
        raise InvalidParameterError(name, f"must be finite, got {value!r}")


def _check_unit(name, value):
    _check_finite(name, value)
    if not 0.0 <= value <= 1.0:
        raise InvalidParameterError(name, f"must lie in [0, 1], got {value!r}")


@dataclass(frozen=True)
class SystemModel:
    """
    Physical and protocol parameters of the receiver.

    Attributes
    ----------
    mu : float
        Mean photon number per pulse.
    f_hz : float
        Pulse repetition rate in Hz.
    t_s : float
        Accumulation time in seconds.
    p_z : float
        Probability that a pulse is routed to the Z basis.
    eta_0, eta_1, eta_plus, eta_minus : float
        Detection efficiencies of the H, V, D and A ports.
    y_0 : float
        Dark-count probability per gate.
    m0_z : float
        Probability of the H outcome under a Z measurement.
    m_minus_x : float
        Probability of the error (A) outcome under an X measurement.

    The complementary quantities ``p_x``, ``m1_z`` and ``m_plus_x`` are
    derived and never stored.
    """

    mu: float
    f_hz: float
    t_s: float
    p_z: float
    eta_0: float
    eta_1: float
    eta_plus: float
    eta_minus: float
    y_0: float = 0.0
    m0_z: float = 0.5
    m_minus_x: float = 0.0

    def __post_init__(self):
        _check_finite("mu", self.mu)
        if self.mu < 0:
            raise InvalidParameterError("mu", f"must be >= 0, got {self.mu!r}")
        _check_finite("f_hz", self.f_hz)
        if self.f_hz <= 0:
            raise InvalidParameterError("f_hz", f"must be > 0, got {self.f_hz!r}")
        _check_finite("t_s", self.t_s)
        # t = 0 is allowed so that expected counts can be evaluated at the origin.
        if self.t_s < 0:
            raise InvalidParameterError("t_s", f"must be >= 0, got {self.t_s!r}")
        for name in _UNIT_FIELDS:
            _check_unit(name, getattr(self, name))

    @property
    def p_x(self):
        return 1.0 - self.p_z

    @property
    def m1_z(self):
        return 1.0 - self.m0_z

    @property
    def m_plus_x(self):
        return 1.0 - self.m_minus_x

    @property
    def n_pulses(self):
        """Number of pulses sent during the accumulation time."""
        return self.f_hz * self.t_s

    def replace(self, **changes):
        data = asdict(self)
        data.update(changes)
        return SystemModel(**data)

    @classmethod
    def field_names(cls):
        return tuple(f.name for f in fields(cls))


def reference_receiver(mu=36.58, *, y_0=0.0):
    """Receiver characterised in the reference experiment (50 MHz, 200 s)."""
    return SystemModel(
        mu=mu,
        f_hz=50e6,
        t_s=200.0,
        p_z=0.5283,
        eta_0=0.0176,
        eta_1=0.0156,
        eta_plus=0.0179,
        eta_minus=0.0179,
        y_0=y_0,
        m0_z=0.4718,
        m_minus_x=0.0012,
    )


@dataclass(frozen=True)
class ClickProbabilities:
    """Per-pulse click probability of each detector."""

    p0: float
    p1: float
    p_plus: float
    p_minus: float

    def __post_init__(self):
        for f in fields(self):
            _check_unit(f.name, getattr(self, f.name))

    def as_tuple(self):
        return (self.p0, self.p1, self.p_plus, self.p_minus)


@dataclass(frozen=True)
class BasisEventProbabilities:
    """
    Per-pulse probabilities of the disjoint click patterns.

    ``q_cross`` (at least one click in each basis) and ``q_vacuum`` (no click)
    complete the partition so that all classes sum to one.
    """

    q_H: float
    q_V: float
    q_D: float
    q_A: float
    q_Z_double: float
    q_X_double: float
    q_cross: float
    q_vacuum: float

    @property
    def q_Z_single(self):
        return self.q_H + self.q_V

    @property
    def q_X_single(self):
        return self.q_D + self.q_A

    def classes(self):
        """Mapping from event-class name to probability, keyed like ClickTally."""
        return {
            "n_H_s": self.q_H,
            "n_V_s": self.q_V,
            "n_D_s": self.q_D,
            "n_A_s": self.q_A,
            "n_Z_d": self.q_Z_double,
            "n_X_d": self.q_X_double,
            "n_cross": self.q_cross,
            "n_vacuum": self.q_vacuum,
        }


@dataclass(frozen=True)
class ExpectedTally:
    """Expected (real-valued) counts over ``f_hz * t_s`` pulses."""

    n_H_s: float
    n_V_s: float
    n_D_s: float
    n_A_s: float
    n_Z_d: float
    n_X_d: float

    @property
    def n_Z_tol(self):
        return self.n_H_s + self.n_V_s + self.n_Z_d

    @property
    def n_X_tol(self):
        return self.n_D_s + self.n_A_s + self.n_X_d

    @property
    def n_Z_single(self):
        return self.n_H_s + self.n_V_s

    def to_dict(self):
        d = asdict(self)
        d["n_Z_tol"] = self.n_Z_tol
        d["n_X_tol"] = self.n_X_tol
        return d


def _click(mean_photons, y_0):
    # 1 - e^{-a}(1 - y0) written with expm1 so tiny a keeps full precision
    return -math.expm1(-mean_photons) * (1.0 - y_0) + y_0


def click_probabilities(model: SystemModel) -> ClickProbabilities:
    mu, y0 = model.mu, model.y_0
    return ClickProbabilities(
        p0=_click(mu * model.p_z * model.eta_0 * model.m0_z, y0),
        p1=_click(mu * model.p_z * model.eta_1 * model.m1_z, y0),
        p_plus=_click(mu * model.p_x * model.eta_plus * model.m_plus_x, y0),
        p_minus=_click(mu * model.p_x * model.eta_minus * model.m_minus_x, y0),
    )


def basis_event_probabilities(p: ClickProbabilities) -> BasisEventProbabilities:
    p0, p1, pp, pm = p.as_tuple()
    z_silent = (1.0 - p0) * (1.0 - p1)
    x_silent = (1.0 - pp) * (1.0 - pm)
    z_any = p0 + p1 - p0 * p1
    x_any = pp + pm - pp * pm
    return BasisEventProbabilities(
        q_H=p0 * (1.0 - p1) * x_silent,
        q_V=p1 * (1.0 - p0) * x_silent,
        q_D=pp * (1.0 - pm) * z_silent,
        q_A=pm * (1.0 - pp) * z_silent,
        q_Z_double=p0 * p1 * x_silent,
        q_X_double=pp * pm * z_silent,
        q_cross=z_any * x_any,
        q_vacuum=z_silent * x_silent,
    )


def x_basis_qber(p: ClickProbabilities) -> float:
    """
    Bit error rate of the X basis.

    Error events are A-port clicks plus half of the D/A double clicks,
    normalised by all X-basis click events.
    """
    pp, pm = p.p_plus, p.p_minus
    denom = pm * (1.0 - pp) + pp * (1.0 - pm) + pp * pm
    if denom <= 0.0:
        raise DegenerateInputError("no X-basis click is possible (p_plus = p_minus = 0)")
    return (pm * (1.0 - pp) + 0.5 * pp * pm) / denom


def expected_tally(model: SystemModel) -> ExpectedTally:
    q = basis_event_probabilities(click_probabilities(model))
    n = model.n_pulses
    return ExpectedTally(
        n_H_s=n * q.q_H,
        n_V_s=n * q.q_V,
        n_D_s=n * q.q_D,
        n_A_s=n * q.q_A,
        n_Z_d=n * q.q_Z_double,
        n_X_d=n * q.q_X_double,
    )
