"""
Finite-key randomness quantification.

The X-basis error rate bounds the Z-basis phase error rate up to a statistical
deviation ``theta``; the probability that the bound fails is ``epsilon_theta``.
Hashing then removes ``N_z * H(e_bX + theta)`` bits plus ``t_e`` bits of
security margin, scaled by a detector-mismatch factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Optional

from .errors import DegenerateInputError, InvalidParameterError, NoSolutionError

LN2 = math.log(2.0)
IDEAL_OVERLAP = 1.0 / math.sqrt(2.0)
_OVERLAP_FLOOR = IDEAL_OVERLAP * (1.0 - 1e-12)


def binary_entropy(x: float) -> float:
    """Binary Shannon entropy in bits; ``H(0) = H(1) = 0``."""
    if not 0.0 <= x <= 1.0:
        raise InvalidParameterError("x", f"binary entropy needs 0 <= x <= 1, got {x!r}")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -(x * math.log(x) + (1.0 - x) * math.log1p(-x)) / LN2


def _phi(u):
    # (1+u) ln(1+u) - u, with a series near 0 where the closed form cancels
    if u == -1.0:
        return 1.0
    if abs(u) < 1e-3:
        total, power = 0.0, u * u
        for k in range(2, 10):
            total += power / (k * (k - 1)) * (1 if k % 2 == 0 else -1)
            power *= u
        return total
    return (1.0 + u) * math.log1p(u) - u


def _kl_bits(x, m):
    """Binary relative entropy D(x || m) in bits, for 0 < m < 1."""
    delta = x - m
    return (m * _phi(delta / m) + (1.0 - m) * _phi(-delta / (1.0 - m))) / LN2


def xi(theta, p_x, e_bx):
    """
    Exponent of the sampling bound.

    Equal to ``H(e + theta - p_x theta) - p_x H(e) - (1 - p_x) H(e + theta)``;
    evaluated as a weighted sum of relative entropies, which is the same
    Jensen gap without the catastrophic cancellation at small ``theta``.
    """
    mix = e_bx + (1.0 - p_x) * theta
    if mix <= 0.0 or mix >= 1.0:
        return 0.0
    return p_x * _kl_bits(e_bx, mix) + (1.0 - p_x) * _kl_bits(e_bx + theta, mix)


@dataclass(frozen=True)
class SecurityParams:
    """
    Attributes
    ----------
    t_e : int
        Security exponent of the hashing step; failure probability ``2**-t_e``.
    epsilon_theta_target : float, optional
        Failure target for the phase-error bound. Defaults to ``2**-t_e``.
    overlap : float
        ``max |<X|Z>|`` between the measurement bases; ``1/sqrt(2)`` is ideal.
    """

    t_e: int = 100
    epsilon_theta_target: Optional[float] = None
    overlap: float = IDEAL_OVERLAP

    def __post_init__(self):
        if isinstance(self.t_e, bool) or not isinstance(self.t_e, int) or self.t_e < 1:
            raise InvalidParameterError("t_e", f"must be a positive integer, got {self.t_e!r}")
        if self.epsilon_theta_target is not None and not 0.0 < self.epsilon_theta_target < 1.0:
            raise InvalidParameterError(
                "epsilon_theta_target", f"must lie in (0, 1), got {self.epsilon_theta_target!r}"
            )
        if not (_OVERLAP_FLOOR <= self.overlap <= 1.0):
            raise InvalidParameterError(
                "overlap", f"must lie in [2^-1/2, 1], got {self.overlap!r}"
            )

    @property
    def target(self):
        if self.epsilon_theta_target is None:
            return 2.0 ** -self.t_e
        return self.epsilon_theta_target


@dataclass(frozen=True)
class EstimationInput:
    """
    Observed statistics fed to the finite-key analysis.

    Counts may be real-valued when they come from the analytic model.

    Attributes
    ----------
    n_total : float
        All recorded detection events (Z plus X, singles plus doubles).
    p_x : float
        Probability of choosing the X basis.
    e_bx : float
        X-basis bit error rate.
    n_z_single : float
        Z-basis single clicks; the raw bit count.
    n_x : float
        X-basis events (singles plus doubles), used for the zero-error floor.
    eta_0, eta_1 : float
        Z-port efficiencies.
    duration_s : float
        Accumulation time the counts were collected over.
    """

    n_total: float
    p_x: float
    e_bx: float
    n_z_single: float
    n_x: float
    eta_0: float
    eta_1: float
    duration_s: float

    def __post_init__(self):
        if not 0.0 < self.p_x < 1.0:
            raise InvalidParameterError("p_x", f"must lie in (0, 1), got {self.p_x!r}")
        if not 0.0 <= self.e_bx < 1.0:
            raise InvalidParameterError("e_bx", f"must lie in [0, 1), got {self.e_bx!r}")
        if self.n_z_single < 0:
            raise InvalidParameterError("n_z_single", "must be >= 0")
        if self.n_x < 0:
            raise InvalidParameterError("n_x", "must be >= 0")
        if self.n_total < self.n_z_single:
            raise InvalidParameterError("n_total", "must be >= n_z_single")
        for name in ("eta_0", "eta_1"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidParameterError(name, f"must lie in [0, 1], got {v!r}")
        if not self.duration_s > 0:
            raise InvalidParameterError("duration_s", f"must be > 0, got {self.duration_s!r}")

    def replace(self, **changes):
        data = asdict(self)
        data.update(changes)
        return EstimationInput(**data)


@dataclass(frozen=True)
class RateReport:
    theta: float
    epsilon_theta: float
    e_bx: float
    n_z_single: float
    mismatch_factor: float
    extractable_bits: float
    rate_bps: float
    epsilon_total: float

    def to_dict(self):
        return asdict(self)


def clamped_qber(inp: EstimationInput) -> float:
    """Floor a zero error rate at one half-error among the X events."""
    if inp.e_bx > 0.0:
        return inp.e_bx
    if inp.n_x <= 0:
        raise DegenerateInputError("e_bx = 0 with no X-basis events; cannot floor the error rate")
    return min(0.5, 1.0 / (2.0 * inp.n_x))


def log2_epsilon_theta(theta: float, inp: EstimationInput) -> float:
    e = inp.e_bx
    if e <= 0.0 or e >= 1.0:
        raise InvalidParameterError("e_bx", "bound is singular at e_bx in {0, 1}; clamp first")
    if theta < 0 or e + theta >= 1.0:
        raise InvalidParameterError("theta", f"need 0 <= theta < 1 - e_bx, got {theta!r}")
    n = inp.n_total
    if n <= 0:
        raise DegenerateInputError("n_total must be positive")
    p = inp.p_x
    log2_pref = -0.5 * math.log2(p * (1.0 - p) * e * (1.0 - e) * n)
    return min(0.0, log2_pref - n * xi(theta, p, e))


def epsilon_theta(theta: float, inp: EstimationInput) -> float:
    """Upper bound on Prob(e_pZ > e_bX + theta)."""
    return 2.0 ** log2_epsilon_theta(theta, inp)


def solve_theta(inp: EstimationInput, target: float, rel_tol: float = 1e-6) -> float:
    """
    Smallest ``theta`` whose bound meets ``target``, by bisection.

    ``xi`` is strictly increasing on ``(0, 1 - e_bX)`` so the feasible set is
    an interval ``[theta*, 1 - e_bX)``; the returned value is its upper
    bracket, which always satisfies the target.
    """
    if not 0.0 < target <= 1.0:
        raise InvalidParameterError("target", f"must lie in (0, 1], got {target!r}")
    log_target = math.log2(target)
    e = inp.e_bx
    if log2_epsilon_theta(0.0, inp) <= log_target:
        return 0.0
    hi = math.nextafter(1.0 - e, 0.0) - e
    if hi <= 0.0 or log2_epsilon_theta(hi, inp) > log_target:
        raise NoSolutionError(f"no theta in (0, 1 - e_bx) reaches epsilon_theta <= {target!r}")
    lo = 0.0
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if log2_epsilon_theta(mid, inp) <= log_target:
            hi = mid
        else:
            lo = mid
    return hi


def extraction_length(inp: EstimationInput, sec: SecurityParams, theta: float) -> float:
    """Extractable bits without the mismatch and overlap corrections."""
    arg = inp.e_bx + theta
    if arg >= 0.5:
        return 0.0
    n_z = inp.n_z_single
    return max(0.0, n_z - n_z * binary_entropy(arg) - sec.t_e)


def mismatch_factor(eta_0, eta_1):
    if eta_0 <= 0 or eta_1 <= 0:
        raise InvalidParameterError("eta_0/eta_1", "Z-port efficiencies must be positive")
    return 2.0 * min(eta_0, eta_1) / (eta_0 + eta_1)


def epsilon_total(eps_theta, t_e):
    """Trace-distance failure probability of the whole procedure."""
    x = min(1.0, eps_theta + 2.0 ** -t_e)
    return math.sqrt(x * (2.0 - x))


def final_rate(inp: EstimationInput, sec: SecurityParams, theta: float) -> RateReport:
    factor = mismatch_factor(inp.eta_0, inp.eta_1)
    n_s = inp.n_z_single
    arg = min(0.5, inp.e_bx + theta)
    bracket = -2.0 * n_s * math.log2(sec.overlap) - n_s * binary_entropy(arg) - sec.t_e
    bits = max(0.0, factor * bracket)

    e_floor = clamped_qber(inp) if inp.n_x > 0 or inp.e_bx > 0 else None
    if e_floor is None or inp.n_total <= 0 or e_floor + theta >= 1.0:
        eps_th = 1.0
    else:
        eps_th = epsilon_theta(theta, inp.replace(e_bx=e_floor))
    return RateReport(
        theta=theta,
        epsilon_theta=eps_th,
        e_bx=inp.e_bx,
        n_z_single=n_s,
        mismatch_factor=factor,
        extractable_bits=bits,
        rate_bps=bits / inp.duration_s,
        epsilon_total=epsilon_total(eps_th, sec.t_e),
    )


def analyze(inp: EstimationInput, sec: SecurityParams) -> RateReport:
    """Solve for ``theta`` at the configured target and evaluate the final rate."""
    e = clamped_qber(inp)
    if e >= 0.5:
        return final_rate(inp.replace(e_bx=e), sec, 0.0)
    floored = inp.replace(e_bx=e)
    return final_rate(floored, sec, solve_theta(floored, sec.target))
