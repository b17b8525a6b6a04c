import math

import pytest
from hypothesis import assume, given, settings, strategies as st

from siqrng.errors import DegenerateInputError, InvalidParameterError, NoSolutionError
from siqrng.security import (
    IDEAL_OVERLAP,
    EstimationInput,
    SecurityParams,
    analyze,
    binary_entropy,
    epsilon_theta,
    epsilon_total,
    extraction_length,
    final_rate,
    log2_epsilon_theta,
    mismatch_factor,
    solve_theta,
    xi,
)

# 50-digit oracle values
H_001252 = 0.013876343256322789
LOG2_EPS_AT_132E_7 = -109.21477705679247
THETA_STAR = 1.256976829757898e-5
THETA_STAR_HALF_N = 1.7844849742499066e-5
# xi(theta) / theta^2 for p_x = 0.4717, e_bx = 0.00124
XI_CURVATURE = {1e-6: 145.08751810660584, 1e-9: 145.14698737413497, 1e-12: 145.14704687175993}
EXTRACTION_LENGTH = 1826300912.2892902
MISMATCH = 0.93975903614457831
FINAL_BITS = 1716282785.0429474
FINAL_RATE = 8581413.9252147371
EPS_TOTAL_SYMMETRIC = 1.7763568394002505e-15


def reference_input(**changes):
    base = EstimationInput(
        n_total=3.94e9,
        p_x=0.4717,
        e_bx=0.00124,
        n_z_single=1.852e9,
        n_x=1.93e9,
        eta_0=0.0176,
        eta_1=0.0156,
        duration_s=200.0,
    )
    return base.replace(**changes) if changes else base


def test_binary_entropy_values():
    assert binary_entropy(0.5) == 1.0
    assert binary_entropy(0.0) == 0.0
    assert binary_entropy(1.0) == 0.0
    assert binary_entropy(0.001252) == pytest.approx(H_001252, abs=1e-12)


@pytest.mark.parametrize("x", [-0.1, 1.1])
def test_binary_entropy_domain(x):
    with pytest.raises(InvalidParameterError):
        binary_entropy(x)


@given(st.floats(0.0, 1.0))
def test_binary_entropy_symmetric_and_bounded(x):
    assert binary_entropy(x) == pytest.approx(binary_entropy(1.0 - x), abs=1e-12)
    assert 0.0 <= binary_entropy(x) <= 1.0


def test_xi_quadratic_near_zero():
    for theta, ratio in XI_CURVATURE.items():
        assert xi(theta, 0.4717, 0.00124) / theta**2 == pytest.approx(ratio, rel=1e-7)
    assert xi(0.0, 0.4717, 0.00124) == 0.0


@settings(max_examples=50)
@given(st.floats(1e-4, 0.45), st.floats(0.05, 0.95), st.floats(1e-7, 0.3), st.floats(1.01, 2.0))
def test_xi_strictly_increasing(e, p, theta, factor):
    assume(e + theta * factor < 1.0)
    assert xi(theta * factor, p, e) > xi(theta, p, e)


def test_epsilon_theta_reference_point():
    inp = reference_input()
    assert log2_epsilon_theta(1.32e-5, inp) == pytest.approx(LOG2_EPS_AT_132E_7, abs=1e-6)


def test_epsilon_theta_at_zero_is_prefactor():
    inp = reference_input()
    prefactor = 1.0 / math.sqrt(0.4717 * 0.5283 * 0.00124 * 0.99876 * 3.94e9)
    assert epsilon_theta(0.0, inp) == pytest.approx(min(1.0, prefactor), rel=1e-12)
    tiny = reference_input(n_total=2.0, n_z_single=1.0)
    assert epsilon_theta(0.0, tiny) == 1.0


def test_epsilon_theta_decreases_with_n():
    inp = reference_input()
    assert epsilon_theta(1e-5, inp.replace(n_total=2 * inp.n_total)) < epsilon_theta(1e-5, inp)


@pytest.mark.parametrize("e", [0.0])
def test_epsilon_theta_rejects_singular_error_rate(e):
    with pytest.raises(InvalidParameterError):
        epsilon_theta(1e-5, reference_input(e_bx=e))


def test_solve_theta_reference_point():
    theta = solve_theta(reference_input(), 2.0**-100)
    assert theta == pytest.approx(THETA_STAR, rel=2e-6)
    # within the stated tolerance of the reported deviation
    assert abs(theta - 1.23e-5) / 1.23e-5 < 0.15


def test_solve_theta_bracket_is_tight():
    inp = reference_input()
    target = 2.0**-100
    theta = solve_theta(inp, target)
    assert epsilon_theta(theta, inp) <= target
    assert epsilon_theta(theta * (1 - 1e-3), inp) > target


def test_solve_theta_halving_n_increases_theta():
    inp = reference_input()
    half = solve_theta(inp.replace(n_total=inp.n_total / 2, n_z_single=inp.n_z_single / 2), 2.0**-100)
    assert half == pytest.approx(THETA_STAR_HALF_N, rel=2e-6)
    assert half > solve_theta(inp, 2.0**-100)


def test_solve_theta_trivial_target():
    assert solve_theta(reference_input(), 1.0) == 0.0


def test_solve_theta_no_solution_for_tiny_sample():
    inp = reference_input(n_total=5.0, n_z_single=2.0, n_x=3.0, e_bx=0.3)
    with pytest.raises(NoSolutionError):
        solve_theta(inp, 2.0**-100)


def test_extraction_length_values():
    sec = SecurityParams(t_e=100)
    assert extraction_length(reference_input(e_bx=0.25), sec, 0.25) == 0.0
    lossless = reference_input(e_bx=0.0, n_z_single=1e6, n_total=2e6)
    assert extraction_length(lossless, sec, 0.0) == 999_900
    inp = reference_input(e_bx=0.001252)
    assert extraction_length(inp, sec, 0.0) == pytest.approx(EXTRACTION_LENGTH, rel=1e-12)


def test_mismatch_factor():
    assert mismatch_factor(0.0176, 0.0156) == pytest.approx(MISMATCH, rel=1e-14)
    assert mismatch_factor(0.3, 0.3) == 1.0
    with pytest.raises(InvalidParameterError):
        mismatch_factor(0.0, 0.1)


def test_final_rate_reference_inputs():
    report = final_rate(reference_input(e_bx=0.001252), SecurityParams(t_e=100), 0.0)
    assert report.extractable_bits == pytest.approx(FINAL_BITS, rel=1e-11)
    assert report.rate_bps == pytest.approx(FINAL_RATE, rel=1e-11)
    assert report.mismatch_factor == pytest.approx(MISMATCH)


def test_final_rate_equal_efficiencies_reduces_to_plain_length():
    inp = reference_input(e_bx=0.001252, eta_1=0.0176)
    sec = SecurityParams(t_e=100)
    report = final_rate(inp, sec, 0.0)
    assert report.extractable_bits == pytest.approx(extraction_length(inp, sec, 0.0), rel=1e-12)


def test_final_rate_identical_bases_certify_nothing():
    report = final_rate(reference_input(), SecurityParams(overlap=1.0), 1e-5)
    assert report.extractable_bits == 0.0
    assert report.rate_bps == 0.0


@pytest.mark.parametrize("overlap", [0.5, 0.7, 1.2])
def test_overlap_out_of_range(overlap):
    with pytest.raises(InvalidParameterError) as info:
        SecurityParams(overlap=overlap)
    assert info.value.field == "overlap"


def test_security_params_validation():
    with pytest.raises(InvalidParameterError):
        SecurityParams(t_e=0)
    with pytest.raises(InvalidParameterError):
        SecurityParams(epsilon_theta_target=1.5)
    assert SecurityParams(t_e=64).target == 2.0**-64
    assert SecurityParams(epsilon_theta_target=1e-9).target == 1e-9


def test_epsilon_total_values():
    assert epsilon_total(2.0**-100, 100) == pytest.approx(EPS_TOTAL_SYMMETRIC, rel=1e-12)
    assert epsilon_total(1.0, 100) == 1.0


@given(st.floats(0.0, 0.4), st.floats(0.0, 0.4))
def test_epsilon_total_monotone(a, b):
    lo, hi = sorted((a, b))
    assert 0.0 <= epsilon_total(lo, 50) <= epsilon_total(hi, 50) <= 1.0


@settings(max_examples=40)
@given(st.floats(1e-4, 0.2), st.floats(1.001, 1.5))
def test_final_rate_nonincreasing_in_error_rate(e, factor):
    sec = SecurityParams()
    lo = final_rate(reference_input(e_bx=e), sec, 1e-5).extractable_bits
    hi = final_rate(reference_input(e_bx=min(0.49, e * factor)), sec, 1e-5).extractable_bits
    assert hi <= lo


@settings(max_examples=40)
@given(st.integers(1, 10_000), st.integers(1, 10_000), st.floats(IDEAL_OVERLAP, 1.0), st.floats(0.0, 0.3))
def test_final_rate_monotone_in_t_e_and_overlap(t1, t2, overlap, extra):
    inp = reference_input(e_bx=0.001252)
    a, b = sorted((t1, t2))
    assert (final_rate(inp, SecurityParams(t_e=b), 0.0).extractable_bits
            <= final_rate(inp, SecurityParams(t_e=a), 0.0).extractable_bits)
    o2 = min(1.0, overlap + extra)
    assert (final_rate(inp, SecurityParams(overlap=o2), 0.0).extractable_bits
            <= final_rate(inp, SecurityParams(overlap=overlap), 0.0).extractable_bits)


@settings(max_examples=40)
@given(st.floats(1e3, 1e9), st.floats(1.0, 2.0))
def test_final_rate_nondecreasing_in_raw_count(n, factor):
    sec = SecurityParams()
    lo = final_rate(reference_input(n_z_single=n, e_bx=0.001252), sec, 0.0).extractable_bits
    hi = final_rate(reference_input(n_z_single=n * factor, e_bx=0.001252), sec, 0.0).extractable_bits
    assert hi >= lo


def test_analyze_floors_zero_error_rate():
    inp = reference_input(e_bx=0.0)
    report = analyze(inp, SecurityParams())
    floor = 1.0 / (2.0 * inp.n_x)
    assert report.e_bx == pytest.approx(floor)
    assert report.epsilon_theta <= 2.0**-100 * (1 + 1e-9)


def test_analyze_zero_error_without_x_events():
    with pytest.raises(DegenerateInputError):
        analyze(reference_input(e_bx=0.0, n_x=0.0), SecurityParams())


def test_analyze_reference_chain():
    report = analyze(reference_input(), SecurityParams())
    assert report.theta == pytest.approx(THETA_STAR, rel=2e-6)
    assert report.epsilon_theta <= 2.0**-100
    assert report.extractable_bits <= report.n_z_single
    assert report.rate_bps == pytest.approx(report.extractable_bits / 200.0)


def test_analyze_high_error_rate_gives_nothing():
    report = analyze(reference_input(e_bx=0.6), SecurityParams())
    assert report.extractable_bits == 0.0


@pytest.mark.parametrize("field,value", [("p_x", 0.0), ("e_bx", 1.0), ("n_z_single", -1.0),
                                         ("duration_s", 0.0), ("eta_0", 1.5)])
def test_estimation_input_validation(field, value):
    with pytest.raises(InvalidParameterError) as info:
        reference_input(**{field: value})
    assert info.value.field == field
