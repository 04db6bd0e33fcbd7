import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from mpmath import mpc, mpf

from zetaspiral.errors import OverflowEscape, PoleAtOne, PoleEncountered
from zetaspiral.mpcore import (
    FunctionSpec,
    PrecisionContext,
    as_big,
    format_complex,
    functional_equation_check,
    parse_complex,
    spouge_gamma,
    zeta,
    zeta_deriv,
    zeta_iter,
    zeta_iter_pair,
    zeta_pair,
)

CTX = PrecisionContext(digits=40)

# Reference values computed once with mpmath.zeta at 45 digits.
with mpmath.workdps(50):
    REFERENCE = [
        (
            mpc(2, 3),
            mpc("0.7980219851462757206222945007248126860252", "-0.1137443080529385002159133658573150755701"),
            mpc("0.1401295901174864802463059119556927829317", "0.02151467827919665819586930508700018722344"),
        ),
        (
            mpc("-3.5", 7),
            mpc("-0.4133330712178882169531334785868731135098", "1.841826461970122824833162545062589394986"),
            mpc("1.102048924510473645308086769580280365803", "-0.2254505643451904858134792539391067813969"),
        ),
        (
            mpc("0.5", 100),
            mpc("2.692619885681324090476096470521590577063", "-0.02038602960259816177072685329832152099173"),
            mpc("-3.727312709644648238654873451332206971282", "-0.1942287025737432333754547599013072954493"),
        ),
    ]

complex_points = st.builds(
    complex,
    st.floats(-12, 12, allow_nan=False),
    st.floats(-40, 40, allow_nan=False),
).filter(lambda s: abs(s - 1) > 1e-3 and abs(s) > 1e-3)


def rel(a, b):
    with mpmath.workdps(60):
        return abs(a - b) / max(abs(b), mpf(1) / 10**30)


def test_context_rejects_low_precision():
    with pytest.raises(ValueError):
        PrecisionContext(digits=20)
    with pytest.raises(ValueError):
        PrecisionContext(digits=40, guard=5)


def test_residual_tolerance_tracks_digits():
    assert PrecisionContext(digits=100).residual_tol == mpf(10) ** -90


def test_zeta_closed_forms():
    with mpmath.workdps(50):
        assert rel(zeta(2, CTX), mpmath.pi**2 / 6) < mpf(10) ** -40
        assert rel(zeta(4, CTX), mpmath.pi**4 / 90) < mpf(10) ** -40
        assert rel(zeta(0, CTX), mpf(-1) / 2) < mpf(10) ** -40
        assert rel(zeta(-1, CTX), mpf(-1) / 12) < mpf(10) ** -40
        assert abs(zeta(-2, CTX)) < mpf(10) ** -40


@pytest.mark.parametrize("s, value, deriv", REFERENCE)
def test_zeta_and_derivative_against_reference(s, value, deriv):
    z, d = zeta_pair(s, CTX)
    assert rel(z, value) < mpf(10) ** -38
    assert rel(d, deriv) < mpf(10) ** -38


def test_derivative_matches_finite_difference():
    s = mpc(2, 3)
    with mpmath.workdps(80):
        h = mpf(10) ** -20
        ctx = PrecisionContext(digits=70)
        fd = (zeta(s + h, ctx) - zeta(s - h, ctx)) / (2 * h)
        assert abs(fd - zeta_deriv(s, ctx)) < mpf(10) ** -35


def test_first_zero_is_a_zero():
    with mpmath.workdps(50):
        rho = mpc("0.5", "14.134725141734693790457251983562470270784")
    assert abs(zeta(rho, CTX)) < mpf(10) ** -38


def test_pole_raises():
    with pytest.raises(PoleAtOne):
        zeta(1, CTX)


@given(complex_points)
def test_conjugation_symmetry(s):
    with CTX.workdps():
        a = zeta(mpc(s).conjugate(), CTX)
        b = zeta(mpc(s), CTX).conjugate()
        assert abs(a - b) <= CTX.residual_tol * max(1, abs(b))


@settings(max_examples=100)
@given(complex_points)
def test_functional_equation_oracle(s):
    assert functional_equation_check(s, CTX) < CTX.residual_tol


@given(complex_points)
def test_precision_monotone(s):
    lo = zeta(s, PrecisionContext(digits=35))
    hi = zeta(s, PrecisionContext(digits=70))
    assert rel(lo, hi) < mpf(10) ** -33


def test_spouge_gamma_matches_mpmath():
    for w in (mpc("0.3", 2), mpc(5, -1), mpc("-2.5", "0.5")):
        with mpmath.workdps(60):
            assert rel(spouge_gamma(w, 50), mpmath.gamma(w)) < mpf(10) ** -45


def test_iterate_is_composition():
    s = mpc("-0.7", "0.4")
    with CTX.workdps():
        direct = zeta(zeta(zeta(s, CTX), CTX), CTX)
    assert rel(zeta_iter(s, 3, CTX), direct) < mpf(10) ** -38
    assert zeta_iter(s, 0, CTX) == as_big(s, CTX)


def test_iterate_pair_chain_rule():
    s = mpc("-0.7", "0.4")
    value, deriv = zeta_iter_pair(s, 2, CTX)
    with CTX.workdps():
        expected = zeta_deriv(zeta(s, CTX), CTX) * zeta_deriv(s, CTX)
    assert rel(deriv, expected) < mpf(10) ** -38
    assert rel(value, zeta_iter(s, 2, CTX)) < mpf(10) ** -38


def test_iterate_guards():
    ctx = PrecisionContext(digits=40, escape_bound=10)
    with pytest.raises(OverflowEscape):
        zeta_iter(mpc(50, 0), 2, ctx)
    with pytest.raises(PoleEncountered):
        zeta_iter(mpc(1), 1, CTX)


def test_function_spec_variants():
    s = mpc("-0.3", "0.2")
    f = FunctionSpec.iterate_minus_identity(2)
    with CTX.workdps():
        assert rel(f(s, CTX), zeta_iter(s, 2, CTX) - s) < mpf(10) ** -38
        value, deriv = f.value_and_derivative(s, CTX)
        assert rel(deriv, zeta_iter_pair(s, 2, CTX)[1] - 1) < mpf(10) ** -38
    assert FunctionSpec.zeta().describe() == "zeta(s)"
    with pytest.raises(ValueError):
        FunctionSpec.iterate(0)


@given(st.integers(-(10**6), 10**6), st.integers(-(10**6), 10**6), st.integers(0, 60))
def test_serialization_round_trip(a, b, e):
    prec = mpmath.libmp.dps_to_prec(120)
    with mpmath.workprec(prec):
        z = mpc(mpf(a) / 7 * mpf(10) ** -e, mpf(b) / 3)
        back = parse_complex(format_complex(z, prec), prec)
        assert back == z


def test_as_big_parses_pairs():
    z = as_big("1.5 -2", CTX)
    assert z == mpc("1.5", -2)
    with pytest.raises(ValueError):
        as_big("1.5", CTX)
