import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from mpmath import mpc, mpf

from zetaspiral.errors import DegenerateAbscissa, DimensionMismatch, VerticalLine, ZeroRadius
from zetaspiral.mpcore import PrecisionContext
from zetaspiral.orbit import Branch, backward_branch
from zetaspiral.rootfind import Cycle, find_psi_rho, refine_zero
from zetaspiral.spiralfit import (
    ParityClass,
    PolarSeries,
    SpiralFit,
    arg_deriv_parity,
    conjecture4_stats,
    decay_slope,
    default_c_offset,
    delta_series,
    deviations,
    fit_extended,
    fit_index_linear,
    fit_log_linear,
    line_deviation,
    model_deviation,
    near_uniform_check,
    pairwise_params,
    polar_from_points,
    rotation_discrepancy,
    unwrap,
    write_csv,
)

CTX = PrecisionContext(digits=60)


def spiral_points(m, b, step, count, center=0j, start=0.3):
    thetas = start + step * np.arange(count)
    return [center + math.exp(m * t + b) * complex(math.cos(t), math.sin(t)) for t in thetas], thetas


def rel_close(x, y, digits=10):
    return abs(x - y) <= 10.0**-digits * max(1.0, abs(y))


@pytest.fixture(scope="module")
def branch():
    rho = refine_zero("14.1347", CTX)
    psi = find_psi_rho(1, CTX)
    return backward_branch(rho, Cycle.fixed_point(psi, CTX), 20, CTX)


@given(
    st.floats(-0.5, -0.05),
    st.floats(-2.0, 2.0),
    st.floats(0.3, 3.0),
)
def test_log_linear_recovers_exact_spiral(m, b, step):
    pts, thetas = spiral_points(m, b, step, 25)
    p = polar_from_points(pts)
    assert np.all(np.diff(p.theta) > 0)
    fit = fit_log_linear(p)
    assert rel_close(fit.m, m) and rel_close(fit.b, b)
    rep = deviations(None, fit, p, 5)
    assert rep.max < 1e-10 and rep.mean < 1e-10


@given(st.floats(-0.4, -0.1), st.floats(-1, 1), st.floats(0.05, 0.3), st.floats(1e-4, 1e-2))
def test_extended_fit_recovers_exact_model(b, a, d, c):
    theta = np.linspace(0.0, 25.0, 80)
    logr = a + b * theta + c * np.exp(d * theta)
    pts = [math.exp(y) * complex(math.cos(t), math.sin(t)) for y, t in zip(logr, theta)]
    ext = fit_extended(polar_from_points(pts))
    assert ext.improved
    for got, want in ((ext.a, a), (ext.b, b), (ext.c, c), (ext.d, d)):
        assert rel_close(got, want, 8)


def test_extended_fit_on_pure_spiral_keeps_the_line():
    pts, _ = spiral_points(-0.2, 0.5, 1.1, 40)
    ext = fit_extended(polar_from_points(pts))
    assert not ext.improved
    assert ext.c == 0.0 and ext.d == 0.0
    assert rel_close(ext.b, -0.2) and rel_close(ext.a, 0.5)


@given(st.floats(-1.0, -0.05), st.floats(-3, 3), st.floats(0.5, 3.0))
def test_index_linear_recovers_exact_model(m, b, step):
    k = np.arange(30)
    pts = [math.exp(m * i + b) * complex(math.cos(step * i), math.sin(step * i)) for i in k]
    fit = fit_index_linear(polar_from_points(pts))
    assert rel_close(fit.m, m) and rel_close(fit.b, b)
    # The deviation is relative to log r_k, so keep log r_k away from zero.
    if np.min(np.abs(m * k[1:] + b)) > 1e-3:
        values, mean, mx = model_deviation(polar_from_points(pts), fit, 29)
        assert mx < 1e-10


def test_pairwise_matches_line_on_two_points():
    pts, _ = spiral_points(-0.3, 0.2, 1.3, 2)
    p = polar_from_points(pts)
    (a, b), = pairwise_params(p)
    fit = fit_log_linear(p)
    assert rel_close(a, fit.b) and rel_close(b, fit.m)


def test_degenerate_inputs():
    with pytest.raises(DegenerateAbscissa):
        fit_log_linear(PolarSeries(np.array([1.0]), np.array([0.0]), 0))
    with pytest.raises(DegenerateAbscissa):
        fit_log_linear(PolarSeries(np.array([1.0, 1.0]), np.array([0.0, 1.0]), 0))
    with pytest.raises(ZeroRadius):
        polar_from_points([1 + 1j, 0j])


def test_c_offset_policy():
    assert default_c_offset(mpc(-20.1, 0)) == 1
    assert default_c_offset(mpc(-2.3, 16.2)) == 0


def test_c_offset_changes_branch_choice():
    # Steps of about 0.5 radians: with c = 1 each angle must advance by more than 1.
    pts, _ = spiral_points(-0.1, 0.0, 0.5, 6)
    t0 = polar_from_points(pts, c_offset=0).theta
    t1 = polar_from_points(pts, c_offset=1).theta
    assert np.allclose(np.diff(t0), 0.5)
    assert np.allclose(np.diff(t1), 0.5 + 2 * math.pi)


def test_unwrap_is_deterministic(branch):
    p1, p2 = unwrap(branch), unwrap(branch)
    assert np.array_equal(p1.theta, p2.theta) and np.array_equal(p1.logr, p2.logr)


def test_deviation_identity(branch):
    p = unwrap(branch)
    rep = deviations(branch, fit_log_linear(p), p, 3)
    for k in range(len(p)):
        assert rep.d_abs[k] == mpmath.fmul(p.r[k], float(rep.d_rel[k]), exact=True)
    assert rep.mean_scaled == pytest.approx(rep.mean * math.sqrt(3 / math.log(3)))
    assert math.isinf(deviations(branch, fit_log_linear(p), p, 1).mean_scaled)


def test_delta_series_sums_to_winding(branch):
    p = unwrap(branch)
    deltas, second = delta_series(branch)
    for K in (1, 5, len(deltas)):
        assert abs(deltas[:K].sum() - (p.theta[K] - p.theta[0])) < 1e-9
    assert len(second) == len(deltas) - 1


def test_near_uniform_on_geometric_sequence():
    values = [mpf(3) * mpmath.exp(-mpf("0.7") * k) * (1 + mpf("0.1") * (-1) ** k) for k in range(30)]
    A, B, ok = near_uniform_check(values)
    assert ok and B == pytest.approx(0.7, rel=0.05)
    growing = [mpmath.exp(mpf("0.2") * k) for k in range(30)]
    assert near_uniform_check(growing)[2] is False


def test_rotation_discrepancy(branch):
    psi = branch.anchor[0]
    assert all(v == 0 for v in rotation_discrepancy(branch, psi, 0))
    assert decay_slope(rotation_discrepancy(branch, psi, math.pi / 7)) < 0


def test_line_deviation_and_vertical_line(branch):
    values, mean, mx = line_deviation(branch, branch.root, branch.anchor[0], 10)
    assert len(values) == 10 and 0 <= mean <= mx
    with pytest.raises(VerticalLine):
        line_deviation(branch, mpc("0.5", 14), mpc("0.5", 20), 5)


def test_arg_deriv_parity():
    ctx = PrecisionContext(digits=30)
    assert arg_deriv_parity(10, ctx) == (0.0, ParityClass.ZERO_MOD_4)
    assert arg_deriv_parity(11, ctx) == (math.pi, ParityClass.TWO_MOD_4)


def test_conjecture4_bound_ordering():
    # Running means placed strictly between the two bound curves; with the
    # exponents .8 and .85 the curve -(log N)^.85 is the lower one.
    N = 60
    target = [math.exp(-(math.log(n) ** 0.825)) for n in range(1, N + 1)]
    rel = [target[0]] + [(n + 1) * target[n] - n * target[n - 1] for n in range(1, N)]
    absolute = [mpf(1) / n for n in range(1, N + 1)]
    stats = conjecture4_stats(rel, absolute)
    assert len(stats.D_rel) == N
    assert stats.rel_flags[1:].all() and not stats.rel_flags[0]
    # H_N / N drops below 1 / sqrt(N) from N = 7 on.
    assert stats.abs_flags[6:].all() and not stats.abs_flags[:6].any()
    swapped = conjecture4_stats(rel, absolute, e1=0.85, e2=0.8)
    assert np.array_equal(swapped.rel_flags, stats.rel_flags)


def test_write_csv(tmp_path):
    path = tmp_path / "x.csv"
    write_csv(path, {"k": [0, 1], "theta_k": [0.5, mpf("1.25")]}, comment="tag")
    assert path.read_text() == "# tag\nk,theta_k\n0,0.5\n1,1.25\n"
    with pytest.raises(DimensionMismatch):
        write_csv(path, {"a": [1], "b": [1, 2]})
