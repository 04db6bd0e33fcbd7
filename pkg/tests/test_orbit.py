from dataclasses import replace

import mpmath
import pytest
from mpmath import mpc, mpf

from zetaspiral.errors import ParseError
from zetaspiral.mpcore import PrecisionContext, zeta
from zetaspiral.orbit import (
    Branch,
    Fate,
    amplification_bound,
    backward_branch,
    cycle_branch,
    forward_classify,
    phi,
    set_image_check,
    truncate_reliable,
)
from zetaspiral.rootfind import Box, Cycle, find_fixed_point, find_psi_rho, refine_zero

CTX = PrecisionContext(digits=60)


@pytest.fixture(scope="module")
def rho1():
    return refine_zero("14.1347", CTX)


@pytest.fixture(scope="module")
def branch(rho1):
    psi = find_psi_rho(1, CTX)
    return backward_branch(rho1, Cycle.fixed_point(psi, CTX), 16, CTX)


@pytest.fixture(scope="module")
def three_cycle():
    ctx = PrecisionContext(digits=40)
    rho = refine_zero("14.1347", ctx)
    with ctx.workdps():
        box = Box(rho + mpc("3.46", "0.103"), 0.02)
    return find_fixed_point(3, box, ctx)


def test_phi_value():
    with mpmath.workdps(60):
        ref = mpf("-0.2959050055752139556472378310830480339487")
        assert abs(phi(CTX) - ref) < mpf(10) ** -40


def test_forward_classify_fates():
    ctx = PrecisionContext(digits=30)
    assert forward_classify(0, 200, ctx).fate is Fate.CONVERGED_TO_PHI
    assert forward_classify(mpc(-30, 5), 20, ctx).fate is Fate.ESCAPED
    assert forward_classify(mpc(1, 1e-9), 5, ctx).fate is Fate.POLE_HIT
    assert forward_classify(0, 1, ctx).fate is Fate.UNDECIDED
    with pytest.raises(ValueError):
        forward_classify(0, 0, ctx)


def test_far_right_orbits_collapse_onto_pole():
    # zeta(40) is within 1e-12 of 1, so the next step lands at the pole.
    result = forward_classify(40, 10, PrecisionContext(digits=30))
    assert result.fate is Fate.POLE_HIT
    assert result.steps == 1


def test_branch_is_a_backward_orbit(branch, rho1):
    assert len(branch) == 16
    assert branch.elements[0] == rho1
    with CTX.workdps():
        for k in range(1, len(branch)):
            assert abs(zeta(branch.elements[k], CTX) - branch.elements[k - 1]) < CTX.residual_tol
    d = branch.distances()
    assert all(d[k + 1] < d[k] for k in range(1, len(d) - 1))


def test_branch_round_trip(branch):
    text = branch.dumps("provenance line")
    assert text.startswith("# provenance line\n")
    back = Branch.loads(text)
    assert back.elements == branch.elements
    assert back.anchor.elements == branch.anchor.elements
    assert back.root == branch.root
    assert back.verified_len == branch.verified_len
    assert back.dumps("provenance line") == text


def test_branch_parse_errors(branch):
    lines = branch.dumps().splitlines()
    with pytest.raises(ParseError):
        Branch.loads("\n".join(lines[:5]))
    lines[3] = "garbage"
    with pytest.raises(ParseError) as info:
        Branch.loads("\n".join(lines))
    assert info.value.line == 4


def test_set_image_check(branch):
    assert set_image_check(branch)
    with CTX.workdps():
        bad = list(branch.elements)
        bad[5] = bad[5] + mpf(10) ** -20
    assert not set_image_check(replace(branch, elements=tuple(bad)))


def test_truncate_reliable_keeps_clean_branch(branch):
    assert len(truncate_reliable(branch)) == len(branch)
    assert len(truncate_reliable(branch, stride=4)) == len(branch)


def test_truncate_reliable_cuts_corruption(branch):
    with CTX.workdps():
        bad = list(branch.elements)
        bad[7] = bad[7] * (1 + mpf(10) ** -30)
    for stride in (1, 5):
        cut = truncate_reliable(replace(branch, elements=tuple(bad)), stride=stride)
        assert cut.verified_len <= 7


def test_truncate_reliable_low_precision(rho1):
    # At 40 digits the amplified error passes 1e-6 after about 30 steps.
    ctx = PrecisionContext(digits=40)
    psi = find_psi_rho(1, ctx)
    b = backward_branch(refine_zero("14.1347", ctx), Cycle.fixed_point(psi, ctx), 60, ctx)
    cut = truncate_reliable(b, stride=8)
    assert 10 < len(cut) < 45


def test_amplification_bound_grows(branch):
    bounds = [amplification_bound(branch, k, CTX) for k in range(1, 8)]
    assert all(b2 > b1 for b1, b2 in zip(bounds, bounds[1:]))


def test_cycle_branch_subsequences(three_cycle):
    ctx = PrecisionContext(digits=40)
    rho = refine_zero("14.1347", ctx)
    b = cycle_branch(rho, three_cycle, 13, ctx)
    assert b.L == 3 and len(b) == 13
    assert [len(s) for s in b.subsequences()] == [5, 4, 4]
    d = b.distances()
    for j in range(3):
        tail = d[j::3][1:] if j == 0 else d[j::3]
        assert all(y < x for x, y in zip(tail, tail[1:]))
    assert b.anchor_index(1) == 2 and b.anchor_index(3) == 0
    assert set_image_check(b)
