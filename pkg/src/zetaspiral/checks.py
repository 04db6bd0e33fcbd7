"""Acceptance checks shared by ``zetaspiral verify`` and the test suite.

Each check returns a :class:`CheckResult` whose ``metrics`` hold plain
floats, ints, bools and strings so that reports serialize identically on
every run.  Expensive intermediate objects (branches) are memoized per
process because several checks reuse the same ones.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import mpmath
import numpy as np
from mpmath import mpc, mpf

from .mpcore import (
    PrecisionContext,
    functional_equation_check,
    zeta,
    zeta_deriv,
    zeta_iter,
)
from .orbit import Branch, backward_branch, phi, set_image_check, truncate_reliable
from .render import quadrant_plot, rational_example
from .rootfind import (
    PALE_CLASSES,
    RICH_CLASSES,
    Box,
    Cycle,
    find_fixed_point,
    find_psi_rho,
    find_trivial_fixed_point,
    read_zero_table,
    refine_zero,
)
from .spiralfit import (
    conjecture4_stats,
    decay_slope,
    delta_series,
    deviations,
    fit_extended,
    fit_index_linear,
    fit_log_linear,
    line_deviation,
    nearly_straight_check,
    polar_from_points,
    rotation_discrepancy,
    unwrap,
)

FAST = (2, 7)
FULL = (1, 2, 3, 4, 5, 6, 7)
# Reliability re-checks on every 16th element (plus bisection on failure).
STRIDE = 16

# Published low-precision coordinates of the first fixed points near the
# nontrivial zeros, and of the attracting real fixed point.
PSI_TABLE = {
    1: ("-2.3859", "16.271"),
    2: ("-2.0369", "21.9931"),
    3: ("-1.6935", "26.5283"),
    4: ("-1.7496", "30.8158"),
}
PHI_TABLE = "-0.295905"


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    detail: str = ""
    artifacts: dict = field(default_factory=dict, repr=False)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = f"[{status}] criterion {self.number}: {self.name}"
        return f"{text} ({self.detail})" if self.detail else text


def packaged_zero_table() -> list[str]:
    path = resources.files("zetaspiral") / "data" / "zeros100.txt"
    with resources.as_file(path) as p:
        return read_zero_table(p)


def packaged_lambda1() -> mpc:
    text = (resources.files("zetaspiral") / "data" / "lambda1.txt").read_text()
    re, im = text.split()
    with mpmath.workdps(len(re) + 10):
        return mpc(mpf(re), mpf(im))


@lru_cache(maxsize=None)
def nontrivial_zero(n: int, digits: int) -> mpc:
    table = packaged_zero_table()
    if n < 1:
        raise ValueError("zero index must be >= 1")
    height = table[n - 1] if n <= len(table) else mpmath.zetazero(n).imag
    return refine_zero(height, PrecisionContext(digits=digits))


@lru_cache(maxsize=None)
def psi_rho(n: int, digits: int) -> mpc:
    return find_psi_rho(n, PrecisionContext(digits=digits))


@lru_cache(maxsize=None)
def psi_trivial(n: int, digits: int) -> mpc:
    return find_trivial_fixed_point(n, PrecisionContext(digits=digits))


@lru_cache(maxsize=None)
def rho_branch(n: int, length: int, digits: int) -> Branch:
    """Reliable part of B_{rho_n, psi_{rho_n}} with up to ``length`` elements."""
    ctx = PrecisionContext(digits=digits)
    anchor = Cycle.fixed_point(psi_rho(n, digits), ctx)
    return truncate_reliable(backward_branch(nontrivial_zero(n, digits), anchor, length, ctx), stride=STRIDE)


@lru_cache(maxsize=None)
def trivial_branch(n_zero: int, n_trivial: int, length: int, digits: int) -> Branch:
    """Reliable part of B_{rho_m, psi_{-2n}}."""
    ctx = PrecisionContext(digits=digits)
    anchor = Cycle.fixed_point(psi_trivial(n_trivial, digits), ctx)
    b = backward_branch(nontrivial_zero(n_zero, digits), anchor, length, ctx)
    return truncate_reliable(b, stride=STRIDE)


def _ulp(text: str) -> float:
    decimals = len(text.split(".")[1]) if "." in text else 0
    return 10.0**-decimals


def _agreeing_digits(x: mpc, ref: mpc) -> float:
    with mpmath.workdps(mpmath.mp.dps + 20):
        err = abs(x - ref)
        if err == 0:
            return math.inf
        return float(-mpmath.log10(err / abs(ref)))


# ----------------------------------------------------------------- criteria


def check_lambda1(digits: int = 500, min_digits: int = 490) -> CheckResult:
    """Three-cycle element next to the first zero, solved from a small box."""
    ctx = PrecisionContext(digits=digits)
    rho = nontrivial_zero(1, digits)
    with ctx.workdps():
        box = Box(rho + mpc("3.46", "0.103"), 0.02)
    cycle = find_fixed_point(3, box, ctx)
    ref = packaged_lambda1()
    with ctx.workdps():
        lam = min(cycle.elements, key=lambda z: abs(z - ref))
        agree = _agreeing_digits(lam, ref)
        residual = abs(zeta_iter(lam, 3, ctx) - lam)
    res_log = float(mpmath.log10(residual)) if residual > 0 else -math.inf
    passed = agree >= min_digits and res_log < -min_digits and cycle.primitive
    return CheckResult(
        1,
        "three-cycle element reproduced",
        passed,
        {"agreeing_digits": round(agree, 1), "log10_residual": round(res_log, 1), "primitive": cycle.primitive},
        f"{agree:.1f} digits agree, residual 1e{res_log:.1f}",
    )


def check_fixed_point_table(digits: int = 60) -> CheckResult:
    """psi_{rho_1..4} to their printed digits and phi to six figures."""
    metrics, ok = {}, True
    for n, (re, im) in PSI_TABLE.items():
        psi = psi_rho(n, digits)
        err_re = abs(float(psi.real) - float(re))
        err_im = abs(float(psi.imag) - float(im))
        good = err_re <= _ulp(re) and err_im <= _ulp(im)
        metrics[f"psi_{n}"] = mpmath.nstr(psi, 8)
        metrics[f"psi_{n}_ok"] = good
        ok &= good
    value = phi(PrecisionContext(digits=digits))
    phi_ok = float(mpmath.nstr(value.real, 6)) == float(PHI_TABLE) and value.imag == 0
    metrics["phi"] = mpmath.nstr(value.real, 10)
    metrics["phi_ok"] = phi_ok
    ok &= phi_ok
    return CheckResult(2, "fixed-point table", ok, metrics, f"phi = {metrics['phi']}")


def check_extended_fit(length: int = 240, digits: int = 500, min_verified: int = 100) -> CheckResult:
    """Extended spiral model on B_{rho_1, psi_{rho_1}}."""
    b = rho_branch(1, length, digits)
    p = unwrap(b)
    line = fit_log_linear(p)
    ext = fit_extended(p)
    metrics = {
        "verified": len(b),
        "a": round(ext.a, 6),
        "b": round(ext.b, 6),
        "c": ext.c,
        "d": round(ext.d, 6),
        "improved": ext.improved,
        "line_intercept": round(line.b, 6),
        "line_slope": round(line.m, 6),
    }
    passed = (
        len(b) >= min_verified
        and abs(ext.a - 0.0558) <= 1e-3
        and abs(ext.b + 2.3948) <= 1e-3
        and abs(ext.d - 0.9738) <= 1e-3
        and abs(ext.c) < 1e-100
    )
    detail = f"a={ext.a:.5f} b={ext.b:.5f} c={ext.c:.3g} d={ext.d:.4f} improved={ext.improved}"
    return CheckResult(3, "branch and extended fit", passed, metrics, detail)


def _uniform_window(b: Branch, second) -> list:
    """Second differences whose elements are well above the angular noise floor.

    An angle at radius r carries an error of about residual_tol / r, so
    second differences are kept while r_k^2 exceeds residual_tol.
    """
    floor = mpmath.sqrt(b.ctx.residual_tol)
    radii = b.distances()
    keep = 0
    while keep < len(second) and radii[keep + 2] > floor:
        keep += 1
    return second[:keep]


def check_angular_limit(n_max: int = 20, length: int = 102, digits: int = 300, tol: float = 0.05) -> CheckResult:
    """delta(100) near pi/2 and near-uniform second differences, n = 1..n_max."""
    from .spiralfit import near_uniform_check

    deltas, uniform, ok = {}, {}, True
    for n in range(1, n_max + 1):
        b = rho_branch(n, length, digits)
        d, second = delta_series(b)
        if len(d) <= 100:
            deltas[n] = math.nan
            ok = False
            continue
        rel = abs(d[100] - math.pi / 2) / (math.pi / 2)
        deltas[n] = round(float(rel), 6)
        window = _uniform_window(b, second)
        A, B, good = near_uniform_check(window) if len(window) >= 8 else (0.0, 0.0, False)
        uniform[n] = good
        ok &= rel < tol and good
    failing = [n for n, v in deltas.items() if not v < tol]
    metrics = {
        "relative_deviation": {str(n): v for n, v in deltas.items()},
        "near_uniform": {str(n): v for n, v in uniform.items()},
        "failing": failing,
    }
    detail = f"{len(failing)} of {n_max} outside {tol:.0%}; near-uniform {sum(uniform.values())}/{n_max}"
    return CheckResult(4, "angular limit", ok, metrics, detail)


def check_trivial_geometry(
    line_digits: int = 1000, line_length: int = 21, delta_digits: int = 200
) -> CheckResult:
    """Fixed points near -20..-28, derivative signs, and B_{rho_1, psi_-20}."""
    metrics, ok = {}, True
    ctx = PrecisionContext(digits=60)
    for n in range(10, 15):
        psi = psi_trivial(n, 60)
        inside = psi.imag == 0 and -2 * n - 1 < psi.real < -2 * n + 1
        with ctx.workdps():
            positive = zeta_deriv(psi, ctx).real > 0
        sign_ok = positive == ((2 * n) % 4 == 0)
        metrics[f"psi_-{2 * n}"] = mpmath.nstr(psi.real, 12)
        metrics[f"psi_-{2 * n}_ok"] = bool(inside and sign_ok)
        ok &= inside and sign_ok
    b = trivial_branch(1, 10, line_length, line_digits)
    rho, psi = nontrivial_zero(1, line_digits), psi_trivial(10, line_digits)
    _, mean, _ = line_deviation(b, rho, psi, len(b) - 1)
    straight, slope = nearly_straight_check(b, rho, psi)
    metrics.update(line_mean=float(mean), straight=straight, straight_slope=float(slope), verified=len(b))
    ok &= len(b) >= line_length and mean < 1e-2 and straight
    # delta_k against 2 pi for psi_-20 and against pi for psi_-22.
    for n_zero, n_triv, target in ((1, 10, 2 * math.pi), (2, 11, math.pi)):
        bb = trivial_branch(n_zero, n_triv, line_length, delta_digits)
        d, _ = delta_series(bb)
        worst = float(np.max(np.abs(d - target)) / target)
        metrics[f"delta_psi_-{2 * n_triv}"] = round(worst, 6)
        ok &= worst < 0.1
    detail = f"line mean {mean:.4g}, nearly straight {straight}"
    return CheckResult(5, "trivial-zero geometry", ok, metrics, detail)


def check_deviation_scaling(
    n_max: int = 50, beta: int = 100, digits: int = 300, length: int = 102
) -> CheckResult:
    """Scaled deviation statistics for n = 2..n_max, plus the root-deviation bound flags."""
    ok = True
    worst_max = worst_mean = 0.0
    d0_rel, d0_abs = [], []
    for n in range(1, n_max + 1):
        b = rho_branch(n, length, digits)
        p = unwrap(b)
        rep = deviations(b, fit_log_linear(p), p, n, beta=beta)
        d0_rel.append(float(rep.d_rel[0]))
        d0_abs.append(rep.d_abs[0])
        if n == 1:
            continue
        if len(b) < beta + 1:
            ok = False
        worst_max = max(worst_max, rep.max_scaled)
        worst_mean = max(worst_mean, rep.mean_scaled)
    ok &= worst_max < 1 and worst_mean < 1
    stats = conjecture4_stats(d0_rel, d0_abs)
    metrics = {
        "worst_max_scaled": round(worst_max, 6),
        "worst_mean_scaled": round(worst_mean, 6),
        "rel_bound_fraction": round(float(stats.rel_flags.mean()), 4),
        "abs_bound_fraction": round(float(stats.abs_flags.mean()), 4),
    }
    detail = f"max* {worst_max:.4f}, mean* {worst_mean:.4f} (n = 2..{n_max})"
    return CheckResult(6, "deviation scaling", ok, metrics, detail)


def _synthetic_fits() -> dict:
    m, b0 = -0.3, 0.7
    theta = np.linspace(0.0, 40.0, 120)
    pts = [complex(math.exp(m * t + b0) * math.cos(t), math.exp(m * t + b0) * math.sin(t)) for t in theta]
    p = polar_from_points(pts)
    line = fit_log_linear(p)
    a_x, b_x, c_x, d_x = 0.2, -0.5, 1e-3, 0.15
    logr = a_x + b_x * theta + c_x * np.exp(d_x * theta)
    pts = [complex(math.exp(y) * math.cos(t), math.exp(y) * math.sin(t)) for y, t in zip(logr, theta)]
    ext = fit_extended(polar_from_points(pts))
    k = np.arange(30, dtype=float)
    idx = fit_index_linear(polar_from_points([math.exp(-0.15 * i + 0.4) * complex(math.cos(i), math.sin(i)) for i in k]))

    def close(x, y):
        return abs(x - y) <= 1e-10 * max(1.0, abs(y))

    return {
        "log_linear": close(line.m, m) and close(line.b, b0),
        "extended": ext.improved and all(close(u, v) for u, v in ((ext.a, a_x), (ext.b, b_x), (ext.c, c_x), (ext.d, d_x))),
        "index_linear": close(idx.m, -0.15) and close(idx.b, 0.4),
    }


def check_properties(digits: int = 50, seed: int = 20240601) -> CheckResult:
    """Fast property suites: oracles, synthetic fits, rotation, quadrant junctions, set image."""
    ctx = PrecisionContext(digits=digits)
    rng = random.Random(seed)
    tol = ctx.residual_tol
    fe_worst = mpf(0)
    conj_ok = True
    with ctx.workdps():
        for _ in range(100):
            s = mpc(rng.uniform(-10, 10), rng.uniform(-30, 30))
            fe_worst = max(fe_worst, functional_equation_check(s, ctx))
            conj_ok &= abs(zeta(s.conjugate(), ctx) - zeta(s, ctx).conjugate()) < tol
    fe_ok = fe_worst < tol
    fits = _synthetic_fits()

    bctx = PrecisionContext(digits=150)
    b = rho_branch(1, 50, 150)
    zero_ok = all(v == 0 for v in rotation_discrepancy(b, b.anchor[0], 0, bctx))
    slope = decay_slope(rotation_discrepancy(b, b.anchor[0], math.pi / 7, bctx))
    image_ok = set_image_check(b)

    quad = quadrant_plot(rational_example, 0, Box(mpc(0), 6.0), 120, disk_radius=10)
    # Zeros at 1, i and -1 show four rich colours; the pole at -i four pale ones.
    junctions = {
        label: (PALE_CLASSES if label == "-i" else RICH_CLASSES) <= quad.neighborhood(mpc(z))
        for label, z in (("1", 1), ("i", 1j), ("-1", -1), ("-i", -1j))
    }
    metrics = {
        "functional_equation_log10": round(float(mpmath.log10(fe_worst)), 2) if fe_worst > 0 else None,
        "functional_equation": bool(fe_ok),
        "conjugation": bool(conj_ok),
        **{f"fit_{k}": bool(v) for k, v in fits.items()},
        "rotation_zero": zero_ok,
        "rotation_decay_slope": round(slope, 6),
        "junctions": junctions,
        "set_image": image_ok,
        "branch_length": len(b),
    }
    ok = (
        fe_ok and conj_ok and all(fits.values()) and zero_ok and slope < 0
        and all(junctions.values()) and image_ok and len(b) == 50
    )
    failed = [k for k, v in metrics.items() if v is False]
    detail = "all properties hold" if not failed else "failed: " + ", ".join(failed)
    return CheckResult(7, "property suites", ok, metrics, detail, {"quadrant": quad})


CHECKS = {
    1: check_lambda1,
    2: check_fixed_point_table,
    3: check_extended_fit,
    4: check_angular_limit,
    5: check_trivial_geometry,
    6: check_deviation_scaling,
    7: check_properties,
}
