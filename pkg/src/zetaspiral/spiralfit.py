"""Polar unwrapping of branches, logarithmic-spiral models and deviation statistics.

Angles and log-radii are computed at the branch's full precision and then
downcast: log-domain values are O(100) in size, so double-precision
regression is accurate far below any deviation of interest.  Quantities
whose magnitude underflows a double (absolute deviations, angular second
differences deep inside a spiral) are kept as mpmath numbers.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import mpmath
import numpy as np
from mpmath import mpc, mpf

from .errors import DegenerateAbscissa, VerticalLine, ZeroRadius
from .mpcore import PrecisionContext, as_big, zeta, zeta_deriv
from .orbit import Branch

TWO_PI = 2 * math.pi
GOLDEN = (math.sqrt(5) - 1) / 2


@dataclass(frozen=True)
class PolarSeries:
    """Unwrapped polar coordinates of branch elements about an anchor.

    ``theta`` is strictly increasing; ``r`` keeps the exact radii.
    """

    theta: np.ndarray
    logr: np.ndarray
    c_offset: int
    r: tuple = ()
    increments: tuple = ()

    def __len__(self) -> int:
        return len(self.theta)

    def head(self, n: int) -> "PolarSeries":
        return PolarSeries(
            self.theta[:n], self.logr[:n], self.c_offset, self.r[:n], self.increments[: max(n - 1, 0)]
        )


@dataclass(frozen=True)
class SpiralFit:
    """log r = m * theta + b."""

    m: float
    b: float
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    def predict(self, theta):
        return self.m * np.asarray(theta) + self.b


@dataclass(frozen=True)
class ExtendedFit:
    """log r = a + b * theta + c * exp(d * theta)."""

    a: float
    b: float
    c: float
    d: float
    rss: float = 0.0
    linear_rss: float = 0.0
    improved: bool = True

    def predict(self, theta):
        theta = np.asarray(theta, dtype=float)
        with np.errstate(over="ignore", under="ignore"):
            return self.a + self.b * theta + self.c * np.exp(self.d * theta)


@dataclass(frozen=True)
class IndexFit:
    """log r_k = m * k + b with (m, b) the means of consecutive chords."""

    m: float
    b: float


@dataclass(frozen=True)
class DeviationReport:
    d_abs: tuple
    d_rel: np.ndarray
    mean: float
    max: float
    mean_scaled: float
    max_scaled: float
    n_index: int
    mean_abs: mpf = mpf(0)


class ParityClass(Enum):
    ZERO_MOD_4 = 0
    TWO_MOD_4 = 2


def default_c_offset(anchor) -> int:
    """0 for anchors off the real axis, 1 for real anchors (trivial-zero fixed points)."""
    return 1 if mpc(anchor).imag == 0 else 0


def _anchor_of(b: Branch, anchor):
    if anchor is not None:
        return as_big(anchor)
    if b.L != 1:
        raise ValueError("pass the anchor explicitly for a cycle-indexed branch")
    return b.anchor[0]


def _lift(angle: float, base: float) -> float:
    """Least value congruent to ``angle`` mod 2 pi that exceeds ``base``."""
    value = angle + TWO_PI * math.ceil((base - angle) / TWO_PI)
    if value <= base:
        value += TWO_PI
    return value


def unwrap(b: Branch, c_offset: int | None = None, anchor=None) -> PolarSeries:
    """Polar coordinates of the branch about its anchor with a winding angle.

    theta_0 is the principal argument of a_0 - anchor and each later
    theta_k is the least angle congruent to arg(a_k - anchor) exceeding
    c_offset + theta_{k-1}.  The increments theta_{k+1} - theta_k are also
    computed at full precision from the ratios of consecutive offsets.
    """
    center = _anchor_of(b, anchor)
    if c_offset is None:
        c_offset = default_c_offset(center)
    if c_offset not in (0, 1):
        raise ValueError("c_offset must be 0 or 1")
    with mpmath.workdps(b.digits + 10):
        tol = mpf(10) ** -(b.digits - 10)
        offsets = [a - center for a in b.elements]
        radii = []
        for k, w in enumerate(offsets):
            r = abs(w)
            if r < tol:
                raise ZeroRadius(f"element {k} coincides with the anchor")
            radii.append(r)
        logr = np.array([float(mpmath.log(r)) for r in radii])
        incs = []
        for w0, w1 in zip(offsets, offsets[1:]):
            step = mpmath.arg(w1 / w0)
            lo = mpf(c_offset)
            while step <= lo:
                step += 2 * mpmath.pi
            while step > lo + 2 * mpmath.pi:
                step -= 2 * mpmath.pi
            incs.append(step)
        thetas = [float(mpmath.arg(offsets[0]))]
        for k in range(1, len(offsets)):
            angle = float(mpmath.arg(offsets[k]))
            thetas.append(_lift(angle, c_offset + thetas[-1]))
    return PolarSeries(np.array(thetas), logr, c_offset, tuple(radii), tuple(incs))


def polar_from_points(points: Sequence[complex], center=0, c_offset: int = 0) -> PolarSeries:
    """PolarSeries of plain points, for synthetic data and quick experiments."""
    b = Branch(
        mpc(points[0]),
        _fixed_cycle(center),
        tuple(mpc(p) for p in points),
        tuple(mpf(0) for _ in points[1:]),
        len(points),
        30,
    )
    return unwrap(b, c_offset)


def _fixed_cycle(center):
    from .rootfind import Cycle

    return Cycle((mpc(center),))


# ------------------------------------------------------------------- fitting


def _check_abscissa(x: np.ndarray) -> None:
    if len(x) < 2 or np.ptp(x) <= 1e-12 * max(1.0, float(np.max(np.abs(x)))):
        raise DegenerateAbscissa("abscissae are (nearly) all equal")


def _ols_line(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    _check_abscissa(x)
    xm, ym = x.mean(), y.mean()
    dx = x - xm
    m = float(np.dot(dx, y - ym) / np.dot(dx, dx))
    return m, float(ym - m * xm)


def fit_log_linear(p: PolarSeries) -> SpiralFit:
    """Ordinary least squares of log r on theta."""
    if len(p) < 2:
        raise DegenerateAbscissa("need at least two points")
    m, b = _ols_line(p.theta, p.logr)
    return SpiralFit(m, b, p.logr - (m * p.theta + b))


def _extended_solve(theta: np.ndarray, y: np.ndarray, d: float):
    """Best (a, b, c) and RSS for fixed d, with the exponential column rescaled."""
    tmax = float(theta.max())
    with np.errstate(under="ignore"):
        col = np.exp(d * (theta - tmax))
    shift = theta.mean()
    A = np.column_stack([np.ones_like(theta), theta - shift, col])
    norms = np.linalg.norm(A, axis=0)
    norms[norms == 0] = 1.0
    coef, *_ = np.linalg.lstsq(A / norms, y, rcond=None)
    coef = coef / norms
    resid = y - A @ coef
    a0, b0, c_scaled = (float(v) for v in coef)
    a = a0 - b0 * shift
    # c * exp(d theta) == c_scaled * exp(d (theta - tmax)); take logs to avoid overflow.
    if c_scaled == 0.0:
        c = 0.0
    else:
        log_c = math.log(abs(c_scaled)) - d * tmax
        c = math.copysign(math.exp(log_c), c_scaled) if log_c > -745 else math.copysign(0.0, c_scaled)
    return a, b0, c, float(np.dot(resid, resid))


def _golden_min(func, lo: float, hi: float, tol: float) -> float:
    x1 = hi - GOLDEN * (hi - lo)
    x2 = lo + GOLDEN * (hi - lo)
    f1, f2 = func(x1), func(x2)
    while hi - lo > tol:
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - GOLDEN * (hi - lo)
            f1 = func(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + GOLDEN * (hi - lo)
            f2 = func(x2)
    return (lo + hi) / 2


def fit_extended(
    p: PolarSeries,
    d_range: tuple[float, float] = (0.0, 2.0),
    grid: int = 200,
    tol: float = 1e-10,
) -> ExtendedFit:
    """Least squares for log r = a + b theta + c exp(d theta).

    For fixed d the model is linear in (a, b, c).  The outer search over d
    scans a uniform grid on ``d_range`` for the smallest log-RSS and refines
    by golden-section search between the neighbours of the best grid point.
    When no interior minimum exists, or the exponential term does not lower
    the RSS below the straight-line fit, the line is returned with c = d = 0
    and ``improved`` False.
    """
    if len(p) < 8:
        raise DegenerateAbscissa("need at least eight points")
    theta, y = np.asarray(p.theta, float), np.asarray(p.logr, float)
    line = fit_log_linear(p)
    linear_rss = float(np.dot(line.residuals, line.residuals))
    floor = np.finfo(float).tiny

    def objective(d):
        return math.log(max(_extended_solve(theta, y, d)[3], floor))

    lo, hi = d_range
    ds = np.linspace(lo, hi, grid + 1)[1:]  # d = 0 duplicates the intercept column
    values = [objective(d) for d in ds]
    i = int(np.argmin(values))
    no_fit = ExtendedFit(line.b, line.m, 0.0, 0.0, linear_rss, linear_rss, improved=False)
    if i == 0 or i == len(ds) - 1:
        # The infimum sits on the window edge; as d -> 0 the term degenerates
        # into a quadratic, which is not a member of the model family.
        return no_fit
    d = _golden_min(objective, float(ds[i - 1]), float(ds[i + 1]), tol)
    if objective(ds[i]) < objective(d):
        d = float(ds[i])
    a, b, c, rss = _extended_solve(theta, y, d)
    if not rss < linear_rss:
        return no_fit
    return ExtendedFit(a, b, c, d, rss, linear_rss, improved=True)


def _logr_of(source, anchor=None) -> np.ndarray:
    if isinstance(source, PolarSeries):
        return np.asarray(source.logr, float)
    return unwrap(source, anchor=anchor).logr


def fit_index_linear(source, beta: int | None = None, anchor=None) -> IndexFit:
    """Mean slope and mean intercept of the chords joining (k-1, log r_{k-1}) and (k, log r_k)."""
    y = _logr_of(source, anchor)
    if beta is not None:
        y = y[: beta + 1]
    if len(y) < 3:
        raise DegenerateAbscissa("need at least three points")
    k = np.arange(len(y), dtype=float)
    slopes = np.diff(y)
    intercepts = y[1:] - slopes * k[1:]
    return IndexFit(float(slopes.mean()), float(intercepts.mean()))


def pairwise_params(p: PolarSeries) -> list[tuple[float, float]]:
    """(a_k, b_k) of the line log r = a + b theta through points 0 and k, k >= 1."""
    if len(p) < 2:
        raise DegenerateAbscissa("need at least two points")
    t0, y0 = float(p.theta[0]), float(p.logr[0])
    out = []
    for t, y in zip(p.theta[1:], p.logr[1:]):
        if t == t0:
            raise DegenerateAbscissa("equal angles in a pair")
        slope = (float(y) - y0) / (float(t) - t0)
        out.append((y0 - slope * t0, slope))
    return out


# ---------------------------------------------------------------- deviations


def _scale(n: int) -> float:
    if n < 1:
        raise ValueError("n_index must be >= 1")
    if n == 1:
        return math.inf
    return math.sqrt(n / math.log(n))


def deviations(
    b: Branch,
    fit: SpiralFit,
    p: PolarSeries,
    n_index: int,
    skip_zero: bool = True,
    beta: int | None = None,
) -> DeviationReport:
    """Distances of branch elements from their positions on the fitted spiral.

    Since theta_k is congruent to arg(a_k - anchor), the fitted point
    exp(m theta_k + b) e^{i theta_k} lies on the same ray, so
    d_rel = |1 - exp(m theta_k + b - log r_k)| and d_abs = r_k d_rel.
    mean/max run over 1 <= k <= beta (k = 0 included unless ``skip_zero``).
    """
    n = len(p) if beta is None else min(len(p), beta + 1)
    gap = fit.m * p.theta[:n] + fit.b - p.logr[:n]
    d_rel = np.abs(np.expm1(gap))
    d_abs = tuple(mpmath.fmul(p.r[k], float(d_rel[k]), exact=True) for k in range(n))
    start = 1 if skip_zero else 0
    window = d_rel[start:]
    if len(window) == 0:
        raise ValueError("no elements left to summarize")
    mean, mx = float(window.mean()), float(window.max())
    scale = _scale(n_index)
    with mpmath.workdps(20):
        mean_abs = mpmath.fsum(d_abs[start:]) / len(window)
    return DeviationReport(d_abs, d_rel, mean, mx, mean * scale, mx * scale, n_index, mean_abs)


def delta_series(b: Branch, anchor=None, c_offset: int | None = None):
    """Angular increments delta_k = theta_{k+1} - theta_k and their differences.

    Both come from the full-precision increments of the unwrapping, so the
    second differences keep their accuracy deep inside the spiral; they are
    returned as mpmath numbers.
    """
    if len(b) < 3:
        raise ValueError("need at least three elements")
    p = unwrap(b, c_offset, anchor)
    deltas = list(p.increments)
    with mpmath.workdps(b.digits + 10):
        second = [deltas[k + 1] - deltas[k] for k in range(len(deltas) - 1)]
    return np.array([float(x) for x in deltas]), second


def _log_abs(values) -> np.ndarray:
    out = []
    for v in values:
        v = abs(v)
        out.append(float(mpmath.log(v)) if v > 0 else -math.inf)
    return np.array(out)


def near_uniform_check(second_diffs, slack: float = 1.5) -> tuple[float, float, bool]:
    """Fit |d_k| ~ A e^{-B k} by least squares on the logs and test the envelope.

    ok requires B > 0 and every |d_k| <= (1 + slack) A e^{-B k}.  Exact
    zeros are left out of the fit (and trivially satisfy the envelope).
    """
    if len(second_diffs) < 8:
        raise ValueError("need at least eight entries")
    logs = _log_abs(second_diffs)
    k = np.arange(len(logs), dtype=float)
    keep = np.isfinite(logs)
    if keep.sum() < 2:
        return 0.0, 0.0, False
    slope, intercept = _ols_line(k[keep], logs[keep])
    B = -slope
    A = math.exp(intercept) if intercept < 709 else math.inf
    envelope = intercept + slope * k + math.log1p(slack)
    ok = bool(B > 0 and np.all(logs[keep] <= envelope[keep]))
    return A, B, ok


def _line_through(rho, psi):
    with mpmath.workdps(max(mpmath.mp.dps, 30)):
        dre = psi.real - rho.real
        if abs(dre) < mpf(10) ** -(mpmath.mp.dps - 5):
            raise VerticalLine("rho and psi have the same real part")
        M = (psi.imag - rho.imag) / dre
        return M, rho.imag - M * rho.real


def line_deviation(b: Branch, rho, psi, beta: int):
    """Relative vertical distances |(Im a_k - (M Re a_k + B)) / Im a_k| for 1 <= k <= beta.

    The line passes through rho and psi.  Elements on the real axis get NaN
    and are left out of the mean and max.
    """
    with mpmath.workdps(b.digits + 10):
        M, B = _line_through(as_big(rho), as_big(psi))
        out = []
        for a in b.elements[1 : beta + 1]:
            if a.imag == 0:
                out.append(math.nan)
            else:
                out.append(float(abs((a.imag - (M * a.real + B)) / a.imag)))
    values = np.array(out)
    finite = values[np.isfinite(values)]
    mean = float(finite.mean()) if len(finite) else math.nan
    mx = float(finite.max()) if len(finite) else math.nan
    return values, mean, mx


def model_deviation(source, fit: IndexFit, beta: int, anchor=None):
    """|(log r_k - (m k + b)) / log r_k| for 1 <= k <= beta; NaN where log r_k = 0."""
    y = _logr_of(source, anchor)[: beta + 1]
    out = []
    for k in range(1, len(y)):
        if y[k] == 0:
            out.append(math.nan)
        else:
            out.append(abs((y[k] - (fit.m * k + fit.b)) / y[k]))
    values = np.array(out)
    finite = values[np.isfinite(values)]
    mean = float(finite.mean()) if len(finite) else math.nan
    mx = float(finite.max()) if len(finite) else math.nan
    return values, mean, mx


@dataclass(frozen=True)
class Conjecture4Stats:
    D_rel: np.ndarray
    D_abs: np.ndarray
    abs_mean: np.ndarray
    rel_flags: np.ndarray
    abs_flags: np.ndarray


def conjecture4_stats(d0_rel, d0_abs, e1: float = 0.8, e2: float = 0.85) -> Conjecture4Stats:
    """Running log-means of the root deviations and the bound tests per N.

    D_rel(N) = log(mean_{n <= N} d_rel(n)), likewise D_abs.  The relative
    flag tests that D_rel(N) lies between -(log N)^e1 and -(log N)^e2 (in
    whichever order they fall); the absolute flag tests 1/N < mean < 1/sqrt(N).
    """
    if len(d0_rel) == 0 or len(d0_abs) == 0:
        raise ValueError("inputs must be nonempty")
    rel = np.asarray([float(x) for x in d0_rel])
    with mpmath.workdps(30):
        abs_vals = [mpf(x) for x in d0_abs]
        running = []
        total = mpf(0)
        for i, v in enumerate(abs_vals, start=1):
            total += v
            running.append(total / i)
        D_abs = np.array([float(mpmath.log(m)) if m > 0 else -math.inf for m in running])
        abs_mean = np.array([float(m) for m in running])
    N = np.arange(1, len(rel) + 1, dtype=float)
    with np.errstate(divide="ignore"):
        D_rel = np.log(np.cumsum(rel) / N)
    logN = np.log(N)
    c1, c2 = -(logN**e1), -(logN**e2)
    lo, hi = np.minimum(c1, c2), np.maximum(c1, c2)
    rel_flags = (lo < D_rel) & (D_rel < hi)
    abs_flags = (1 / N < abs_mean) & (abs_mean < np.sqrt(1 / N))
    return Conjecture4Stats(D_rel, D_abs, abs_mean, rel_flags, abs_flags)


# ------------------------------------------------------- rotation and lines


def rotation_discrepancy(b: Branch, psi, theta, ctx: PrecisionContext | None = None) -> list:
    """R(zeta(a_k)) - zeta(R(a_k)) with R(z) = e^{i theta}(z - psi) + psi, at full precision."""
    ctx = ctx or b.ctx
    psi = as_big(psi, ctx)
    if theta == 0:
        return [mpc(0) for _ in b.elements]
    out = []
    with ctx.workdps():
        rot = mpmath.expj(mpf(theta))

        def R(z):
            return rot * (z - psi) + psi

        for a in b.elements:
            out.append(R(zeta(a, ctx)) - zeta(R(a), ctx))
    return out


def decay_slope(values) -> float:
    """OLS slope of log|v_k| against k, skipping exact zeros."""
    logs = _log_abs(values)
    k = np.arange(len(logs), dtype=float)
    keep = np.isfinite(logs)
    if keep.sum() < 2:
        return 0.0
    return _ols_line(k[keep], logs[keep])[0]


def nearly_straight_check(b: Branch, rho, psi) -> tuple[bool, float]:
    """Test that the branch runs along a nearly straight segment toward psi.

    The deviations are the relative vertical distances from the line
    through rho and psi; the curve counts as very nearly straight when
    their logs decrease (negative slope) and the last is below the first.
    """
    if len(b) < 8:
        raise ValueError("need at least eight elements")
    values, _, _ = line_deviation(b, rho, psi, len(b) - 1)
    finite = values[np.isfinite(values)]
    if len(finite) == 0 or np.all(finite == 0):
        return True, 0.0
    slope = decay_slope(finite)
    ok = bool(slope < 0 and finite[-1] < finite[0])
    return ok, slope


def arg_deriv_parity(n: int, ctx: PrecisionContext):
    """arg zeta'(psi_{-2n}) (0 or pi, as zeta' is real there) and 2n mod 4."""
    from .rootfind import find_trivial_fixed_point

    psi = find_trivial_fixed_point(n, ctx)
    with ctx.workdps():
        d = zeta_deriv(psi, ctx)
        arg = 0.0 if d.real > 0 else math.pi
    return arg, ParityClass((2 * n) % 4)


# ------------------------------------------------------------------ output


def write_csv(path, columns: dict, comment: str | None = None) -> None:
    """Write equal-length columns with a header row of column names.

    A ``comment`` goes first, on a line starting with '#'.
    """
    names = list(columns)
    lengths = {len(v) for v in columns.values()}
    if len(lengths) > 1:
        from .errors import DimensionMismatch

        raise DimensionMismatch(f"column lengths differ: {sorted(lengths)}")
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*(columns[n] for n in names)):
            w.writerow([_cell(v) for v in row])


def _cell(v) -> str:
    if isinstance(v, (mpf, mpc)):
        return mpmath.nstr(v, 17)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, np.floating):
        return repr(float(v))
    return str(v)
