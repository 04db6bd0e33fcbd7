"""Localize-then-polish equation solving for zeta, its iterates and fixed points.

The workflow mirrors how one finds a cycle element by eye: classify the
values of g(s) = f(s) - target on a grid by quadrant, keep the cells whose
corners show all four "rich" quadrant colors (a zero of g; four pale colors
would be a pole), and hand the cell to a damped Newton iteration that ramps
the working precision up to the requested number of digits.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

import mpmath
from mpmath import mpc, mpf

from .errors import (
    DerivativeVanished,
    NoConvergence,
    NoJunctionFound,
    NoSignChange,
    ParseError,
    ZetaSpiralError,
)
from .mpcore import (
    FunctionSpec,
    PrecisionContext,
    as_big,
    format_complex,
    zeta,
    zeta_iter,
    zeta_pair,
)

log = logging.getLogger(__name__)

SCAN_DIGITS = 30
# A residual this far below tolerance needs no extra polishing step.
DEEP_CONVERGENCE = mpf(10) ** -10


class QuadrantClass(Enum):
    """Pixel classes of a quadrant plot; rich means inside the disk D."""

    AXIS = "black"
    I_RICH = "rich blue"
    I_PALE = "pale blue"
    II_RICH = "rich red"
    II_PALE = "pale red"
    III_RICH = "rich yellow"
    III_PALE = "pale yellow"
    IV_RICH = "rich green"
    IV_PALE = "pale green"
    ERROR = "error"

    @property
    def is_rich(self) -> bool:
        return self in RICH_CLASSES

    @property
    def is_pale(self) -> bool:
        return self in PALE_CLASSES


RICH_CLASSES = frozenset(
    {QuadrantClass.I_RICH, QuadrantClass.II_RICH, QuadrantClass.III_RICH, QuadrantClass.IV_RICH}
)
PALE_CLASSES = frozenset(
    {QuadrantClass.I_PALE, QuadrantClass.II_PALE, QuadrantClass.III_PALE, QuadrantClass.IV_PALE}
)
_BY_QUADRANT = {
    (1, True): QuadrantClass.I_RICH,
    (1, False): QuadrantClass.I_PALE,
    (2, True): QuadrantClass.II_RICH,
    (2, False): QuadrantClass.II_PALE,
    (3, True): QuadrantClass.III_RICH,
    (3, False): QuadrantClass.III_PALE,
    (4, True): QuadrantClass.IV_RICH,
    (4, False): QuadrantClass.IV_PALE,
}


def quadrant_class(v, disk_radius: float, axis_eps: float = 0.0) -> QuadrantClass:
    """Classify a value by quadrant and by whether it lies in the disk |v| <= r.

    Values within ``axis_eps`` of an axis are AXIS.  Non-finite values carry
    no magnitude information worth trusting; they are reported as the pale
    class of the quadrant given by the signs of their parts.
    """
    if disk_radius <= 0:
        raise ValueError("disk_radius must be positive")
    v = complex(v)
    re, im = v.real, v.imag
    finite = math.isfinite(re) and math.isfinite(im)
    if finite and (abs(re) <= axis_eps or abs(im) <= axis_eps):
        return QuadrantClass.AXIS
    right = math.copysign(1.0, re) > 0
    upper = math.copysign(1.0, im) > 0
    quadrant = {(True, True): 1, (False, True): 2, (False, False): 3, (True, False): 4}[
        (right, upper)
    ]
    if not finite:
        log.debug("non-finite value classified as pale quadrant %d", quadrant)
        return _BY_QUADRANT[(quadrant, False)]
    return _BY_QUADRANT[(quadrant, abs(v) <= disk_radius)]


@dataclass(frozen=True)
class Box:
    """Axis-aligned square region of the complex plane."""

    center: mpc
    side: float

    def __post_init__(self):
        if not self.side > 0:
            raise ValueError("box side must be positive")

    @classmethod
    def around(cls, center, side: float) -> "Box":
        with mpmath.workdps(max(mpmath.mp.dps, 40)):
            return cls(mpc(center) if not isinstance(center, str) else as_big(center), float(side))

    def contains(self, z, margin: float = 0.0) -> bool:
        half = self.side / 2 + margin
        d = complex(mpc(z) - self.center)
        return abs(d.real) <= half and abs(d.imag) <= half

    def grid_point(self, i: int, j: int, n: int) -> mpc:
        """Corner (i, j) of an n x n subdivision; i runs along Re, j along Im."""
        h = mpf(self.side) / n
        half = mpf(self.side) / 2
        return self.center + mpc(-half + i * h, -half + j * h)


@dataclass(frozen=True)
class Cycle:
    """An L-cycle (lambda_0, ..., lambda_{L-1}) with zeta(lambda_k) = lambda_{k+1 mod L}."""

    elements: tuple
    residual: mpf = mpf(0)
    primitive: bool = True

    @property
    def L(self) -> int:
        return len(self.elements)

    def __getitem__(self, k: int) -> mpc:
        return self.elements[k % self.L]

    @classmethod
    def fixed_point(cls, psi, ctx: PrecisionContext | None = None) -> "Cycle":
        psi = as_big(psi, ctx)
        residual = mpf(0)
        if ctx is not None:
            with ctx.workdps():
                residual = abs(zeta(psi, ctx) - psi)
        return cls((psi,), residual)


# ------------------------------------------------------------------ functions


class ComplexFunction:
    """Adapter so plain Python callables can be localized and polished.

    ``func(s)`` is evaluated under the caller's mpmath precision; the
    derivative falls back to a central difference when ``deriv`` is absent.
    """

    def __init__(self, func: Callable, deriv: Callable | None = None, name: str = "f"):
        self.func = func
        self.deriv = deriv
        self.name = name

    def __call__(self, s, ctx: PrecisionContext):
        with ctx.workdps():
            return mpc(self.func(mpc(s)))

    def value_and_derivative(self, s, ctx: PrecisionContext):
        with ctx.workdps():
            s = mpc(s)
            value = mpc(self.func(s))
            if self.deriv is not None:
                return value, mpc(self.deriv(s))
            return value, mpmath.diff(self.func, s)

    def describe(self) -> str:
        return self.name


def _evaluate(f, s, ctx):
    return f(s, ctx)


def _shifted_class(f, target, s, ctx, disk_radius):
    try:
        value = _evaluate(f, s, ctx)
    except ZetaSpiralError:
        return QuadrantClass.ERROR
    with ctx.workdps():
        g = value - target
    return quadrant_class(g, disk_radius)


def grid_localize(
    f,
    target,
    box: Box,
    grid_n: int,
    ctx: PrecisionContext,
    disk_radius: float = 10.0,
) -> list[Box]:
    """Cells of an n x n grid whose corners carry all four rich quadrant classes.

    Corners are evaluated at a fixed 30-digit scan precision.  Cells are
    returned nearest-to-center first.
    """
    if grid_n < 8:
        raise ValueError("grid_n must be >= 8")
    scan = ctx.with_digits(min(ctx.digits, SCAN_DIGITS))
    target = as_big(target, ctx)
    classes = {}
    with scan.workdps():
        for i in range(grid_n + 1):
            for j in range(grid_n + 1):
                s = box.grid_point(i, j, grid_n)
                classes[i, j] = _shifted_class(f, target, s, scan, disk_radius)
    # A root sitting off-center in a cell need not color all four corners
    # differently; 2 x 2 blocks of cells catch those junctions.
    cells = []
    seen = set()
    h = box.side / grid_n
    for width in (1, 2):
        for i in range(grid_n + 1 - width):
            for j in range(grid_n + 1 - width):
                corners = {
                    classes[i + a, j + b] for a in range(width + 1) for b in range(width + 1)
                }
                if not RICH_CLASSES <= corners:
                    continue
                if width == 2 and any((i + a, j + b) in seen for a in (0, 1) for b in (0, 1)):
                    continue
                seen.add((i, j))
                with scan.workdps():
                    center = box.grid_point(i, j, grid_n) + mpc(width * h / 2, width * h / 2)
                cells.append(Box(center, width * h))
    if not cells:
        raise NoJunctionFound(
            f"no four-color junction of {describe(f)} - target in box of side {box.side} "
            f"at {mpmath.nstr(box.center, 12)}"
        )
    cells.sort(key=lambda c: abs(complex(c.center - box.center)))
    return cells


def describe(f) -> str:
    return f.describe() if hasattr(f, "describe") else repr(f)


# --------------------------------------------------------------------- Newton


def _precision_ramp(digits: int) -> list[int]:
    stages = []
    d = SCAN_DIGITS
    while d < digits:
        stages.append(d)
        d *= 2
    stages.append(digits)
    return stages


def newton_polish(
    f,
    target,
    seed,
    ctx: PrecisionContext,
    max_iter: int = 200,
    max_halvings: int = 40,
) -> mpc:
    """Solve f(u) = target by damped Newton, starting from ``seed``.

    The iteration runs at 30 digits first and doubles the precision each time
    the residual drops under the current stage's tolerance, finishing at
    ``ctx.digits`` with one extra polishing step unless the residual is
    already far below tolerance.  A step is halved while it
    fails to reduce |f(u) - target|.
    """
    target = as_big(target, ctx)
    u = as_big(seed, ctx)
    iterations = 0
    residual = mpf("inf")
    stages = _precision_ramp(ctx.digits)
    for stage_digits in stages:
        sctx = ctx.with_digits(stage_digits)
        tol = sctx.residual_tol
        final = stage_digits == ctx.digits
        value, deriv = f.value_and_derivative(u, sctx)
        with sctx.workdps():
            g = value - target
            residual = abs(g)
        polished = False
        while True:
            if residual < tol:
                if not final or polished or residual < tol * DEEP_CONVERGENCE:
                    break
                polished = True
            if iterations >= max_iter:
                raise NoConvergence(iterations, residual)
            iterations += 1
            with sctx.workdps():
                if abs(deriv) < mpf(10) ** (-stage_digits):
                    raise DerivativeVanished(f"|g'| below 1e-{stage_digits} at {mpmath.nstr(u, 20)}")
                step = g / deriv
            lam = mpf(1)
            for _ in range(max_halvings + 1):
                with sctx.workdps():
                    trial = u - lam * step
                try:
                    t_value, t_deriv = f.value_and_derivative(trial, sctx)
                except ZetaSpiralError:
                    t_value = None
                if t_value is not None:
                    with sctx.workdps():
                        t_g = t_value - target
                        t_res = abs(t_g)
                    if t_res < residual or (polished and t_res <= residual):
                        break
                lam /= 2
            else:
                if polished and residual < tol:
                    break
                raise NoConvergence(iterations, residual)
            u, g, deriv, residual = trial, t_g, t_deriv, t_res
            if polished:
                break
    return u


# ---------------------------------------------------------------- fixed points


def _cycle_from(s, L: int, ctx: PrecisionContext) -> Cycle:
    elements = [s]
    for _ in range(L - 1):
        elements.append(zeta(elements[-1], ctx))
    residual = mpf(0)
    with ctx.workdps():
        for k in range(L):
            nxt = zeta(elements[k], ctx)
            residual = max(residual, abs(nxt - elements[(k + 1) % L]))
    primitive = True
    for d in range(1, L):
        if L % d == 0:
            back = zeta_iter(s, d, ctx)
            with ctx.workdps():
                if abs(back - s) < ctx.residual_tol:
                    primitive = False
                    log.info("cycle of length %d has period dividing %d", L, d)
                    break
    return Cycle(tuple(elements), residual, primitive)


def find_fixed_point(
    L: int,
    box: Box,
    ctx: PrecisionContext,
    grid_n: int = 16,
    disk_radius: float = 10.0,
) -> Cycle:
    """Locate and polish a solution of zeta^L(s) = s in ``box``; return its cycle."""
    if L < 1:
        raise ValueError("L must be >= 1")
    f = FunctionSpec.iterate_minus_identity(L)
    cells = grid_localize(f, 0, box, grid_n, ctx, disk_radius)
    last_error = None
    for cell in cells:
        try:
            s = newton_polish(f, 0, cell.center, ctx)
        except ZetaSpiralError as exc:
            last_error = exc
            continue
        if box.contains(s, margin=box.side / grid_n):
            return _cycle_from(s, L, ctx)
        log.debug("Newton from %s left the box", mpmath.nstr(cell.center, 10))
    if last_error is not None:
        raise last_error
    raise NoConvergence(0, mpf("inf"))


def fixed_point_from_seed(seed, L: int, ctx: PrecisionContext) -> Cycle:
    """Polish a known approximation of an L-cycle element and return the cycle."""
    f = FunctionSpec.iterate_minus_identity(L)
    s = newton_polish(f, 0, seed, ctx)
    return _cycle_from(s, L, ctx)


def find_trivial_fixed_point(n: int, ctx: PrecisionContext, samples: int = 400) -> mpc:
    """The real fixed point of zeta in (-2n-1, -2n+1), closest to -2n."""
    if 2 * n < 20:
        raise ValueError("only trivial zeros -2n <= -20 are covered")
    scan = ctx.with_digits(SCAN_DIGITS)
    lo_end, hi_end = -2 * n - 1, -2 * n + 1

    def h(x, c):
        with c.workdps():
            return zeta(mpc(x, 0), c).real - x

    brackets = []
    with scan.workdps():
        xs = [mpf(lo_end) + (mpf(hi_end - lo_end) * i) / samples for i in range(1, samples)]
        values = [h(x, scan) for x in xs]
    for (x0, v0), (x1, v1) in zip(zip(xs, values), zip(xs[1:], values[1:])):
        if v0 == 0:
            brackets.append((x0, x0))
        elif (v0 < 0) != (v1 < 0):
            brackets.append((x0, x1))
    if not brackets:
        raise NoSignChange(f"zeta(x) - x keeps its sign on ({lo_end}, {hi_end})")
    a, b = min(brackets, key=lambda ab: abs(ab[0] + ab[1] + 4 * n))
    with ctx.workdps():
        a, b = mpf(a), mpf(b)
        fa = h(a, ctx)
        x = (a + b) / 2
        tol = ctx.residual_tol
        for _ in range(400):
            value, deriv = zeta_pair(mpc(x, 0), ctx)
            g = value.real - x
            if abs(g) < tol / 10:
                break
            if (g < 0) == (fa < 0):
                a, fa = x, g
            else:
                b = x
            step = g / (deriv.real - 1)
            x_new = x - step
            if not (min(a, b) < x_new < max(a, b)):
                x_new = (a + b) / 2
            x = x_new
        else:
            raise NoConvergence(400, abs(g))
        return mpc(x, 0)


# ----------------------------------------------------------------------- zeros


def refine_zero(height, ctx: PrecisionContext) -> mpc:
    """Polish the nontrivial zero 1/2 + it whose ordinate is near ``height``.

    Newton runs in the plane, the result must land on the critical line
    within tolerance, and the real part is then pinned to exactly 1/2 and the
    ordinate polished by Newton steps along the line.
    """
    with ctx.workdps():
        t0 = mpf(height)
        seed = mpc(mpf(1) / 2, t0)
    rho = newton_polish(FunctionSpec.zeta(), 0, seed, ctx)
    with ctx.workdps():
        if abs(rho.real - mpf(1) / 2) > mpf(10) ** (-(ctx.digits // 2)):
            raise NoConvergence(0, abs(rho.real - mpf(1) / 2))
        if abs(rho.imag - t0) > 0.1:
            raise NoConvergence(0, abs(rho.imag - t0))
        t = rho.imag
        half = mpf(1) / 2
    with ctx.workdps():
        for _ in range(3):
            value, deriv = zeta_pair(mpc(half, t), ctx)
            if abs(value) < ctx.residual_tol / mpf(10) ** 5:
                break
            t = t - (value / (1j * deriv)).real
        rho = mpc(half, t)
        if abs(zeta(rho, ctx)) >= ctx.residual_tol:
            raise NoConvergence(3, abs(zeta(rho, ctx)))
    return rho


def read_zero_table(path) -> list[str]:
    """Ordinates from a text file with one decimal number per line.

    Blank lines and lines starting with '#' are skipped.
    """
    heights = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        text = raw.strip()
        if not text or text.startswith("#"):
            continue
        try:
            mpf(text)
        except (ValueError, TypeError):
            raise ParseError(lineno, text) from None
        heights.append(text)
    return heights


def write_zero_table(
    path, zeros: Sequence, prec: int, residuals: Sequence | None = None, comment: str | None = None
) -> None:
    """One zero per line as "re im", followed by its residual when given."""
    lines = [f"# {comment}"] if comment else []
    for k, z in enumerate(zeros):
        line = format_complex(z, prec)
        if residuals is not None:
            line += f" {mpmath.nstr(residuals[k], 5)}"
        lines.append(line)
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


# ------------------------------------------------------ fixed points near zeros

FIRST_ZERO_ORDINATE = 14.134725141734693


def _psi_curve_sigma(t: float) -> float:
    """Abscissa where |zeta(s)| is about |s| in the left half plane.

    From the functional equation |zeta(sigma + it)| ~ (t / 2 pi)^(1/2 - sigma)
    for sigma well left of the critical strip, so |zeta(s)| = |s| ~ t near
    sigma = 1/2 - log t / log(t / 2 pi).
    """
    return 0.5 - math.log(t) / math.log(t / (2 * math.pi))


class _PsiScanner:
    """Incremental scan for the fixed points psi_{rho_n}, shared across calls.

    Walks up the curve sigma(t) from the first zero ordinate watching the
    phase of zeta(s)/s; every genuine (non-wrapping) sign change of the phase
    marks a nearby fixed point, which is polished at scan precision.  The
    n-th distinct fixed point found is psi_{rho_n}.
    """

    def __init__(self, step: float = 0.1):
        self.step = step
        self.t = FIRST_ZERO_ORDINATE
        self.points: list[mpc] = []
        self._last_phase = None

    def _phase(self, t: float, ctx) -> float:
        s = mpc(_psi_curve_sigma(t), t)
        return float(mpmath.arg(zeta(s, ctx) / s))

    def extend(self, count: int) -> list[mpc]:
        ctx = PrecisionContext(digits=SCAN_DIGITS)
        f = FunctionSpec.iterate_minus_identity(1)
        with ctx.workdps():
            if self._last_phase is None:
                self._last_phase = self._phase(self.t, ctx)
            while len(self.points) < count:
                t_next = self.t + self.step
                phase = self._phase(t_next, ctx)
                prev = self._last_phase
                if (prev < 0) != (phase < 0) and abs(phase - prev) < math.pi:
                    psi = newton_polish(f, 0, mpc(_psi_curve_sigma(self.t), self.t), ctx)
                    if any(abs(psi - q) < 1e-8 for q in self.points[-3:]):
                        log.warning("phase crossing near t=%.2f re-found a known fixed point", self.t)
                    else:
                        self.points.append(psi)
                self.t, self._last_phase = t_next, phase
        return self.points[:count]


_psi_scanner = _PsiScanner()


def find_psi_rho(n: int, ctx: PrecisionContext) -> mpc:
    """The repelling fixed point psi_{rho_n} associated with the n-th zero."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rough = _psi_scanner.extend(n)[n - 1]
    return newton_polish(FunctionSpec.iterate_minus_identity(1), 0, rough, ctx)
