"""Arbitrary-precision evaluation of zeta, its derivative and its iterates.

Every complex quantity in the package is an :class:`mpmath.mpc`.  All
arithmetic happens inside ``mpmath.workdps`` blocks sized from a
:class:`PrecisionContext`, so callers never have to touch ``mp.dps``.

Zeta is evaluated by Euler--Maclaurin summation.  The number of direct terms
``N`` and the Bernoulli depth ``M`` are planned in double precision from the
asymptotic size of the Bernoulli tail, and the working precision is raised by
the magnitude of the largest summand so that the cancellation which happens
for ``Re(s) < 0`` does not eat into the requested digits.
"""
from __future__ import annotations

import functools
import math
import threading
from dataclasses import dataclass, replace
from enum import Enum

import mpmath
from mpmath import mpc, mpf
from mpmath.libmp import dps_to_prec, repr_dps, to_str

from .errors import (
    GammaPole,
    OverflowEscape,
    PoleAtOne,
    PoleEncountered,
    PrecisionExhausted,
)

BigComplex = mpc

LN10 = math.log(10.0)
TWO_PI = 2.0 * math.pi
GUARD_SLACK = 10
DEFAULT_ESCAPE_BOUND = 1e6


@dataclass(frozen=True)
class PrecisionContext:
    """Working precision and the tolerances derived from it.

    ``digits`` is the number of decimal digits the caller wants to be
    correct; ``guard`` extra digits are carried internally.  A quantity is
    "numerically zero" when it is below :attr:`residual_tol`.
    """

    digits: int = 50
    guard: int = 10
    escape_bound: float = DEFAULT_ESCAPE_BOUND

    def __post_init__(self):
        if self.digits < 30:
            raise ValueError(f"digits must be >= 30, got {self.digits}")
        if self.guard < 10:
            raise ValueError(f"guard must be >= 10, got {self.guard}")
        if self.escape_bound <= 0:
            raise ValueError("escape_bound must be positive")

    @property
    def work_dps(self) -> int:
        return self.digits + self.guard

    @property
    def work_prec(self) -> int:
        return dps_to_prec(self.work_dps)

    @property
    def residual_tol(self) -> mpf:
        return mpf(10) ** (-(self.digits - GUARD_SLACK))

    def with_digits(self, digits: int) -> "PrecisionContext":
        return replace(self, digits=digits)

    def workdps(self, extra: int = 0):
        return mpmath.workdps(self.work_dps + extra)


def as_big(z, ctx: PrecisionContext | None = None) -> mpc:
    """Convert numbers or decimal strings to an mpc at the context precision."""
    dps = ctx.work_dps if ctx is not None else mpmath.mp.dps
    with mpmath.workdps(dps):
        if isinstance(z, str):
            return parse_complex(z, dps_to_prec(dps))
        if isinstance(z, mpc):
            return z
        return mpc(z)


# ---------------------------------------------------------------- serialization


def format_real(x: mpf, prec: int) -> str:
    if not isinstance(x, mpf):
        with mpmath.workprec(prec):
            x = mpf(x)
    return to_str(x._mpf_, repr_dps(prec))


def format_complex(z, prec: int) -> str:
    """Serialize as ``"re im"`` with enough digits to round-trip at ``prec`` bits."""
    if not isinstance(z, mpc):
        with mpmath.workprec(prec):
            z = mpc(z)
    return f"{format_real(z.real, prec)} {format_real(z.imag, prec)}"


def parse_complex(text: str, prec: int) -> mpc:
    parts = text.split()
    if len(parts) != 2:
        raise ValueError(f"expected 're im', got {text!r}")
    with mpmath.workprec(prec):
        return mpc(mpf(parts[0]), mpf(parts[1]))


# ------------------------------------------------------------------- caches

_cache_lock = threading.Lock()
_bernoulli_cache: dict[int, list] = {}
_prime_log_cache: dict[int, dict] = {}
_spf: list[int] = [0, 1]


def _bernoulli_coeffs(prec: int, count: int) -> list:
    """B_{2k}/(2k)! for k = 1..count at ``prec`` bits (index 0 unused)."""
    with _cache_lock:
        coeffs = _bernoulli_cache.setdefault(prec, [None])
        if len(coeffs) <= count:
            with mpmath.workprec(prec):
                for k in range(len(coeffs), count + 1):
                    coeffs.append(mpmath.bernoulli(2 * k) / mpmath.factorial(2 * k))
        return coeffs


def _smallest_prime_factors(n: int) -> list[int]:
    global _spf
    with _cache_lock:
        if len(_spf) <= n:
            size = max(n + 1, 2 * len(_spf))
            spf = list(range(size))
            for p in range(2, int(size**0.5) + 1):
                if spf[p] == p:
                    for q in range(p * p, size, p):
                        if spf[q] == q:
                            spf[q] = p
            _spf = spf
        return _spf


def _log_prime(p: int, prec: int) -> mpf:
    with _cache_lock:
        table = _prime_log_cache.setdefault(prec, {})
        value = table.get(p)
    if value is None:
        with mpmath.workprec(prec):
            value = mpmath.log(p)
        with _cache_lock:
            table[p] = value
    return value


# ------------------------------------------------------------ Euler-Maclaurin


def _em_tail_depth(sigma: float, t: float, n: int, target: float):
    """Bernoulli depth reaching ``target`` (log scale) with N = n, or None.

    Also returns the log of the largest summand, which sets how many digits
    are lost to cancellation.
    """
    log_n = math.log(n)
    log_prod = 0.0
    prev = math.inf
    peak = (1.0 - sigma) * log_n
    for k in range(1, 20000):
        for j in range(max(0, 2 * k - 3), 2 * k - 1):
            # a vanishing factor ends the value series but not the derivative's
            log_prod += math.log(math.hypot(sigma + j, t) or 1.0)
        zeta2k = 1.0 + 2.0 ** (-2 * k) if k < 60 else 1.0
        log_term = (
            math.log(2.0 * zeta2k)
            - 2 * k * math.log(TWO_PI)
            + log_prod
            - (sigma + 2 * k - 1) * log_n
        )
        peak = max(peak, log_term)
        if log_term < target:
            return k, peak
        if log_term > prev and k > 2:
            return None, peak
        prev = log_term
    return None, peak


def _em_cost(n: int, m: int) -> float:
    # one exponential per prime costs roughly twenty multiplications
    return 20.0 * n / math.log(n + 1) + n + 4.0 * m


@functools.lru_cache(maxsize=4096)
def _em_plan_cached(sigma: float, t: float, dps: int):
    target = -dps * LN10
    n = max(2, int(t / TWO_PI) + 2)
    for _ in range(400):
        m, peak = _em_tail_depth(sigma, t, n, target)
        if m is not None:
            break
        n = int(n * 1.15) + 1
    else:
        raise PrecisionExhausted(f"no Euler-Maclaurin plan for s={sigma}+{t}i at {dps} digits")
    best = (_em_cost(n, m), n, m, peak)
    for factor in (1.25, 1.5, 2.0, 3.0):
        cand = int(n * factor)
        m2, peak2 = _em_tail_depth(sigma, t, cand, target)
        if m2 is not None and _em_cost(cand, m2) < best[0]:
            best = (_em_cost(cand, m2), cand, m2, peak2)
    _, n, m, peak = best
    extra = max(0, math.ceil(peak / LN10)) + 3
    return n, m, extra


def _em_plan(sigma: float, t: float, dps: int):
    """Choose (N, M, extra_digits) so the Bernoulli tail drops below 10^-dps.

    Uses |B_2k|/(2k)! = 2 zeta(2k) / (2 pi)^(2k) and the rising factorial
    |s (s+1) ... (s+2k-2)| in floating point.  Plans are memoized on a grid,
    rounding sigma down and |t| up; both directions only make the plan safer.
    """
    return _em_plan_cached(math.floor(sigma * 8) / 8, math.ceil(abs(t) * 8) / 8, dps)


def _powers(x, n_max: int, prec: int, with_logs: bool):
    """n^-x for n = 1..n_max via exponentials at primes and products elsewhere."""
    spf = _smallest_prime_factors(n_max)
    pw = [None] * (n_max + 1)
    logs = [None] * (n_max + 1) if with_logs else None
    pw[1] = mpf(1)
    if with_logs:
        logs[1] = mpf(0)
    for m in range(2, n_max + 1):
        p = spf[m]
        if p == m:
            lp = _log_prime(p, prec)
            pw[m] = mpmath.exp(-x * lp)
            if with_logs:
                logs[m] = lp
        else:
            q = m // p
            pw[m] = pw[p] * pw[q]
            if with_logs:
                logs[m] = logs[p] + logs[q]
    return pw, logs


def _zeta_em(s: mpc, dps: int, with_deriv: bool):
    n, m, extra = _em_plan(float(s.real), float(s.imag), dps)
    prec = dps_to_prec(dps + extra)
    coeffs = _bernoulli_coeffs(prec, m)
    with mpmath.workprec(prec):
        x = +s.real if s.imag == 0 else +s
        pw, logs = _powers(x, n, prec, with_deriv)
        log_n = _log_n(n, logs, prec)
        w_n = pw[n]
        inv_sm1 = 1 / (x - 1)
        head = n * w_n * inv_sm1
        total = mpmath.fsum(pw[1:n]) + head + w_n / 2
        inv_n2 = 1 / mpf(n * n)
        # u_k = s (s+1) ... (s+2k-2) N^(-s-2k+1), du_k its s-derivative
        u = x * w_n / n
        if with_deriv:
            dtotal = -mpmath.fsum(logs[k] * pw[k] for k in range(2, n))
            dtotal += head * (-log_n - inv_sm1) - log_n * w_n / 2
            du = (w_n / n) * (1 - x * log_n)
            for k in range(1, m + 1):
                c = coeffs[k]
                total += c * u
                dtotal += c * du
                q = (x + (2 * k - 1)) * (x + 2 * k)
                dq = 2 * x + (4 * k - 1)
                du = (du * q + u * dq) * inv_n2
                u = u * q * inv_n2
            return mpc(total), mpc(dtotal)
        for k in range(1, m + 1):
            total += coeffs[k] * u
            u = u * ((x + (2 * k - 1)) * (x + 2 * k)) * inv_n2
        return mpc(total), None


def _log_n(n, logs, prec):
    if logs is not None:
        return logs[n]
    with mpmath.workprec(prec):
        return mpmath.log(n)


def _check_pole(s: mpc, ctx: PrecisionContext):
    with ctx.workdps():
        if abs(s - 1) < ctx.residual_tol:
            raise PoleAtOne(f"zeta has a pole at 1; got s={mpmath.nstr(s, 15)}")


def zeta(s, ctx: PrecisionContext) -> mpc:
    """Riemann zeta at ``s`` with relative error below 10^-ctx.digits."""
    s = as_big(s, ctx)
    _check_pole(s, ctx)
    value, _ = _zeta_em(s, ctx.work_dps, with_deriv=False)
    return value


def zeta_pair(s, ctx: PrecisionContext) -> tuple[mpc, mpc]:
    """(zeta(s), zeta'(s)) from one Euler-Maclaurin pass."""
    s = as_big(s, ctx)
    _check_pole(s, ctx)
    return _zeta_em(s, ctx.work_dps, with_deriv=True)


def zeta_deriv(s, ctx: PrecisionContext) -> mpc:
    return zeta_pair(s, ctx)[1]


def zeta_iter(s, n: int, ctx: PrecisionContext) -> mpc:
    """The n-fold composition of zeta applied to ``s``.

    Raises :class:`PoleEncountered` if an iterate lands on the pole and
    :class:`OverflowEscape` if an iterate that still has to be fed to zeta
    lies outside the escape disk ``|z| <= ctx.escape_bound``.
    """
    if n < 0:
        raise ValueError("iteration count must be non-negative")
    value = as_big(s, ctx)
    tol = ctx.residual_tol
    for step in range(n):
        _guard_iterate(value, step, tol, ctx)
        value, _ = _zeta_em(value, ctx.work_dps, with_deriv=False)
    return value


def zeta_iter_pair(s, n: int, ctx: PrecisionContext) -> tuple[mpc, mpc]:
    """(zeta^n(s), d/ds zeta^n(s)) by the chain rule."""
    value = as_big(s, ctx)
    deriv = mpc(1)
    tol = ctx.residual_tol
    for step in range(n):
        _guard_iterate(value, step, tol, ctx)
        value, d = _zeta_em(value, ctx.work_dps, with_deriv=True)
        with ctx.workdps():
            deriv = deriv * d
    return value, deriv


def _guard_iterate(value, step, tol, ctx):
    with ctx.workdps():
        if abs(value - 1) < tol:
            raise PoleEncountered(step, value)
        if abs(value) > ctx.escape_bound:
            raise OverflowEscape(step, value)


# ------------------------------------------------------------- map under study


class FunctionKind(Enum):
    ZETA = "zeta"
    ZETA_ITER = "zeta_iter"
    ZETA_ITER_MINUS_IDENTITY = "zeta_iter_minus_identity"


@dataclass(frozen=True)
class FunctionSpec:
    """One of zeta, zeta^L or zeta^L(s) - s."""

    kind: FunctionKind = FunctionKind.ZETA
    L: int = 1

    def __post_init__(self):
        if self.L < 1:
            raise ValueError("L must be >= 1")
        if self.kind is FunctionKind.ZETA and self.L != 1:
            raise ValueError("plain zeta has L = 1")

    @classmethod
    def zeta(cls) -> "FunctionSpec":
        return cls(FunctionKind.ZETA, 1)

    @classmethod
    def iterate(cls, L: int) -> "FunctionSpec":
        return cls(FunctionKind.ZETA_ITER, L)

    @classmethod
    def iterate_minus_identity(cls, L: int) -> "FunctionSpec":
        return cls(FunctionKind.ZETA_ITER_MINUS_IDENTITY, L)

    def __call__(self, s, ctx: PrecisionContext) -> mpc:
        value = zeta_iter(s, self.L, ctx)
        if self.kind is FunctionKind.ZETA_ITER_MINUS_IDENTITY:
            with ctx.workdps():
                value = value - s
        return value

    def value_and_derivative(self, s, ctx: PrecisionContext) -> tuple[mpc, mpc]:
        value, deriv = zeta_iter_pair(s, self.L, ctx)
        if self.kind is FunctionKind.ZETA_ITER_MINUS_IDENTITY:
            with ctx.workdps():
                value = value - s
                deriv = deriv - 1
        return value, deriv

    def describe(self) -> str:
        if self.kind is FunctionKind.ZETA:
            return "zeta(s)"
        if self.kind is FunctionKind.ZETA_ITER:
            return f"zeta^{self.L}(s)"
        return f"zeta^{self.L}(s) - s"


# ----------------------------------------------------------- gamma (oracle)

_spouge_cache: dict[tuple[int, int], list] = {}


def _spouge_coeffs(a: int, prec: int) -> list:
    key = (a, prec)
    with _cache_lock:
        cached = _spouge_cache.get(key)
    if cached is not None:
        return cached
    with mpmath.workprec(prec):
        coeffs = [mpmath.sqrt(2 * mpmath.pi)]
        sign = 1
        fact = mpf(1)
        for k in range(1, a):
            if k > 1:
                fact *= k - 1
            coeffs.append(sign * mpf(a - k) ** (k - mpf(0.5)) * mpmath.exp(a - k) / fact)
            sign = -sign
    with _cache_lock:
        _spouge_cache[key] = coeffs
    return coeffs


def spouge_gamma(w, dps: int) -> mpc:
    """Gamma(w) by Spouge's approximation, reflected into Re(w) >= 1/2.

    The parameter ``a`` is taken from Spouge's bound
    a^-1/2 (2 pi)^-(a+1/2) < 10^-dps; the coefficients alternate and reach
    about (2 pi)^a, so the sum is carried with roughly twice the digits.
    """
    with mpmath.workdps(dps + 10):
        w = mpc(w)
        if w.imag == 0 and w.real <= 0 and w.real == mpmath.floor(w.real):
            raise GammaPole(f"Gamma has a pole at {mpmath.nstr(w.real, 10)}")
    if w.real < 0.5:
        with mpmath.workdps(dps + 10):
            other = spouge_gamma(1 - w, dps)
            return mpmath.pi / (mpmath.sinpi(w) * other)
    a = int(math.ceil((dps + 2) * LN10 / math.log(TWO_PI))) + 1
    prec = dps_to_prec(2 * dps + 20)
    coeffs = _spouge_coeffs(a, prec)
    with mpmath.workprec(prec):
        z = mpc(w) - 1
        acc = coeffs[0]
        for k in range(1, a):
            acc += coeffs[k] / (z + k)
        base = z + a
        result = mpmath.exp((z + mpf(0.5)) * mpmath.log(base) - base) * acc
    with mpmath.workdps(dps):
        return +result


def _is_nonpositive_integer(w: mpc) -> bool:
    return w.imag == 0 and w.real <= 0 and w.real == mpmath.floor(w.real)


def functional_equation_check(s, ctx: PrecisionContext) -> mpf:
    """Relative mismatch of zeta(s) against its reflection through 1 - s.

    Computes |zeta(s) - 2^s pi^(s-1) sin(pi s/2) Gamma(1-s) zeta(1-s)| / |zeta(s)|.
    When 1 - s is a pole of Gamma (s = 2, 3, ...) the product on the right is
    a 0 * infinity limit, so the relation is checked in the mirrored form
    zeta(1-s) = 2 (2 pi)^-s cos(pi s/2) Gamma(s) zeta(s) instead.
    """
    s = as_big(s, ctx)
    dps = ctx.work_dps
    with ctx.workdps():
        one_minus = 1 - s
    if _is_nonpositive_integer(one_minus):
        lhs = zeta(one_minus, ctx)
        zs = zeta(s, ctx)
        with ctx.workdps():
            rhs = 2 * (2 * mpmath.pi) ** (-s) * mpmath.cospi(s / 2) * spouge_gamma(s, dps) * zs
            scale = max(abs(lhs), abs(zs))
            return abs(lhs - rhs) / scale
    lhs = zeta(s, ctx)
    zr = zeta(one_minus, ctx)
    with ctx.workdps():
        rhs = (
            mpmath.power(2, s)
            * mpmath.power(mpmath.pi, s - 1)
            * mpmath.sinpi(s / 2)
            * spouge_gamma(one_minus, dps)
            * zr
        )
        return abs(lhs - rhs) / abs(lhs)
