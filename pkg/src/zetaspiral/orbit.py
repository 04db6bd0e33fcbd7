"""Forward orbits of zeta and backward-orbit branches converging to repelling cycles.

A branch B = (a_0, a_1, ...) of the backward orbit of a point w satisfies
a_0 = w and zeta(a_{k+1}) = a_k.  Near a repelling cycle zeta is locally
invertible, so each new element is found by Newton's method from the
linearized inverse of the previous one.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from pathlib import Path

import mpmath
from mpmath import mpc, mpf

from .errors import (
    NoConvergence,
    OverflowEscape,
    ParseError,
    PoleAtOne,
    PoleEncountered,
    SolverFailed,
    WrongBasin,
    ZetaSpiralError,
)
from .mpcore import (
    FunctionSpec,
    PrecisionContext,
    as_big,
    format_complex,
    format_real,
    zeta,
    zeta_deriv,
    zeta_pair,
)
from .rootfind import Box, Cycle, grid_localize, newton_polish

log = logging.getLogger(__name__)

PHI_APPROX = "-0.295905005575213955647237831083048033948674166051947828994799"
CONVERGENCE_TOL = mpf("1e-20")
BURN_IN = 10
RESIDUAL_PREC = 64


# ------------------------------------------------------------- forward orbits


class Fate(Enum):
    CONVERGED_TO_PHI = "converged"
    ESCAPED = "escaped"
    POLE_HIT = "pole"
    UNDECIDED = "undecided"


@dataclass(frozen=True)
class OrbitResult:
    fate: Fate
    steps: int
    final: mpc


@lru_cache(maxsize=16)
def _phi_cached(digits: int) -> mpc:
    ctx = PrecisionContext(digits=digits)
    return newton_polish(FunctionSpec.iterate_minus_identity(1), 0, f"{PHI_APPROX} 0", ctx)


def phi(ctx: PrecisionContext) -> mpc:
    """The attracting real fixed point of zeta, near -0.295905."""
    return _phi_cached(ctx.digits)


def forward_classify(
    s,
    max_iter: int,
    ctx: PrecisionContext,
    convergence_tol=CONVERGENCE_TOL,
) -> OrbitResult:
    """Iterate zeta from s and report how the orbit ends.

    The orbit converges once it is within ``convergence_tol`` of phi, escapes
    when it leaves the disk of radius ``ctx.escape_bound``, and hits the pole
    when it comes within 1/escape_bound of s = 1 (where |zeta| would exceed
    the bound anyway).
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    target = phi(ctx)
    bound = ctx.escape_bound
    with ctx.workdps():
        z = as_big(s, ctx)
        tol = mpf(convergence_tol)
        for step in range(max_iter + 1):
            if abs(z - target) < tol:
                return OrbitResult(Fate.CONVERGED_TO_PHI, step, z)
            if abs(z) > bound:
                return OrbitResult(Fate.ESCAPED, step, z)
            if abs(z - 1) < 1 / mpf(bound):
                return OrbitResult(Fate.POLE_HIT, step, z)
            if step == max_iter:
                break
            try:
                z = zeta(z, ctx)
            except (PoleAtOne, PoleEncountered):
                return OrbitResult(Fate.POLE_HIT, step + 1, z)
            except OverflowEscape:
                return OrbitResult(Fate.ESCAPED, step + 1, z)
    return OrbitResult(Fate.UNDECIDED, max_iter, z)


# ------------------------------------------------------------------- branches


@dataclass(frozen=True)
class Branch:
    """Backward-orbit branch anchored at a repelling cycle.

    ``residuals[k]`` is |zeta(a_{k+1}) - a_k|.  Element a_k (k >= 1)
    approaches the cycle element ``anchor[anchor_index(k)]``.
    """

    root: mpc
    anchor: Cycle
    elements: tuple
    residuals: tuple
    verified_len: int
    digits: int

    def __len__(self) -> int:
        return len(self.elements)

    @property
    def L(self) -> int:
        return self.anchor.L

    @property
    def ctx(self) -> PrecisionContext:
        return PrecisionContext(digits=self.digits)

    def anchor_index(self, k: int) -> int:
        # zeta(lambda_i) = lambda_{i+1}, so preimages step backwards through the cycle.
        return (-k) % self.L

    def anchor_for(self, k: int) -> mpc:
        return self.anchor[self.anchor_index(k)]

    def subsequence(self, j: int) -> tuple:
        """b_j = (a_j, a_{j+L}, a_{j+2L}, ...), converging to ``anchor_for(j)``."""
        if not 0 <= j < self.L:
            raise IndexError(j)
        return self.elements[j :: self.L]

    def subsequences(self) -> list[tuple]:
        return [self.subsequence(j) for j in range(self.L)]

    def verified(self) -> "Branch":
        n = self.verified_len
        return replace(self, elements=self.elements[:n], residuals=self.residuals[: max(n - 1, 0)])

    def distances(self) -> list[mpf]:
        with mpmath.workdps(self.digits + 10):
            return [abs(a - self.anchor_for(k)) for k, a in enumerate(self.elements)]

    # -- serialization

    def dumps(self, comment: str | None = None) -> str:
        prec = mpmath.libmp.dps_to_prec(self.digits + 10)
        anchor = ";".join(format_complex(z, prec).replace(" ", ",") for z in self.anchor.elements)
        header = (
            f"root={format_complex(self.root, prec).replace(' ', ',')} anchorL={self.L} "
            f"digits={self.digits} length={len(self)} verified={self.verified_len} "
            f"anchor={anchor}"
        )
        lines = [f"# {comment}", header] if comment else [header]
        for k, a in enumerate(self.elements):
            r = self.residuals[k - 1] if k >= 1 else mpf(0)
            lines.append(f"{format_complex(a, prec)} {format_real(r, RESIDUAL_PREC)}")
        return "\n".join(lines) + "\n"

    def save(self, path, comment: str | None = None) -> None:
        Path(path).write_text(self.dumps(comment))

    @classmethod
    def loads(cls, text: str) -> "Branch":
        lines = text.splitlines()
        skip = 0
        while skip < len(lines) and lines[skip].startswith("#"):
            skip += 1
        lines = lines[skip:]
        if not lines:
            raise ParseError(skip + 1, "")
        try:
            fields = dict(tok.split("=", 1) for tok in lines[0].split())
            digits = int(fields["digits"])
            length = int(fields["length"])
            L = int(fields["anchorL"])
        except (KeyError, ValueError):
            raise ParseError(skip + 1, lines[0]) from None
        prec = mpmath.libmp.dps_to_prec(digits + 10)
        with mpmath.workprec(prec):
            root = _parse_pair(fields["root"].replace(",", " "), skip + 1)
            anchor = tuple(
                _parse_pair(z.replace(",", " "), skip + 1) for z in fields.get("anchor", "").split(";") if z
            )
            if len(anchor) != L:
                raise ParseError(skip + 1, lines[0])
            elements, residuals = [], []
            for lineno, line in enumerate(lines[1 : 1 + length], start=skip + 2):
                parts = line.split()
                if len(parts) != 3:
                    raise ParseError(lineno, line)
                elements.append(_parse_pair(" ".join(parts[:2]), lineno))
                with mpmath.workprec(RESIDUAL_PREC):
                    try:
                        r = mpf(parts[2])
                    except ValueError:
                        raise ParseError(lineno, line) from None
                if lineno > skip + 2:
                    residuals.append(r)
        if len(elements) != length:
            raise ParseError(skip + len(lines) + 1, "truncated branch file")
        verified = int(fields.get("verified", length))
        return cls(root, Cycle(anchor), tuple(elements), tuple(residuals), verified, digits)

    @classmethod
    def load(cls, path) -> "Branch":
        return cls.loads(Path(path).read_text())


def _parse_pair(text: str, lineno: int) -> mpc:
    try:
        re, im = text.split()
        return mpc(mpf(re), mpf(im))
    except ValueError:
        raise ParseError(lineno, text) from None


def _multipliers(cycle: Cycle, ctx: PrecisionContext) -> list:
    return [zeta_deriv(lam, ctx) for lam in cycle.elements]


def _solve_first(root, lam, mult, ctx, f):
    """First preimage near ``lam``: linear-inverse seed, then a grid fallback."""
    with ctx.workdps():
        seed = lam + (root - lam) / mult
    try:
        return newton_polish(f, root, seed, ctx)
    except ZetaSpiralError as exc:
        log.info("linear seed failed for the first preimage (%s); scanning", exc)
    cells = grid_localize(f, root, Box(lam, 2.0), 16, ctx)
    cells.sort(key=lambda c: abs(complex(c.center - seed)))
    for cell in cells:
        try:
            return newton_polish(f, root, cell.center, ctx)
        except ZetaSpiralError:
            continue
    raise NoConvergence(0, mpf("inf"))


def cycle_branch(
    root,
    cycle: Cycle,
    length: int,
    ctx: PrecisionContext,
    strict: bool = False,
    burn_in: int = BURN_IN,
) -> Branch:
    """Backward-orbit branch of ``root`` whose subsequences converge to the cycle.

    Element a_{k+1} solves zeta(s) = a_k, seeded at the linearized inverse
    lambda' + (a_k - lambda) / zeta'(lambda') where lambda' is the cycle
    element preceding lambda = anchor_for(k).  On solver failure or a
    distance increase past ``burn_in`` the branch is cut short, or an error is
    raised when ``strict`` (always on the first step).
    """
    if length < 2:
        raise ValueError("length must be >= 2")
    f = FunctionSpec.zeta()
    L = cycle.L
    root = as_big(root, ctx)
    mults = _multipliers(cycle, ctx)
    elements = [root]
    residuals = []

    def lam_for(k):
        return cycle[(-k) % L]

    for k in range(length - 1):
        target = elements[k]
        i_next = (-(k + 1)) % L
        lam_next = cycle[i_next]
        try:
            if k == 0:
                sol = _solve_first(target, lam_next, mults[i_next], ctx, f)
            else:
                with ctx.workdps():
                    seed = lam_next + (target - lam_for(k)) / mults[i_next]
                sol = newton_polish(f, target, seed, ctx)
        except ZetaSpiralError as exc:
            if strict or k == 0:
                raise SolverFailed(k + 1, exc) from exc
            log.warning("branch stopped at step %d: %s", k + 1, exc)
            break
        with ctx.workdps():
            res = abs(zeta(sol, ctx) - target)
            prev = k + 1 - L
            moved_away = (
                prev >= max(burn_in, 1) and abs(sol - lam_next) >= abs(elements[prev] - lam_next)
            )
        if moved_away:
            if strict:
                raise WrongBasin(k + 1)
            log.warning("branch element %d moved away from its anchor; stopping", k + 1)
            break
        elements.append(sol)
        with mpmath.workprec(RESIDUAL_PREC):
            residuals.append(+res)
    return Branch(root, cycle, tuple(elements), tuple(residuals), len(elements), ctx.digits)


def backward_branch(
    root,
    anchor: Cycle,
    length: int,
    ctx: PrecisionContext,
    strict: bool = False,
    burn_in: int = BURN_IN,
) -> Branch:
    """Branch converging to a repelling fixed point (or cycle) ``anchor``."""
    if not isinstance(anchor, Cycle):
        anchor = Cycle.fixed_point(anchor, ctx)
    return cycle_branch(root, anchor, length, ctx, strict=strict, burn_in=burn_in)


# ---------------------------------------------------------------- reliability


def amplification_bound(b: Branch, k: int, ctx: PrecisionContext, derivs=None) -> mpf:
    """Admissible |zeta^k(a_k) - root| given per-step residuals below tolerance.

    A residual r at a_j is amplified by |(zeta^j)'(a_j)| on the way back to
    the root, so the bound is 10 k residual_tol prod_{j<=k} |zeta'(a_j)|.
    """
    with ctx.workdps():
        prod = mpf(1)
        for j in range(1, k + 1):
            d = derivs[j] if derivs is not None else zeta_deriv(b.elements[j], ctx)
            prod *= max(abs(d), mpf(1))
        return 10 * k * ctx.residual_tol * prod


def truncate_reliable(
    b: Branch,
    ctx: PrecisionContext | None = None,
    stride: int = 1,
    max_amplified: float = 1e-6,
) -> Branch:
    """Cut the branch after the last element that passes both reliability tests.

    (i) the residual |zeta(a_{k+1}) - a_k|, recomputed rather than read
    from the stored residuals, is below residual_tol;
    (ii) iterating zeta k times from a_k returns to the root within the
    amplification bound, and that bound itself is below ``max_amplified``
    (past that point a_k no longer determines the root to useful accuracy).

    Test (ii) costs O(k) evaluations per element; ``stride`` > 1 runs it on
    every stride-th element and on the last one only, and after a failure
    bisects back to the first failing element.
    """
    ctx = ctx or b.ctx
    tol = ctx.residual_tol
    n = len(b)
    good = 1
    derivs = [None]
    for k in range(1, n):
        value, deriv = zeta_pair(b.elements[k], ctx)
        with ctx.workdps():
            if not abs(value - b.elements[k - 1]) < tol:
                break
        derivs.append(deriv)
        good = k + 1
    cap = mpf(max_amplified)

    def passes(k: int) -> bool:
        bound = amplification_bound(b, k, ctx, derivs)
        if not bound < cap:
            return False
        with ctx.workdps():
            z = b.elements[k]
            for _ in range(k):
                z = zeta(z, ctx)
            return abs(z - b.root) < bound

    checked = [k for k in range(1, good) if k % stride == 0 or k == good - 1]
    verified = good
    last_ok = 0
    for k in checked:
        if passes(k):
            last_ok = k
            continue
        lo, hi = last_ok, k
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if passes(mid):
                lo = mid
            else:
                hi = mid
        verified = lo + 1
        break
    return replace(b, verified_len=verified).verified() if verified < n else replace(b, verified_len=n)


def set_image_check(b: Branch, ctx: PrecisionContext | None = None) -> bool:
    """Whether zeta maps the branch, as a set, onto itself minus its last element plus {0}.

    Matching is positional (zeta(a_k) against a_{k-1}), which is sufficient
    for the set identity.
    """
    ctx = ctx or b.ctx
    tol = ctx.residual_tol
    with ctx.workdps():
        if abs(zeta(b.root, ctx)) >= tol:
            return False
        for k in range(1, len(b)):
            if abs(zeta(b.elements[k], ctx) - b.elements[k - 1]) >= tol:
                return False
    return True
