"""Quadrant plots, basin plots, everted spiral plots and statistics figures.

Raster images are written as binary PPM (P6) with a fixed palette so that
identical inputs give byte-identical files; statistics figures go through
matplotlib's Agg backend with the PNG metadata pinned.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

import mpmath
import numpy as np
from mpmath import mpc, mpf

from .errors import DimensionMismatch, ZetaSpiralError
from .mpcore import PrecisionContext, zeta
from .orbit import Branch, Fate, forward_classify
from .rootfind import Box, QuadrantClass, quadrant_class
from .spiralfit import PolarSeries, unwrap, write_csv

RENDER_DIGITS = 30
# Basin orbits that leave this disk never come back to phi in practice:
# far right they collapse onto the pole at 1, far left |zeta| explodes.
# Evaluating zeta out there is expensive, so stop early.
BASIN_ESCAPE = 1e2

# RGB values for the classes of a quadrant plot.
PALETTE = {
    QuadrantClass.AXIS: (0, 0, 0),
    QuadrantClass.I_RICH: (0, 60, 220),
    QuadrantClass.I_PALE: (160, 190, 255),
    QuadrantClass.II_RICH: (210, 20, 30),
    QuadrantClass.II_PALE: (255, 170, 170),
    QuadrantClass.III_RICH: (235, 200, 0),
    QuadrantClass.III_PALE: (255, 240, 160),
    QuadrantClass.IV_RICH: (0, 150, 50),
    QuadrantClass.IV_PALE: (160, 230, 170),
    QuadrantClass.ERROR: (255, 0, 255),
}
CLASSES = list(QuadrantClass)

FATE_COLORS = {
    Fate.CONVERGED_TO_PHI: (30, 30, 30),
    Fate.ESCAPED: (235, 235, 235),
    Fate.POLE_HIT: (255, 0, 255),
    Fate.UNDECIDED: (255, 140, 0),
}
FATES = list(Fate)


def pixel_centers(box: Box, res: int, ctx: PrecisionContext):
    """Centers of the res x res cells, row 0 at the top (largest imaginary part)."""
    h = mpf(box.side) / res
    half = mpf(box.side) / 2
    with ctx.workdps():
        for i in range(res):
            y = box.center.imag + half - (i + mpf(1) / 2) * h
            for j in range(res):
                x = box.center.real - half + (j + mpf(1) / 2) * h
                yield i, j, mpc(x, y)


def write_ppm(path, rgb: np.ndarray, comment: str | None = None) -> None:
    """Binary PPM with an optional header comment (used for provenance)."""
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise DimensionMismatch(f"expected an H x W x 3 array, got {rgb.shape}")
    h, w, _ = rgb.shape
    header = "P6\n"
    if comment:
        header += "".join(f"# {line}\n" for line in comment.splitlines())
    header += f"{w} {h}\n255\n"
    Path(path).write_bytes(header.encode("ascii") + rgb.tobytes())


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos].decode("ascii"))
    if tokens[0] != "P6":
        raise ValueError("not a binary PPM file")
    w, h = int(tokens[1]), int(tokens[2])
    pixels = np.frombuffer(data[pos + 1 : pos + 1 + w * h * 3], dtype=np.uint8)
    return pixels.reshape(h, w, 3)


# ------------------------------------------------------------ quadrant plots


@dataclass(frozen=True)
class QuadrantImage:
    box: Box
    width: int
    height: int
    pixels: np.ndarray  # indices into CLASSES
    disk_radius: float

    def classes(self, i: int, j: int) -> QuadrantClass:
        return CLASSES[int(self.pixels[i, j])]

    def to_rgb(self) -> np.ndarray:
        lut = np.array([PALETTE[c] for c in CLASSES], dtype=np.uint8)
        return lut[self.pixels]

    def save(self, path, comment: str | None = None) -> None:
        write_ppm(path, self.to_rgb(), comment)

    def pixel_of(self, z) -> tuple[int, int]:
        """Row and column of the cell containing z."""
        h = self.box.side / self.width
        d = complex(mpc(z) - self.box.center)
        j = int(math.floor((d.real + self.box.side / 2) / h))
        i = int(math.floor((self.box.side / 2 - d.imag) / h))
        return i, j

    def neighborhood(self, z, radius: int = 2) -> set:
        """Classes present in the (2 radius + 1)^2 pixel block around z."""
        i0, j0 = self.pixel_of(z)
        found = set()
        for i in range(max(i0 - radius, 0), min(i0 + radius + 1, self.height)):
            for j in range(max(j0 - radius, 0), min(j0 + radius + 1, self.width)):
                found.add(self.classes(i, j))
        return found


def quadrant_plot(
    f,
    target_shift,
    box: Box,
    res: int,
    disk_radius: float = 10.0,
    digits: int = RENDER_DIGITS,
    axis_eps: float | None = None,
) -> QuadrantImage:
    """Classify g(s) = f(s) - target_shift at each cell center.

    ``f`` is a FunctionSpec or any callable ``f(s, ctx)``.  A pixel is drawn
    black when |Re g| or |Im g| is below axis_eps * min(|g|, disk_radius);
    the default axis_eps is 1e-4.  Scaling by |g| keeps the axes thin next to
    zeros of high multiplicity, where |g| itself is tiny.  Evaluation
    failures are drawn in the error color.
    """
    if res < 16:
        raise ValueError("res must be >= 16")
    ctx = PrecisionContext(digits=digits)
    factor = 1e-4 if axis_eps is None else axis_eps
    pixels = np.zeros((res, res), dtype=np.uint8)
    error_index = CLASSES.index(QuadrantClass.ERROR)
    with ctx.workdps():
        shift = mpc(target_shift)
        for i, j, s in pixel_centers(box, res, ctx):
            try:
                value = f(s, ctx) - shift
                size = abs(complex(value))
                eps = factor * min(size, disk_radius) if math.isfinite(size) else 0.0
                cls = quadrant_class(value, disk_radius, eps)
                pixels[i, j] = CLASSES.index(cls)
            except (ZetaSpiralError, ZeroDivisionError, OverflowError):
                pixels[i, j] = error_index
    return QuadrantImage(box, res, res, pixels, disk_radius)


def rational_example(s, ctx=None):
    """(s - 1)^2 (s - i) (s + 1)^5 / (s + i)^3: zeros at 1, i, -1 and a pole at -i."""
    j = mpc(0, 1)
    return (s - 1) ** 2 * (s - j) * (s + 1) ** 5 / (s + j) ** 3


# --------------------------------------------------------------- basin plots


@dataclass(frozen=True)
class BasinImage:
    box: Box
    width: int
    height: int
    fates: np.ndarray  # indices into FATES
    steps: np.ndarray

    def fate(self, i: int, j: int) -> Fate:
        return FATES[int(self.fates[i, j])]

    def to_rgb(self) -> np.ndarray:
        lut = np.array([FATE_COLORS[f] for f in FATES], dtype=np.uint8)
        return lut[self.fates]

    def save(self, path, comment: str | None = None) -> None:
        write_ppm(path, self.to_rgb(), comment)


def basin_plot(
    box: Box,
    res: int,
    max_iter: int = 60,
    digits: int = RENDER_DIGITS,
    convergence_tol: float = 1e-20,
    escape_bound: float = BASIN_ESCAPE,
) -> BasinImage:
    """Fate of the forward zeta orbit of each cell center."""
    if res < 16:
        raise ValueError("res must be >= 16")
    ctx = PrecisionContext(digits=digits, escape_bound=escape_bound)
    fates = np.zeros((res, res), dtype=np.uint8)
    steps = np.zeros((res, res), dtype=np.int32)
    for i, j, s in pixel_centers(box, res, ctx):
        try:
            result = forward_classify(s, max_iter, ctx, convergence_tol)
            fate, n = result.fate, result.steps
        except ZetaSpiralError:
            fate, n = Fate.UNDECIDED, max_iter
        fates[i, j] = FATES.index(fate)
        steps[i, j] = n
    return BasinImage(box, res, res, fates, steps)


def overlay(basin: BasinImage, quad: QuadrantImage, alpha: float) -> np.ndarray:
    """Alpha blend of the quadrant colors over the basin colors."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if (basin.width, basin.height) != (quad.width, quad.height) or basin.box != quad.box:
        raise DimensionMismatch("basin and quadrant images cover different grids")
    if alpha == 0.0:
        return basin.to_rgb()
    if alpha == 1.0:
        return quad.to_rgb()
    mixed = (1 - alpha) * basin.to_rgb().astype(float) + alpha * quad.to_rgb().astype(float)
    return np.rint(mixed).astype(np.uint8)


# ------------------------------------------------------------- spiral plots


class ChordMode(Enum):
    NONE = "none"
    ZETA_MAP = "zeta"
    ITER_L_MAP = "iterL"


@dataclass
class Series:
    label: str
    x: Sequence[float]
    y: Sequence[float]


@dataclass
class PlotSpec:
    series: list = field(default_factory=list)
    overlay_curves: list = field(default_factory=list)
    segments: list = field(default_factory=list)
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    equal_aspect: bool = False

    def __post_init__(self):
        for s in list(self.series) + list(self.overlay_curves):
            if len(s.x) != len(s.y):
                raise DimensionMismatch(f"series {s.label!r} has unequal x and y lengths")
            if not (np.all(np.isfinite(s.x)) and np.all(np.isfinite(s.y))):
                raise ValueError(f"series {s.label!r} has non-finite coordinates")


def _everted_xy(theta, logr):
    theta = np.asarray(theta, float)
    logr = np.asarray(logr, float)
    return logr * np.cos(theta), logr * np.sin(theta)


def everted_plot(
    b: Branch,
    p: PolarSeries | None = None,
    chords: ChordMode = ChordMode.NONE,
    spacing: float | None = None,
) -> PlotSpec:
    """Branch points drawn at polar radius log r and angle theta.

    For a cycle branch each subsequence is unwrapped about its own cycle
    element and displayed around its own center, spaced along the real axis.
    Chords join v to zeta(v) (consecutive elements) or to zeta^L(v).
    """
    L = b.L
    if L == 1:
        p = p if p is not None else unwrap(b)
        xs, ys = _everted_xy(p.theta, p.logr)
        coords = {k: (float(xs[k]), float(ys[k])) for k in range(len(xs))}
        series = [Series("branch", list(xs), list(ys))]
    else:
        coords = {}
        series = []
        parts = []
        for j in range(L):
            sub = b.subsequence(j)
            sb = Branch(sub[0], b.anchor, sub, (), len(sub), b.digits)
            parts.append(unwrap(sb, anchor=b.anchor_for(j)))
        extent = max(float(np.max(np.abs(q.logr))) for q in parts)
        gap = spacing if spacing is not None else 2.5 * extent
        for j, q in enumerate(parts):
            xs, ys = _everted_xy(q.theta, q.logr)
            xs = xs + j * gap
            series.append(Series(f"b_{j}", list(xs), list(ys)))
            for m in range(len(xs)):
                coords[j + m * L] = (float(xs[m]), float(ys[m]))
    segments = []
    step = {ChordMode.ZETA_MAP: 1, ChordMode.ITER_L_MAP: L}.get(chords)
    if step is not None:
        for k in range(len(b) - step):
            if k in coords and k + step in coords:
                segments.append((coords[k + step], coords[k]))
    return PlotSpec(series, [], segments, equal_aspect=True)


def stats_plot(spec: PlotSpec, png_path, csv_path, metadata: dict | None = None) -> None:
    """Render a scatter figure with overlay curves and write its data as CSV."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4.5), dpi=100)
    for seg in spec.segments:
        (x0, y0), (x1, y1) = seg
        ax.plot([x0, x1], [y0, y1], color="0.7", linewidth=0.5)
    for s in spec.series:
        ax.scatter(s.x, s.y, s=6, label=s.label)
    for c in spec.overlay_curves:
        ax.plot(c.x, c.y, linewidth=1.2, label=c.label)
    if spec.equal_aspect:
        ax.set_aspect("equal", adjustable="datalim")
    ax.set_title(spec.title)
    ax.set_xlabel(spec.xlabel)
    ax.set_ylabel(spec.ylabel)
    if len(spec.series) + len(spec.overlay_curves) > 1:
        ax.legend(fontsize=7)
    meta = {"Software": None}
    if metadata:
        meta.update(metadata)
    fig.savefig(png_path, format="png", metadata=meta)
    plt.close(fig)

    labels, kinds, xs, ys = [], [], [], []
    for kind, group in (("series", spec.series), ("overlay", spec.overlay_curves)):
        for s in group:
            for x, y in zip(s.x, s.y):
                labels.append(s.label)
                kinds.append(kind)
                xs.append(float(x))
                ys.append(float(y))
    write_csv(csv_path, {"label": labels, "kind": kinds, "x": xs, "y": ys})
