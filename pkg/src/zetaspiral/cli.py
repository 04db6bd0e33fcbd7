"""Command-line pipeline: zeros -> fixed points -> branches -> fits -> statistics and figures.

Every stage reads the files written by earlier stages from the output
directory and records what it wrote in ``manifest.json`` (SHA-256 digest,
stage name and the hash of the configuration fields the stage depends on).
Inputs are checked against the manifest before use, so a hand-edited file
or one produced under different settings is refused rather than silently
reused.  Outputs carry no timestamps and are byte-identical across runs.

Examples::

    zetaspiral ingest-zeros --digits 500 --count 4
    zetaspiral find-psi --n 1-4 --digits 500
    zetaspiral branch --anchor psi:1 --length 120 --digits 500
    zetaspiral fit --anchor psi:1 --length 120 --digits 500
    zetaspiral verify --suite fast
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import mpmath
import numpy as np
from mpmath import mpc, mpf

from . import __version__
from .checks import CHECKS, FAST, FULL
from .errors import (
    ChecksumMismatch,
    MissingInput,
    ParseError,
    StaleInput,
    ZetaSpiralError,
)
from .mpcore import FunctionSpec, PrecisionContext, format_complex, parse_complex, zeta
from .orbit import Branch, backward_branch, cycle_branch, truncate_reliable
from .render import (
    ChordMode,
    basin_plot,
    everted_plot,
    overlay,
    quadrant_plot,
    rational_example,
    stats_plot,
    write_ppm,
)
from .rootfind import (
    Box,
    Cycle,
    find_fixed_point,
    find_psi_rho,
    find_trivial_fixed_point,
    read_zero_table,
    refine_zero,
    write_zero_table,
)
from .spiralfit import (
    conjecture4_stats,
    deviations,
    fit_extended,
    fit_index_linear,
    fit_log_linear,
    line_deviation,
    model_deviation,
    pairwise_params,
    rotation_discrepancy,
    SpiralFit,
    unwrap,
    write_csv,
)

log = logging.getLogger("zetaspiral")

ENV_OUT = "ZETASPIRAL_OUT"
MANIFEST = "manifest.json"

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_COMPUTE = 4

# Configuration fields each stage's outputs depend on.
STAGE_FIELDS = {
    "zeros": ("digits", "zero_table"),
    "psi": ("digits",),
    "branch": ("digits", "zero_table", "branch_length"),
    "fit": ("digits", "zero_table", "branch_length", "c_offset", "beta"),
    "deviations": ("digits", "zero_table", "branch_length", "c_offset", "beta"),
    "rotation": ("digits", "zero_table", "branch_length"),
    "spiral": ("digits", "zero_table", "branch_length", "c_offset"),
}


# ------------------------------------------------------------------ anchors


@dataclass(frozen=True)
class AnchorSpec:
    """Where a branch should converge and which zero it starts from.

    Forms: ``psi:N`` (fixed point near rho_N, rooted at rho_N),
    ``trivial:2n[:m]`` (real fixed point near -2n, rooted at rho_m with
    m = n - 9 by default), ``cardioid:re,im:side[:m]`` (fixed point in a
    box) and ``cycle:L:re,im:side[:m]`` (L-cycle in a box).
    """

    kind: str
    index: int
    zero: int
    center: tuple | None = None
    side: float | None = None

    @classmethod
    def parse(cls, text: str) -> "AnchorSpec":
        parts = text.strip().split(":")
        kind = parts[0]
        try:
            if kind == "psi" and len(parts) == 2:
                n = int(parts[1])
                spec = cls("psi", n, n)
            elif kind == "trivial" and len(parts) in (2, 3):
                two_n = int(parts[1])
                if two_n % 2:
                    raise ValueError("trivial zeros are even")
                n = two_n // 2
                m = int(parts[2]) if len(parts) == 3 else max(1, n - 9)
                spec = cls("trivial", n, m)
            elif kind == "cardioid" and len(parts) in (3, 4):
                re, im = (float(x) for x in parts[1].split(","))
                m = int(parts[3]) if len(parts) == 4 else 1
                spec = cls("cardioid", 1, m, (re, im), float(parts[2]))
            elif kind == "cycle" and len(parts) in (4, 5):
                L = int(parts[1])
                re, im = (float(x) for x in parts[2].split(","))
                m = int(parts[4]) if len(parts) == 5 else 1
                spec = cls("cycle", L, m, (re, im), float(parts[3]))
            else:
                raise ValueError("unknown anchor form")
        except ValueError as exc:
            raise ValueError(f"bad anchor {text!r}: {exc}") from None
        if spec.index < 1 or spec.zero < 1 or (spec.side is not None and not spec.side > 0):
            raise ValueError(f"bad anchor {text!r}: indices must be >= 1 and sides positive")
        return spec

    @property
    def text(self) -> str:
        if self.kind == "psi":
            return f"psi:{self.index}"
        if self.kind == "trivial":
            return f"trivial:{2 * self.index}:{self.zero}"
        box = f"{self.center[0]!r},{self.center[1]!r}:{self.side!r}:{self.zero}"
        return f"cardioid:{box}" if self.kind == "cardioid" else f"cycle:{self.index}:{box}"

    @property
    def tag(self) -> str:
        """File-name stem for this anchor's outputs."""
        if self.kind == "psi":
            return f"psi{self.index}"
        if self.kind == "trivial":
            return f"trivial{2 * self.index}-rho{self.zero}"
        digest = hashlib.sha256(self.text.encode()).hexdigest()[:8]
        return f"{self.kind}{self.index}-rho{self.zero}-{digest}"


# ------------------------------------------------------------------- config


@dataclass(frozen=True)
class RunConfig:
    digits: int = 500
    branch_length: int = 100
    beta: int = 100
    c_offset: int | None = None
    anchors: tuple = ("psi:1",)
    output_dir: str = "zetaspiral-out"
    zero_table_path: str | None = None
    workers: int = 1

    def validate(self) -> "RunConfig":
        if self.digits < 30:
            raise ValueError("digits must be >= 30")
        if self.branch_length < 2:
            raise ValueError("branch length must be >= 2")
        if self.beta < 1:
            raise ValueError("beta must be >= 1")
        if self.c_offset not in (None, 0, 1):
            raise ValueError("c offset must be 0 or 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        for a in self.anchors:
            AnchorSpec.parse(a)
        if self.zero_table_path is not None and not Path(self.zero_table_path).is_file():
            raise MissingInput(f"zero table {self.zero_table_path} not found")
        return self

    @property
    def anchor_specs(self) -> list[AnchorSpec]:
        return [AnchorSpec.parse(a) for a in self.anchors]

    @property
    def out(self) -> Path:
        return Path(self.output_dir)

    @property
    def ctx(self) -> PrecisionContext:
        return PrecisionContext(digits=self.digits)

    def zero_table_text(self) -> str:
        if self.zero_table_path is not None:
            return Path(self.zero_table_path).read_text()
        return (resources.files("zetaspiral") / "data" / "zeros100.txt").read_text()

    def hashed_fields(self) -> dict:
        return {
            "digits": self.digits,
            "branch_length": self.branch_length,
            "beta": self.beta,
            "c_offset": self.c_offset,
            "zero_table": hashlib.sha256(self.zero_table_text().encode()).hexdigest(),
        }

    def stage_hash(self, stage: str, anchor: str | None = None) -> str:
        values = self.hashed_fields()
        payload = {k: values[k] for k in STAGE_FIELDS[stage]}
        payload["stage"] = stage
        payload["version"] = __version__
        if anchor is not None:
            payload["anchor"] = anchor
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def provenance(self, stage: str, anchor: str | None = None) -> str:
        return f"zetaspiral {__version__} stage={stage} config={self.stage_hash(stage, anchor)}"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["anchors"] = list(self.anchors)
        return d


# ----------------------------------------------------------------- manifest


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class Manifest:
    root: Path
    files: dict = field(default_factory=dict)

    @classmethod
    def load(cls, root: Path) -> "Manifest":
        path = Path(root) / MANIFEST
        if not path.exists():
            return cls(Path(root))
        data = json.loads(path.read_text())
        return cls(Path(root), data.get("files", {}))

    def save(self) -> None:
        data = {"tool": "zetaspiral", "version": __version__, "files": dict(sorted(self.files.items()))}
        (self.root / MANIFEST).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")

    def record(self, rel: str, stage: str, config_hash: str) -> None:
        self.files[rel] = {
            "sha256": sha256_file(self.root / rel),
            "stage": stage,
            "config": config_hash,
        }

    def require(self, rel: str, expected_hash: str) -> Path:
        path = self.root / rel
        if not path.exists():
            raise MissingInput(f"{rel} not found in {self.root}; run the stage that produces it")
        entry = self.files.get(rel)
        if entry is None:
            raise MissingInput(f"{rel} is not recorded in the manifest")
        if sha256_file(path) != entry["sha256"]:
            raise ChecksumMismatch(f"{rel} does not match its recorded checksum")
        if entry["config"] != expected_hash:
            raise StaleInput(f"{rel} was produced under a different configuration; rerun its stage")
        return path

    def audit(self) -> list[str]:
        """Problems with recorded files: missing or altered since they were written."""
        problems = []
        for rel, entry in sorted(self.files.items()):
            path = self.root / rel
            if not path.exists():
                problems.append(f"{rel}: missing")
            elif sha256_file(path) != entry["sha256"]:
                problems.append(f"{rel}: checksum mismatch")
        return problems


class Stage:
    """Bookkeeping for one pipeline stage run."""

    def __init__(self, cfg: RunConfig, name: str):
        self.cfg = cfg
        self.name = name
        cfg.out.mkdir(parents=True, exist_ok=True)
        self.manifest = Manifest.load(cfg.out)

    def path(self, rel: str) -> Path:
        p = self.cfg.out / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def wrote(self, rel: str, anchor: str | None = None) -> None:
        self.manifest.record(rel, self.name, self.cfg.stage_hash(self.name, anchor))

    def need(self, rel: str, stage: str, anchor: str | None = None) -> Path:
        return self.manifest.require(rel, self.cfg.stage_hash(stage, anchor))

    def close(self) -> None:
        self.manifest.save()


# ------------------------------------------------------------------- stages

ZEROS_FILE = "zeros.txt"
PSI_FILE = "psi.txt"


def _prec(digits: int) -> int:
    return mpmath.libmp.dps_to_prec(digits + 10)


def cmd_ingest_zeros(cfg: RunConfig, count: int | None = None) -> list[mpc]:
    """Refine tabulated zero ordinates to full precision and store them with residuals."""
    stage = Stage(cfg, "zeros")
    if cfg.zero_table_path is not None:
        heights = read_zero_table(cfg.zero_table_path)
    else:
        with resources.as_file(resources.files("zetaspiral") / "data" / "zeros100.txt") as p:
            heights = read_zero_table(p)
    if count is not None:
        heights = heights[:count]
    if not heights:
        log.warning("zero table is empty; writing an empty table")
    ctx = cfg.ctx
    zeros, residuals = [], []
    for h in heights:
        rho = refine_zero(h, ctx)
        with ctx.workdps():
            residuals.append(abs(zeta(rho, ctx)))
        zeros.append(rho)
    write_zero_table(stage.path(ZEROS_FILE), zeros, _prec(cfg.digits), residuals, cfg.provenance("zeros"))
    stage.wrote(ZEROS_FILE)
    stage.close()
    log.info("stored %d zeros", len(zeros))
    return zeros


def load_zeros(stage: Stage) -> list[mpc]:
    path = stage.need(ZEROS_FILE, "zeros")
    prec = _prec(stage.cfg.digits)
    out = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        if raw.startswith("#") or not raw.strip():
            continue
        parts = raw.split()
        if len(parts) < 2:
            raise ParseError(lineno, raw)
        out.append(parse_complex(" ".join(parts[:2]), prec))
    return out


def parse_range(text: str) -> list[int]:
    """'3' -> [3]; '1-4' -> [1, 2, 3, 4]; '1,5,9' -> [1, 5, 9]."""
    out = []
    for part in text.split(","):
        if "-" in part:
            lo, hi = (int(x) for x in part.split("-", 1))
            out.extend(range(lo, hi + 1))
        else:
            out.append(int(part))
    if not out or min(out) < 1:
        raise ValueError(f"bad index range {text!r}")
    return sorted(set(out))


def cmd_find_psi(cfg: RunConfig, n_values: list[int]) -> dict[int, mpc]:
    """Fixed points psi_{rho_n} for the requested n, merged into psi.txt."""
    stage = Stage(cfg, "psi")
    table = {}
    path = cfg.out / PSI_FILE
    if path.exists() and PSI_FILE in stage.manifest.files:
        try:
            table = load_psi(stage)
        except StaleInput:
            table = {}
    ctx = cfg.ctx
    for n in n_values:
        if n not in table:
            table[n] = find_psi_rho(n, ctx)
            log.info("psi_%d = %s", n, mpmath.nstr(table[n], 12))
    prec = _prec(cfg.digits)
    lines = [f"# {cfg.provenance('psi')}"]
    lines += [f"{n} {format_complex(table[n], prec)}" for n in sorted(table)]
    stage.path(PSI_FILE).write_text("\n".join(lines) + "\n")
    stage.wrote(PSI_FILE)
    stage.close()
    return {n: table[n] for n in n_values}


def load_psi(stage: Stage) -> dict[int, mpc]:
    path = stage.need(PSI_FILE, "psi")
    prec = _prec(stage.cfg.digits)
    table = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        if raw.startswith("#") or not raw.strip():
            continue
        parts = raw.split()
        if len(parts) != 3:
            raise ParseError(lineno, raw)
        table[int(parts[0])] = parse_complex(" ".join(parts[1:]), prec)
    return table


def branch_file(spec: AnchorSpec) -> str:
    return f"branches/{spec.tag}.txt"


def _resolve_anchor(spec: AnchorSpec, psi_table: dict | None, ctx: PrecisionContext) -> Cycle:
    if spec.kind == "psi":
        if psi_table is None or spec.index not in psi_table:
            raise MissingInput(f"psi_{spec.index} is not in {PSI_FILE}; run find-psi first")
        return Cycle.fixed_point(psi_table[spec.index], ctx)
    if spec.kind == "trivial":
        return Cycle.fixed_point(find_trivial_fixed_point(spec.index, ctx), ctx)
    with ctx.workdps():
        box = Box(mpc(*spec.center), spec.side)
    return find_fixed_point(spec.index, box, ctx)


def _build_branch(job) -> str:
    """Worker body: compute one branch and return its serialized text."""
    spec_text, root_pair, anchor_pairs, length, digits, comment = job
    ctx = PrecisionContext(digits=digits)
    prec = _prec(digits)
    root = parse_complex(root_pair, prec)
    anchor = Cycle(tuple(parse_complex(z, prec) for z in anchor_pairs))
    b = cycle_branch(root, anchor, length, ctx) if anchor.L > 1 else backward_branch(root, anchor, length, ctx)
    b = truncate_reliable(b, stride=16)
    if len(b) < length:
        log.warning("%s: %d of %d elements verified", spec_text, len(b), length)
    return b.dumps(comment)


def cmd_branch(cfg: RunConfig) -> dict[str, Branch]:
    """Build and store the branch for every configured anchor."""
    stage = Stage(cfg, "branch")
    zeros = load_zeros(stage)
    specs = cfg.anchor_specs
    psi_table = load_psi(stage) if any(s.kind == "psi" for s in specs) else None
    ctx = cfg.ctx
    prec = _prec(cfg.digits)
    jobs = []
    for spec in specs:
        if spec.zero > len(zeros):
            raise MissingInput(f"rho_{spec.zero} is not in {ZEROS_FILE}; ingest more zeros")
        anchor = _resolve_anchor(spec, psi_table, ctx)
        jobs.append(
            (
                spec.text,
                format_complex(zeros[spec.zero - 1], prec),
                [format_complex(z, prec) for z in anchor.elements],
                cfg.branch_length,
                cfg.digits,
                cfg.provenance("branch", spec.text),
            )
        )
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            texts = list(pool.map(_build_branch, jobs))
    else:
        texts = [_build_branch(job) for job in jobs]
    out = {}
    for spec, text in zip(specs, texts):
        rel = branch_file(spec)
        stage.path(rel).write_text(text)
        stage.wrote(rel, spec.text)
        out[spec.text] = Branch.loads(text)
    stage.close()
    return out


def _load_branch(stage: Stage, spec: AnchorSpec) -> Branch:
    return Branch.load(stage.need(branch_file(spec), "branch", spec.text))


def _polar(cfg: RunConfig, b: Branch, spec: AnchorSpec):
    if b.L > 1:
        sub = b.subsequence(0)
        b = Branch(sub[0], b.anchor, sub, (), len(sub), b.digits)
    return unwrap(b, cfg.c_offset, b.anchor[0])


def _json_dump(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def cmd_fit(cfg: RunConfig) -> dict[str, dict]:
    """Log-linear, extended and index-linear models for every stored branch."""
    stage = Stage(cfg, "fit")
    results = {}
    for spec in cfg.anchor_specs:
        b = _load_branch(stage, spec)
        p = _polar(cfg, b, spec)
        line = fit_log_linear(p)
        record = {
            "provenance": cfg.provenance("fit", spec.text),
            "anchor": spec.text,
            "elements": len(p),
            "c_offset": p.c_offset,
            "log_linear": {"m": line.m, "b": line.b},
            "index_linear": asdict(fit_index_linear(p, cfg.beta)),
            "pairwise": [list(ab) for ab in pairwise_params(p)],
        }
        if len(p) >= 8:
            ext = fit_extended(p)
            record["extended"] = {
                "a": ext.a, "b": ext.b, "c": ext.c, "d": ext.d,
                "rss": ext.rss, "linear_rss": ext.linear_rss, "improved": ext.improved,
            }
        rel = f"fits/{spec.tag}.json"
        _json_dump(stage.path(rel), record)
        stage.wrote(rel, spec.text)
        results[spec.text] = record
    stage.close()
    return results


def cmd_deviations(cfg: RunConfig) -> dict[str, dict]:
    """Per-element deviation tables and summary statistics.

    Fixed points near nontrivial zeros get spiral deviations and scaled
    statistics; real fixed points also get the straight-line and
    index-model deviations.  With several ``psi`` anchors the running
    root-deviation means are written to conjecture4.csv.
    """
    stage = Stage(cfg, "deviations")
    summaries = {}
    roots = []
    for spec in cfg.anchor_specs:
        b = _load_branch(stage, spec)
        if b.L > 1:
            log.warning("%s: deviations are computed for fixed-point anchors only", spec.text)
            continue
        fit_rel = f"fits/{spec.tag}.json"
        fit_rec = json.loads(stage.need(fit_rel, "fit", spec.text).read_text())
        p = _polar(cfg, b, spec)
        fit = SpiralFit(fit_rec["log_linear"]["m"], fit_rec["log_linear"]["b"])
        n_index = spec.index if spec.kind == "psi" else spec.zero
        rep = deviations(b, fit, p, n_index, beta=cfg.beta)
        k = list(range(len(rep.d_rel)))
        columns = {
            "k": k,
            "theta_k": [float(t) for t in p.theta[: len(k)]],
            "logr_k": [float(y) for y in p.logr[: len(k)]],
            "d_rel_k": [float(x) for x in rep.d_rel],
            "d_abs_k": list(rep.d_abs),
        }
        summary = {
            "provenance": cfg.provenance("deviations", spec.text),
            "anchor": spec.text,
            "mean": rep.mean,
            "max": rep.max,
            "mean_scaled": rep.mean_scaled if math.isfinite(rep.mean_scaled) else None,
            "max_scaled": rep.max_scaled if math.isfinite(rep.max_scaled) else None,
            "mean_abs": mpmath.nstr(rep.mean_abs, 17),
        }
        if spec.kind == "trivial":
            rho, psi = b.root, b.anchor[0]
            beta = min(cfg.beta, len(b) - 1)
            line_vals, line_mean, line_max = line_deviation(b, rho, psi, beta)
            idx = fit_index_linear(p, beta)
            model_vals, model_mean, model_max = model_deviation(p, idx, beta)
            pad = [math.nan]
            columns["d_trivial_k"] = (pad + list(line_vals) + [math.nan] * len(k))[: len(k)]
            columns["d_model_k"] = (pad + list(model_vals) + [math.nan] * len(k))[: len(k)]
            summary.update(
                trivial_mean=line_mean, trivial_max=line_max, model_mean=model_mean, model_max=model_max
            )
        rel = f"deviations/{spec.tag}.csv"
        write_csv(stage.path(rel), columns, cfg.provenance("deviations", spec.text))
        stage.wrote(rel, spec.text)
        srel = f"deviations/{spec.tag}.json"
        _json_dump(stage.path(srel), summary)
        stage.wrote(srel, spec.text)
        summaries[spec.text] = summary
        if spec.kind == "psi":
            roots.append((spec.index, float(rep.d_rel[0]), rep.d_abs[0]))
    if len(roots) > 1:
        roots.sort()
        stats = conjecture4_stats([r[1] for r in roots], [r[2] for r in roots])
        rel = "deviations/conjecture4.csv"
        write_csv(
            stage.path(rel),
            {
                "n": [r[0] for r in roots],
                "D_rel": list(stats.D_rel),
                "D_abs": list(stats.D_abs),
                "rel_within_bounds": [bool(x) for x in stats.rel_flags],
                "abs_within_bounds": [bool(x) for x in stats.abs_flags],
            },
            cfg.provenance("deviations", "conjecture4"),
        )
        stage.wrote(rel, "conjecture4")
    stage.close()
    return summaries


def cmd_rotation(cfg: RunConfig, theta: float) -> dict[str, list]:
    """Rotation discrepancy about the anchor for every stored fixed-point branch."""
    stage = Stage(cfg, "rotation")
    out = {}
    for spec in cfg.anchor_specs:
        b = _load_branch(stage, spec)
        disc = rotation_discrepancy(b, b.anchor[0], theta, cfg.ctx)
        logs = [float(mpmath.log10(abs(v))) if v != 0 else -math.inf for v in disc]
        rel = f"rotation/{spec.tag}.csv"
        write_csv(
            stage.path(rel),
            {"k": list(range(len(disc))), "log10_abs": logs},
            cfg.provenance("rotation", f"{spec.text} theta={theta!r}"),
        )
        stage.wrote(rel, spec.text)
        out[spec.text] = disc
    stage.close()
    return out


def cmd_render_spiral(cfg: RunConfig, chords: ChordMode) -> list[Path]:
    """Everted scatter plot of every stored branch, as PNG plus CSV data."""
    stage = Stage(cfg, "spiral")
    paths = []
    for spec in cfg.anchor_specs:
        b = _load_branch(stage, spec)
        p = _polar(cfg, b, spec) if b.L == 1 else None
        plot = everted_plot(b, p, chords)
        plot.title = f"everted branch, {spec.text}"
        plot.xlabel = "log r cos theta"
        plot.ylabel = "log r sin theta"
        png, csv_rel = f"images/spiral-{spec.tag}.png", f"images/spiral-{spec.tag}.csv"
        stats_plot(plot, stage.path(png), stage.path(csv_rel), {"Description": cfg.provenance("spiral", spec.text)})
        stage.wrote(png, spec.text)
        stage.wrote(csv_rel, spec.text)
        paths.append(cfg.out / png)
    stage.close()
    return paths


def _parse_box(text: str) -> Box:
    try:
        center, side = text.split(":")
        re, im = (float(x) for x in center.split(","))
        return Box(mpc(re, im), float(side))
    except ValueError:
        raise ValueError(f"bad box {text!r}; expected re,im:side") from None


def _render_function(name: str, L: int):
    if name == "rational":
        return rational_example
    if name == "zeta":
        return FunctionSpec.zeta()
    if name == "zeta-iter":
        return FunctionSpec.iterate(L)
    if name == "zeta-iter-minus-id":
        return FunctionSpec.iterate_minus_identity(L)
    raise ValueError(f"unknown function {name!r}")


def cmd_render_quadrant(cfg: RunConfig, function: str, L: int, box: Box, res: int, target: complex) -> Path:
    stage = Stage(cfg, "render")
    img = quadrant_plot(_render_function(function, L), target, box, res)
    rel = f"images/quadrant-{function}.ppm"
    img.save(stage.path(rel), _render_comment(function, L, box, res, target))
    stage.manifest.record(rel, "render", _render_hash(function, L, box, res, target))
    stage.close()
    return cfg.out / rel


def cmd_render_basin(cfg: RunConfig, box: Box, res: int, max_iter: int, alpha: float | None) -> Path:
    stage = Stage(cfg, "render")
    basin = basin_plot(box, res, max_iter=max_iter)
    rel = "images/basin.ppm"
    comment = _render_comment("basin", max_iter, box, res, alpha)
    if alpha is None:
        basin.save(stage.path(rel), comment)
    else:
        quad = quadrant_plot(FunctionSpec.zeta(), 0, box, res)
        write_ppm(stage.path(rel), overlay(basin, quad, alpha), comment)
    stage.manifest.record(rel, "render", _render_hash("basin", max_iter, box, res, alpha))
    stage.close()
    return cfg.out / rel


def _render_params(*parts) -> str:
    return " ".join(str(p) if not isinstance(p, Box) else f"box={mpmath.nstr(p.center, 15)}:{p.side}" for p in parts)


def _render_hash(*parts) -> str:
    blob = f"{__version__} {_render_params(*parts)}".encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _render_comment(*parts) -> str:
    return f"zetaspiral {__version__} stage=render config={_render_hash(*parts)} {_render_params(*parts)}"


def cmd_verify(cfg: RunConfig, suite: str) -> tuple[bool, list[str]]:
    """Run the acceptance checks and write report.txt, report.json and the quadrant image."""
    numbers = FAST if suite == "fast" else FULL
    out = cfg.out / "verify"
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    ok = True
    manifest = Manifest.load(cfg.out)
    for problem in manifest.audit():
        lines.append(f"[FAIL] manifest: {problem}")
        ok = False
    report = {"suite": suite, "version": __version__, "criteria": {}}
    for n in numbers:
        result = CHECKS[n]()
        lines.append(result.line())
        ok &= result.passed
        report["criteria"][str(n)] = {"name": result.name, "passed": result.passed, "metrics": result.metrics}
        quad = result.artifacts.get("quadrant")
        if quad is not None:
            quad.save(out / "quadrant-rational.ppm", f"zetaspiral {__version__} suite={suite}")
    report["manifest_problems"] = [l for l in lines if l.startswith("[FAIL] manifest")]
    (out / "report.txt").write_text("\n".join(lines) + "\n")
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return ok, lines


def _jsonable(v):
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, np.floating):
        return float(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (mpf, mpc)):
        return mpmath.nstr(v, 17)
    raise TypeError(f"cannot serialize {type(v).__name__}")


# ---------------------------------------------------------------------- argv


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--digits", type=int, default=RunConfig.digits, help="working precision in decimal digits")
    common.add_argument("--length", type=int, default=RunConfig.branch_length, help="branch length to build")
    common.add_argument("--beta", type=int, default=RunConfig.beta, help="elements used by statistics")
    common.add_argument("--c-offset", type=int, choices=(0, 1), default=None, help="angle branch offset")
    common.add_argument("--anchor", action="append", default=None, help="anchor spec (repeatable)")
    common.add_argument("--out", default=None, help=f"output directory (default ${ENV_OUT} or {RunConfig.output_dir})")
    common.add_argument("--zeros", default=None, help="zero ordinate table (default: packaged 100 zeros)")
    common.add_argument("--workers", type=int, default=1, help="processes for branch construction")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="zetaspiral", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest-zeros", parents=[common], help="refine a zero table")
    p.add_argument("--count", type=int, default=None, help="only the first COUNT zeros")

    p = sub.add_parser("find-psi", parents=[common], help="fixed points near nontrivial zeros")
    p.add_argument("--n", default="1-4", help="indices, e.g. 1-4 or 1,3,7")

    sub.add_parser("branch", parents=[common], help="build branches for each anchor")
    sub.add_parser("fit", parents=[common], help="fit spiral models to stored branches")
    sub.add_parser("deviations", parents=[common], help="deviation tables and statistics")

    p = sub.add_parser("rotation", parents=[common], help="rotation discrepancy about the anchor")
    p.add_argument("--theta", type=float, default=math.pi / 7)

    p = sub.add_parser("render-quadrant", parents=[common], help="quadrant plot as PPM")
    p.add_argument("--function", default="zeta", choices=("zeta", "zeta-iter", "zeta-iter-minus-id", "rational"))
    p.add_argument("--L", type=int, default=1, help="iterate count for zeta-iter functions")
    p.add_argument("--box", default="0,0:6")
    p.add_argument("--res", type=int, default=200)
    p.add_argument("--target", default="0,0", help="plot f(s) - target")

    p = sub.add_parser("render-basin", parents=[common], help="basin of the attracting fixed point as PPM")
    p.add_argument("--box", default="-5,0:20")
    p.add_argument("--res", type=int, default=100)
    p.add_argument("--max-iter", type=int, default=60)
    p.add_argument("--overlay", type=float, default=None, help="alpha for a zeta quadrant overlay")

    p = sub.add_parser("render-spiral", parents=[common], help="everted plots of stored branches")
    p.add_argument("--chords", choices=[m.value for m in ChordMode], default=ChordMode.NONE.value)

    p = sub.add_parser("verify", parents=[common], help="run the acceptance checks")
    p.add_argument("--suite", choices=("fast", "full"), default="fast")
    return parser


def config_from_args(args) -> RunConfig:
    out = args.out or os.environ.get(ENV_OUT) or RunConfig.output_dir
    anchors = tuple(args.anchor) if args.anchor else RunConfig.anchors
    cfg = RunConfig(
        digits=args.digits,
        branch_length=args.length,
        beta=args.beta,
        c_offset=args.c_offset,
        anchors=anchors,
        output_dir=out,
        zero_table_path=args.zeros,
        workers=args.workers,
    )
    return cfg.validate()


def run(args) -> int:
    cfg = config_from_args(args)
    cmd = args.command
    if cmd == "ingest-zeros":
        cmd_ingest_zeros(cfg, args.count)
    elif cmd == "find-psi":
        for n, psi in cmd_find_psi(cfg, parse_range(args.n)).items():
            print(f"{n} {mpmath.nstr(psi, 20)}")
    elif cmd == "branch":
        for text, b in cmd_branch(cfg).items():
            print(f"{text}: {len(b)} verified elements")
    elif cmd == "fit":
        for text, rec in cmd_fit(cfg).items():
            line = rec["log_linear"]
            print(f"{text}: log r = {line['m']:.6f} theta + {line['b']:.6f}")
    elif cmd == "deviations":
        for text, s in cmd_deviations(cfg).items():
            print(f"{text}: mean d_rel {s['mean']:.4g}, max d_rel {s['max']:.4g}")
    elif cmd == "rotation":
        cmd_rotation(cfg, args.theta)
    elif cmd == "render-quadrant":
        re, im = (float(x) for x in args.target.split(","))
        print(cmd_render_quadrant(cfg, args.function, args.L, _parse_box(args.box), args.res, complex(re, im)))
    elif cmd == "render-basin":
        print(cmd_render_basin(cfg, _parse_box(args.box), args.res, args.max_iter, args.overlay))
    elif cmd == "render-spiral":
        for path in cmd_render_spiral(cfg, ChordMode(args.chords)):
            print(path)
    elif cmd == "verify":
        ok, lines = cmd_verify(cfg, args.suite)
        print("\n".join(lines))
        return EXIT_OK if ok else EXIT_FAILED
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return run(args)
    except (MissingInput, StaleInput, ChecksumMismatch, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ZetaSpiralError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
