import json
import logging
import shutil
from pathlib import Path

import mpmath
import pytest

from zetaspiral import cli
from zetaspiral.cli import (
    EXIT_INPUT,
    EXIT_OK,
    EXIT_USAGE,
    AnchorSpec,
    Manifest,
    RunConfig,
    main,
    parse_range,
)
from zetaspiral.errors import ChecksumMismatch, MissingInput, StaleInput
from zetaspiral.mpcore import PrecisionContext, zeta

DIGITS = 40
ANCHORS = ["psi:1", "psi:2", "trivial:20"]


def common(out, zeros, *extra):
    args = ["--digits", str(DIGITS), "--length", "24", "--beta", "20", "--out", str(out), "--zeros", str(zeros)]
    for a in ANCHORS:
        args += ["--anchor", a]
    return args + list(extra)


@pytest.fixture(scope="module")
def zero_file(tmp_path_factory):
    packaged = Path(cli.__file__).parent / "data" / "zeros100.txt"
    path = tmp_path_factory.mktemp("zeros") / "zeros5.txt"
    path.write_text("\n".join(packaged.read_text().splitlines()[:5]) + "\n")
    return path


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory, zero_file):
    out = tmp_path_factory.mktemp("run")
    for command, extra in (
        ("ingest-zeros", []),
        ("find-psi", ["--n", "1-2"]),
        ("branch", []),
        ("fit", []),
        ("deviations", []),
        ("rotation", []),
        ("render-spiral", ["--chords", "zeta"]),
    ):
        assert main([command] + common(out, zero_file, *extra)) == EXIT_OK, command
    return out


# ----------------------------------------------------------------- parsing


@pytest.mark.parametrize(
    "text, kind, index, zero",
    [
        ("psi:3", "psi", 3, 3),
        ("trivial:20", "trivial", 10, 1),
        ("trivial:24", "trivial", 12, 3),
        ("trivial:22:2", "trivial", 11, 2),
        ("cardioid:-2.5,0.1:0.2", "cardioid", 1, 1),
        ("cycle:3:17.6,14.2:0.02:2", "cycle", 3, 2),
    ],
)
def test_anchor_parse(text, kind, index, zero):
    spec = AnchorSpec.parse(text)
    assert (spec.kind, spec.index, spec.zero) == (kind, index, zero)
    assert AnchorSpec.parse(spec.text) == spec


@pytest.mark.parametrize(
    "text", ["psi", "psi:x", "psi:0", "trivial:21", "cardioid:1:0.1", "cycle:3:1,1:-1", "orbit:2"]
)
def test_anchor_parse_rejects(text):
    with pytest.raises(ValueError):
        AnchorSpec.parse(text)


def test_anchor_tags_are_distinct():
    texts = ["psi:1", "psi:2", "trivial:20", "trivial:20:2", "cycle:3:1,1:0.1", "cycle:3:1,1:0.2"]
    tags = {AnchorSpec.parse(t).tag for t in texts}
    assert len(tags) == len(texts)


def test_parse_range():
    assert parse_range("1-4") == [1, 2, 3, 4]
    assert parse_range("1,3,7") == [1, 3, 7]


@pytest.mark.parametrize(
    "field, value",
    [("digits", 10), ("branch_length", 1), ("beta", 0), ("c_offset", 2), ("workers", 0), ("anchors", ("bad",))],
)
def test_run_config_validation(field, value):
    with pytest.raises(ValueError):
        RunConfig(**{field: value}).validate()


def test_run_config_missing_zero_table(tmp_path):
    with pytest.raises(MissingInput):
        RunConfig(zero_table_path=str(tmp_path / "none.txt")).validate()


def test_stage_hash_depends_only_on_stage_fields():
    base = RunConfig()
    assert base.stage_hash("zeros") == RunConfig(branch_length=7, beta=3).stage_hash("zeros")
    assert base.stage_hash("zeros") != RunConfig(digits=501).stage_hash("zeros")
    assert base.stage_hash("branch", "psi:1") != base.stage_hash("branch", "psi:2")


def test_usage_errors_exit_2(tmp_path):
    assert main(["branch", "--digits", "5", "--out", str(tmp_path)]) == EXIT_USAGE
    assert main(["branch", "--anchor", "psi:0", "--out", str(tmp_path)]) == EXIT_USAGE


# ---------------------------------------------------------------- pipeline


def test_ingest_residuals_below_tolerance(pipeline):
    ctx = PrecisionContext(digits=DIGITS)
    text = (pipeline / "zeros.txt").read_text()
    assert text.startswith("# zetaspiral")
    rows = [l.split() for l in text.splitlines() if l.strip() and not l.startswith("#")]
    assert len(rows) == 5
    with ctx.workdps():
        for row in rows:
            rho = mpmath.mpc(row[0], row[1])
            assert abs(zeta(rho, ctx)) < ctx.residual_tol
            assert mpmath.mpf(row[2]) < ctx.residual_tol


def test_pipeline_outputs(pipeline):
    for rel in [
        "psi.txt",
        "branches/psi1.txt",
        "branches/trivial20-rho1.txt",
        "fits/psi1.json",
        "deviations/psi1.csv",
        "deviations/conjecture4.csv",
        "rotation/psi1.csv",
        "images/spiral-psi1.png",
    ]:
        assert (pipeline / rel).is_file(), rel
    header = (pipeline / "deviations/psi1.csv").read_text().splitlines()
    columns = next(l for l in header if not l.startswith("#")).split(",")
    assert columns[:5] == ["k", "theta_k", "logr_k", "d_rel_k", "d_abs_k"]
    fit = json.loads((pipeline / "fits/psi1.json").read_text())
    assert "log_linear" in fit
    assert Manifest.load(pipeline).audit() == []


def test_every_output_carries_provenance(pipeline):
    for rel in ["zeros.txt", "psi.txt", "branches/psi1.txt", "deviations/psi1.csv"]:
        assert (pipeline / rel).read_text().startswith("# zetaspiral"), rel


def test_rerun_reproduces_deleted_intermediate(pipeline, zero_file):
    target = pipeline / "branches" / "psi1.txt"
    before = target.read_bytes()
    target.unlink()
    assert main(["branch"] + common(pipeline, zero_file)) == EXIT_OK
    assert target.read_bytes() == before


def test_tampered_input_exits_3(pipeline, zero_file, tmp_path):
    copy = tmp_path / "run"
    shutil.copytree(pipeline, copy)
    branch = copy / "branches" / "psi1.txt"
    branch.write_text(branch.read_text().replace("1", "2", 1))
    assert main(["fit"] + common(copy, zero_file)) == EXIT_INPUT
    with pytest.raises(ChecksumMismatch):
        Manifest.load(copy).require("branches/psi1.txt", "anything")


def test_stale_input_exits_3(pipeline, zero_file):
    # A different precision changes the branch-stage hash of stored branches.
    args = common(pipeline, zero_file)
    args[args.index("--digits") + 1] = str(DIGITS + 5)
    assert main(["fit"] + args) == EXIT_INPUT
    cfg = RunConfig(digits=DIGITS + 5, zero_table_path=str(zero_file))
    with pytest.raises(StaleInput):
        Manifest.load(pipeline).require("zeros.txt", cfg.stage_hash("zeros"))


def test_missing_input_exits_3(tmp_path, zero_file):
    assert main(["branch"] + common(tmp_path, zero_file)) == EXIT_INPUT


def test_empty_zero_table_warns(tmp_path, caplog):
    empty = tmp_path / "empty.txt"
    empty.write_text("")
    cfg = RunConfig(digits=DIGITS, output_dir=str(tmp_path / "out"), zero_table_path=str(empty)).validate()
    with caplog.at_level(logging.WARNING):
        assert cli.cmd_ingest_zeros(cfg) == []
    assert "empty" in caplog.text


def test_render_quadrant_and_basin(tmp_path):
    out = tmp_path / "img"
    base = ["--digits", "30", "--out", str(out)]
    assert main(["render-quadrant", *base, "--function", "rational", "--res", "32"]) == EXIT_OK
    assert main(["render-basin", *base, "--box=-0.3,0:0.2", "--res", "16", "--overlay", "0.5"]) == EXIT_OK
    ppms = sorted(p.name for p in (out / "images").glob("*.ppm"))
    assert len(ppms) == 2
    for name in ppms:
        assert (out / "images" / name).read_bytes().startswith(b"P6\n# zetaspiral")
