import numpy as np
import pytest
from hypothesis import given, strategies as st
from mpmath import mpc

from zetaspiral.errors import DimensionMismatch
from zetaspiral.mpcore import PrecisionContext
from zetaspiral.orbit import Fate, backward_branch
from zetaspiral.render import (
    ChordMode,
    PlotSpec,
    Series,
    basin_plot,
    everted_plot,
    overlay,
    quadrant_plot,
    rational_example,
    read_ppm,
    stats_plot,
    write_ppm,
)
from zetaspiral.rootfind import (
    PALE_CLASSES,
    RICH_CLASSES,
    Box,
    Cycle,
    QuadrantClass,
    find_psi_rho,
    refine_zero,
)


@pytest.fixture(scope="module")
def rational_quad():
    return quadrant_plot(rational_example, 0, Box(mpc(0), 6.0), 120, disk_radius=10)


@pytest.fixture(scope="module")
def small_branch():
    ctx = PrecisionContext(digits=40)
    rho = refine_zero("14.1347", ctx)
    psi = find_psi_rho(1, ctx)
    return backward_branch(rho, Cycle.fixed_point(psi, ctx), 12, ctx)


@pytest.mark.parametrize("z", [1, 1j, -1])
def test_rational_zeros_show_all_rich_colours(rational_quad, z):
    assert RICH_CLASSES <= rational_quad.neighborhood(mpc(z))


def test_rational_pole_shows_all_pale_colours(rational_quad):
    assert PALE_CLASSES <= rational_quad.neighborhood(mpc(-1j))


def test_quadrant_plot_orientation(rational_quad):
    # Top-left corner is -3 + 3i; the pixel lookup must agree with row 0 at the top.
    assert rational_quad.pixel_of(mpc(-2.99, 2.99)) == (0, 0)
    assert rational_quad.pixel_of(mpc(2.99, -2.99)) == (119, 119)


def test_quadrant_plot_rejects_tiny_resolution():
    with pytest.raises(ValueError):
        quadrant_plot(rational_example, 0, Box(mpc(0), 1.0), 8)


def test_quadrant_plot_marks_evaluation_failures():
    def broken(s, ctx):
        raise ZeroDivisionError

    quad = quadrant_plot(broken, 0, Box(mpc(0), 1.0), 16)
    assert {quad.classes(i, j) for i in range(16) for j in range(16)} == {QuadrantClass.ERROR}


def test_ppm_round_trip_with_comment(tmp_path, rational_quad):
    path = tmp_path / "q.ppm"
    rational_quad.save(path, comment="line one\nline two")
    data = path.read_bytes()
    assert data.startswith(b"P6\n# line one\n# line two\n")
    assert np.array_equal(read_ppm(path), rational_quad.to_rgb())


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_ppm_round_trip_arbitrary_pixels(h, w, seed):
    import tempfile
    from pathlib import Path

    rgb = np.random.default_rng(seed).integers(0, 256, size=(h, w, 3), dtype=np.uint8)
    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "x.ppm"
        write_ppm(path, rgb, comment="c")
        assert np.array_equal(read_ppm(path), rgb)


def test_write_ppm_rejects_wrong_shape(tmp_path):
    with pytest.raises(DimensionMismatch):
        write_ppm(tmp_path / "x.ppm", np.zeros((4, 4), dtype=np.uint8))


def test_read_ppm_rejects_other_formats(tmp_path):
    path = tmp_path / "x.pgm"
    path.write_bytes(b"P5\n2 2\n255\n\0\0\0\0")
    with pytest.raises(ValueError):
        read_ppm(path)


@pytest.fixture(scope="module")
def small_basin():
    return basin_plot(Box(mpc(-0.3), 0.2), 16, max_iter=80)


def test_basin_near_phi_converges(small_basin):
    fates = {small_basin.fate(i, j) for i in range(16) for j in range(16)}
    assert fates == {Fate.CONVERGED_TO_PHI}


def test_basin_far_left_escapes():
    basin = basin_plot(Box(mpc(-40, 0), 2.0), 16, max_iter=10)
    assert basin.fate(8, 8) is Fate.ESCAPED


def test_overlay_endpoints_and_blend(small_basin):
    quad = quadrant_plot(rational_example, 0, small_basin.box, 16)
    assert np.array_equal(overlay(small_basin, quad, 0.0), small_basin.to_rgb())
    assert np.array_equal(overlay(small_basin, quad, 1.0), quad.to_rgb())
    mid = overlay(small_basin, quad, 0.5).astype(int)
    lo = np.minimum(small_basin.to_rgb(), quad.to_rgb())
    hi = np.maximum(small_basin.to_rgb(), quad.to_rgb())
    assert np.all(mid >= lo) and np.all(mid <= hi)


def test_overlay_rejects_mismatched_grids(small_basin):
    quad = quadrant_plot(rational_example, 0, Box(mpc(0), 6.0), 16)
    with pytest.raises(DimensionMismatch):
        overlay(small_basin, quad, 0.5)
    with pytest.raises(ValueError):
        overlay(small_basin, quad, 1.5)


def test_plot_spec_validation():
    with pytest.raises(DimensionMismatch):
        PlotSpec([Series("a", [0, 1], [0])])
    with pytest.raises(ValueError):
        PlotSpec([Series("a", [0, float("nan")], [0, 1])])


def test_everted_plot_chords(small_branch):
    spec = everted_plot(small_branch, chords=ChordMode.ZETA_MAP)
    assert len(spec.series) == 1
    assert len(spec.series[0].x) == len(small_branch)
    assert len(spec.segments) == len(small_branch) - 1
    plain = everted_plot(small_branch)
    assert plain.segments == []


def test_stats_plot_writes_deterministic_files(tmp_path, small_branch):
    spec = everted_plot(small_branch, chords=ChordMode.ZETA_MAP)
    outputs = []
    for name in ("a", "b"):
        png, csv = tmp_path / f"{name}.png", tmp_path / f"{name}.csv"
        stats_plot(spec, png, csv, metadata={"Comment": "test"})
        assert png.read_bytes().startswith(b"\x89PNG")
        outputs.append((png.read_bytes(), csv.read_bytes()))
    assert outputs[0] == outputs[1]
    rows = (tmp_path / "a.csv").read_text().strip().splitlines()
    assert rows[0].split(",") == ["label", "kind", "x", "y"]
    assert len(rows) == 1 + len(small_branch)
