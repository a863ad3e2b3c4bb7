from pathlib import Path

import pytest

from pstokes_lab.plots import emit_infsup_plot, emit_plots, spectrum_svg
from pstokes_lab.spectral import SpectralReport

GOLDEN = Path(__file__).parent / "golden"


def report(eps, lmin, lmax, lo, hi, schur="mnu"):
    return SpectralReport(eps, lmin, lmax, lo, hi, 0.4, 0.4, 1.0, "newton", "p2p1", schur)


def test_one_row_has_two_markers_and_two_lines():
    svg = spectrum_svg([report(1e-2, 0.5, 2.0, 0.25, 4.0)])
    assert svg.count("<polygon") == 2
    assert svg.count("<polyline") == 2
    assert 'stroke-dasharray="6,4"' in svg and 'stroke-dasharray="2,3"' in svg


def test_one_row_hand_coordinates():
    # x decade [1e-2, 1e-1] puts eps=1e-2 on the left edge (70); y decades [1e-1, 1e1]
    # map log10(y) = -1..1 onto pixel rows 310..30
    svg = spectrum_svg([report(1e-2, 0.5, 2.0, 0.25, 4.0)])
    # lambda_max = 2: row 310 - 280 * (log10(2) + 1) / 2 = 127.86, up triangle of half-size 5
    assert '<polygon points="70.00,122.86 65.00,132.86 75.00,132.86" fill="#c0392b"/>' in svg
    # upper bound 4 spans the full width at row 85.71
    assert 'points="70.00,85.71 460.00,85.71"' in svg


def test_matches_golden():
    rows = [
        report(1e-1, 0.30, 1.5, 0.16, 6.0),
        report(1e-2, 0.28, 1.6, 0.16, 6.0),
        report(1e-3, 0.27, 1.6, 0.16, 6.0),
    ]
    assert spectrum_svg(rows, "S~ = M_nu, P2P1, newton") == (GOLDEN / "spectrum_three_rows.svg").read_text()


def test_emit_is_deterministic(tmp_path):
    rows = [report(1e-1, 0.3, 1.5, 0.16, 6.0), report(1e-1, 0.01, 0.2, 0.001, 0.6, "m")]
    a = emit_plots(rows, tmp_path / "a" / "ms")
    b = emit_plots(rows, tmp_path / "b" / "ms")
    assert [p.name for p in a] == ["ms_m.svg", "ms_mnu.svg"]
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()


def test_empty_report_warns(tmp_path):
    with pytest.warns(UserWarning):
        assert emit_plots([], tmp_path / "x") == []
    with pytest.warns(UserWarning):
        assert emit_infsup_plot([], tmp_path / "y") == []
    assert not any(tmp_path.iterdir())


def test_infsup_plot(tmp_path):
    rows = [
        dict(mesh="a", h=0.25, c0=0.37, c_nu=0.40),
        dict(mesh="a", h=0.25, c0=0.37, c_nu=0.38),
        dict(mesh="b", h=0.125, c0=0.36, c_nu=0.41),
    ]
    (path,) = emit_infsup_plot(rows, tmp_path / "infsup")
    svg = path.read_text()
    assert svg.count("<circle") == 2
    assert svg.count("<polygon") == 2
