import json
import re
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from orthorot import report

GOLDEN = Path(__file__).parent / "golden" / "lines.svg"


def golden_series():
    x = list(range(1, 28))
    return [
        ("quartimax", x, [9 - 0.3 * i for i in range(27)]),
        ("varimax", x, [9 - 0.32 * i for i in range(27)]),
        ("equamax", x, [8.5 - 0.3 * i if i != 5 else float("nan") for i in range(27)]),
        ("parsimax", x, [8.0 - 0.25 * i for i in range(27)]),
    ]


def test_single_series():
    svg = report.emit_svg_lines([("a", [1, 2], [1, 2])], "x", "y")
    lines = re.findall(r'<polyline [^>]*points="([^"]*)"', svg)
    assert len(lines) == 1 and len(lines[0].split()) == 2
    assert 'viewBox="0 0 800 500"' in svg


def test_legend_order_and_count():
    svg = report.emit_svg_lines(golden_series(), "stage", "mean")
    assert svg.count("<polyline") == 4
    pos = [svg.index(f">{name}</text>") for name in ("quartimax", "varimax", "equamax", "parsimax")]
    assert pos == sorted(pos)
    # NaN point skipped
    pts = re.findall(r'points="([^"]*)"', svg)
    assert len(pts[2].split()) == 26


def test_golden_file(tmp_path):
    out = tmp_path / "lines.svg"
    report.emit_svg_lines(golden_series(), "stage", "mean perfect simple rows", out, title="golden")
    assert out.read_bytes() == GOLDEN.read_bytes()


def test_empty_series_rejected():
    with pytest.raises(ValueError):
        report.emit_svg_lines([], "x", "y")


def test_ticks_are_numeric():
    svg = report.emit_svg_lines([("a", [1, 27], [0.5, 3.5])], "x", "y")
    labels = re.findall(r'text-anchor="(?:middle|end)">([-0-9.e]+)</text>', svg)
    assert len(labels) >= 6
    assert all(float(v) == float(v) for v in labels)


finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@given(arrays(float, st.tuples(st.integers(1, 6), st.integers(1, 4)), elements=finite), st.booleans(), st.booleans())
def test_matrix_round_trip(tmp_path_factory, m, use_json, with_header):
    d = tmp_path_factory.mktemp("rt")
    path = d / ("m.json" if use_json else "m.csv")
    header = [f"F{j + 1}" for j in range(m.shape[1])] if with_header else None
    report.write_matrix(path, m, header)
    back, h = report.read_matrix(path)
    assert np.array_equal(back, m)
    assert h == header


def test_read_matrix_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2\n3\n")
    with pytest.raises(report.MatrixFileError):
        report.read_matrix(bad)
    bad.write_text("1,2\n3,x\n")
    with pytest.raises(report.MatrixFileError):
        report.read_matrix(bad)
    bad.write_text("1,nan\n3,4\n")
    with pytest.raises(report.MatrixFileError):
        report.read_matrix(bad)
    bad.write_text("")
    with pytest.raises(report.MatrixFileError):
        report.read_matrix(bad)


def test_dumps_cleans_numpy():
    text = report.dumps({"a": np.float64(1.5), "b": np.arange(2), "c": float("nan"), "d": np.bool_(True)})
    assert json.loads(text) == {"a": 1.5, "b": [0, 1], "c": None, "d": True}


def test_manifest_is_deterministic(tmp_path, monkeypatch):
    f = tmp_path / "out.csv"
    f.write_text("1\n")
    monkeypatch.delenv("SOURCE_DATE_EPOCH", raising=False)
    m1 = report.build_manifest(["value"], 3, {"feas": 1e-8}, outputs=[f])
    m2 = report.build_manifest(["value"], 3, {"feas": 1e-8}, outputs=[f])
    assert report.dumps(m1) == report.dumps(m2)
    assert m1["timestamps"]["source_date_epoch"] is None
    assert m1["outputs"]["out.csv"] == report.sha256_file(f)
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    assert report.build_manifest([], 0, {})["timestamps"]["source_date_epoch"] == 1700000000
