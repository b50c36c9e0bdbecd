import re
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from choquard.errors import ConfigError
from choquard.field import make_box_domain
from choquard.energy import make_context
from choquard.plotting import emit_plot
from choquard.varsolve import SolveOptions, minimize_quotient, smooth_random_field

SVG = "{http://www.w3.org/2000/svg}"


def _parse(path):
    root = ET.parse(path).getroot()
    assert root.tag == f"{SVG}svg"
    return root


def test_single_point_series(tmp_path):
    # [TRIVIAL] one marker, still a complete document
    for kind in ("trace", "rate_fit", "radial_profile"):
        p = emit_plot({"x": [0.1], "y": [0.5]}, kind, tmp_path / f"{kind}.svg")
        _parse(p)


def test_rate_fit_slope_annotated(tmp_path):
    # [TRIVIAL] fabricated eps^2 data
    eps = np.geomspace(0.4, 0.025, 6)
    p = emit_plot({"x": eps, "y": 3.0 * eps**2}, "rate_fit", tmp_path / "fit.svg")
    assert "slope 2.000" in p.read_text()


def test_empty_series_rejected(tmp_path):
    with pytest.raises(ConfigError):
        emit_plot({"y": []}, "trace", tmp_path / "e.svg")
    with pytest.raises(ConfigError):
        emit_plot({"x": [1, 2], "y": [1.0]}, "trace", tmp_path / "e.svg")
    with pytest.raises(ValueError):
        emit_plot({"y": [1.0]}, "histogram", tmp_path / "e.svg")


def test_deterministic_bytes(tmp_path):
    series = {"x": [0.4, 0.2, 0.1], "y": [0.16, 0.04, 0.01]}
    a = emit_plot(series, "rate_fit", tmp_path / "a.svg").read_bytes()
    b = emit_plot(series, "rate_fit", tmp_path / "b.svg").read_bytes()
    assert a == b


def test_solver_trace_polyline_monotone(tmp_path):
    # [DERIVED] the drawn trace of a descent run never goes up
    d = make_box_domain(3, 1.0, 10)
    rep = minimize_quotient(make_context(d, 1.0, 2.0), smooth_random_field(d, 2), SolveOptions(max_iters=25))
    p = emit_plot({"y": rep.trace}, "trace", tmp_path / "t.svg")
    text = p.read_text()
    paths = re.findall(r'<path d="(M [^"]+)"[^>]*style="fill: none; stroke: #1f77b4', text)
    assert paths
    ys = [float(v) for v in re.findall(r"[ML] [-\d.]+ ([-\d.]+)", paths[0])]
    # SVG y grows downwards, so a nonincreasing objective draws nondecreasing y
    assert len(ys) == len(rep.trace)
    assert all(b >= a - 1e-9 for a, b in zip(ys, ys[1:]))
