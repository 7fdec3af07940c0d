import xml.etree.ElementTree as ET

import numpy as np
import pytest

from pexpbayes.svg import Figure, nice_ticks

NS = "{http://www.w3.org/2000/svg}"


class TestTicks:
    def test_round_values(self):
        np.testing.assert_allclose(nice_ticks(0.0, 1.0), [0, 0.2, 0.4, 0.6, 0.8, 1.0])

    def test_covers_range(self):
        t = nice_ticks(-0.37, 2.91)
        assert t[0] >= -0.37 and t[-1] <= 2.91
        assert len(t) >= 3

    def test_degenerate(self):
        assert nice_ticks(1.0, 1.0).size > 0
        assert nice_ticks(float("nan"), 1.0).size == 0


class TestFigure:
    def test_well_formed(self, tmp_path):
        F = Figure(2, 2, title="demo")
        x = np.linspace(0, 1, 50)
        for r in range(2):
            for c in range(2):
                P = F.panel(r, c, f"panel {r}{c} <&>")
                P.band(x, np.sin(x) - 0.1, np.sin(x) + 0.1)
                P.line(x, np.sin(x))
        path = F.save(tmp_path / "f.svg")
        root = ET.parse(path).getroot()
        assert root.tag == NS + "svg"
        assert len(root.findall(f"{NS}polygon")) == 4
        assert len(root.findall(f"{NS}polyline")) == 4

    def test_band_drawn_below_lines(self):
        F = Figure()
        P = F.panel()
        P.line([0, 1], [0, 1])
        P.band([0, 1], [0, 0], [1, 1])
        s = F.to_string()
        assert s.index("<polygon") < s.index("<polyline")

    def test_deterministic(self):
        def make():
            F = Figure()
            F.panel().line([0, 1, 2], [3.0, 1.0, 2.0])
            return F.to_string()

        assert make() == make()

    def test_nonfinite_values_ignored_for_limits(self):
        F = Figure()
        P = F.panel()
        P.line([0, 1], [0.0, np.nan])
        assert P.ylim == (0.0, 0.0)
        assert "<svg" in F.to_string()


@pytest.mark.parametrize("rows, cols", [(1, 1), (2, 3)])
def test_canvas_size(rows, cols):
    F = Figure(rows, cols, panel_w=100, panel_h=50)
    root = ET.fromstring(F.to_string())
    assert root.get("width") == str(100 * cols)
    assert root.get("height") == str(50 * rows)
