import pytest

from spinglass_lab.exceptions import InvalidInput
from spinglass_lab.plotting import PlotSeries, emit_plot

SERIES = [
    PlotSeries("Q_N/N", [1, 2, 3, 4], [0.5, 0.75, 0.8, 0.9]),
    PlotSeries("running sup", [1, 2, 3, 4], [0.5, 0.75, 0.8, 0.9], "step"),
]


def test_svg_is_deterministic():
    first = emit_plot(SERIES, "N", "Q_N/N", title="appendix-b", description="seed=0")
    second = emit_plot(SERIES, "N", "Q_N/N", title="appendix-b", description="seed=0")
    assert first == second
    assert first.lstrip().startswith(b"<?xml")


def test_svg_written_to_path(tmp_path):
    path = tmp_path / "plot.svg"
    data = emit_plot([PlotSeries("point", [1.0], [2.0], "scatter")], "x", "y", path=path)
    assert path.read_bytes() == data


def test_empty_series_rejected():
    with pytest.raises(InvalidInput):
        emit_plot([], "x", "y")


def test_mismatched_lengths_rejected():
    with pytest.raises(InvalidInput) as exc_info:
        emit_plot([PlotSeries("bad", [1, 2], [1])], "x", "y")
    assert "'bad'" in exc_info.value.detail
