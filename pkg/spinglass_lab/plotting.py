# spinglass_lab/plotting.py

from dataclasses import dataclass
from typing import Literal, Optional, Sequence, Union
import io
import os

import matplotlib

matplotlib.use("Agg")

from matplotlib.figure import Figure  # noqa: E402

from .exceptions import InvalidInput

SVG_SETTINGS = {
    "svg.hashsalt": "spinglass-lab",
    "svg.fonttype": "path",
    "path.simplify": False,
}


@dataclass(frozen=True)
class PlotSeries:
    label: str
    x: Sequence[float]
    y: Sequence[float]
    style: Literal["line", "step", "scatter"] = "line"


def emit_plot(
    series: Sequence[PlotSeries],
    xlabel: str,
    ylabel: str,
    path: Optional[Union[str, os.PathLike]] = None,
    title: Optional[str] = None,
    description: Optional[str] = None,
) -> bytes:
    """
    Render a static SVG. Identical inputs give identical bytes.

    Writes to `path` when given and always returns the SVG bytes.
    """
    if not series:
        raise InvalidInput("emit_plot needs at least one series")
    for s in series:
        if len(s.x) == 0 or len(s.x) != len(s.y):
            raise InvalidInput(f"series '{s.label}' must be nonempty with matching x and y lengths")

    with matplotlib.rc_context(SVG_SETTINGS):
        fig = Figure(figsize=(6.0, 4.0))
        ax = fig.add_subplot()
        for s in series:
            if s.style == "scatter" or len(s.x) == 1:
                ax.plot(s.x, s.y, marker="o", linestyle="none", label=s.label)
            elif s.style == "step":
                ax.step(s.x, s.y, where="post", label=s.label)
            else:
                ax.plot(s.x, s.y, label=s.label)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.legend(loc="best")
        buffer = io.BytesIO()
        metadata = {"Date": None}
        if description:
            metadata["Description"] = description
        fig.savefig(buffer, format="svg", metadata=metadata)

    data = buffer.getvalue()
    if path is not None:
        with open(path, "wb") as handle:
            handle.write(data)
    return data
