"""Self-contained SVG plots with the plotted data embedded as JSON metadata."""

from __future__ import annotations

import json
from pathlib import Path
from xml.sax.saxutils import escape

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# fixed hash salt and no date stamp keep the SVG bytes reproducible
matplotlib.rcParams["svg.hashsalt"] = "parflow"
matplotlib.rcParams["svg.fonttype"] = "none"


def line_plot(path, series: dict, xlabel: str, ylabel: str, title: str = "", logx: bool = False,
              logy: bool = False, hline: float | None = None) -> Path:
    """``series`` maps a label to ``(x, y)``; the data table is embedded in the SVG."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, (x, y) in series.items():
        ax.plot(x, y, marker="o", label=label)
    if hline is not None:
        ax.axhline(hline, color="grey", ls="--", lw=1)
    ax.set_xscale("log" if logx else "linear")
    ax.set_yscale("log" if logy else "linear")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if len(series) > 1:
        ax.legend()
    fig.tight_layout()
    return _save(fig, path, {k: {"x": list(map(float, x)), "y": list(map(float, y))} for k, (x, y) in series.items()})


def scatter_plot(path, x, y, xlabel: str, ylabel: str, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.scatter(x, y, s=8)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path, {"x": list(map(float, x)), "y": list(map(float, y))})


def _save(fig, path, data) -> Path:
    path = Path(path)
    buf = path.with_suffix(".tmp.svg")
    fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": "parflow"})
    plt.close(fig)
    svg = buf.read_text()
    buf.unlink()
    meta = f"<metadata id=\"parflow-data\">{escape(json.dumps(data, sort_keys=True))}</metadata>"
    svg = svg.replace("</svg>", meta + "\n</svg>", 1)
    path.write_text(svg)
    return path


def embedded_data(path) -> dict:
    """Read back the JSON table embedded by this module."""
    from xml.sax.saxutils import unescape

    text = Path(path).read_text()
    start = text.index('<metadata id="parflow-data">') + len('<metadata id="parflow-data">')
    end = text.index("</metadata>", start)
    return json.loads(unescape(text[start:end]))
