"""Minimal deterministic SVG output.

Canvas is fixed at 800x800 pixels with a 60px margin on every side; the
data box [xlim] x [ylim] maps affinely onto the inner region with the y
axis flipped (SVG y grows downward).  Output is plain XML with no
timestamps, so identical inputs give identical bytes.
"""

from __future__ import annotations

import numpy as np

__all__ = ["SvgCanvas", "scatter_plot", "line_chart", "density_grid"]

SIZE = 800
MARGIN = 60

_PALETTE = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
]


def class_color(label: int) -> str:
    if label < 0:
        return "#444444"
    return _PALETTE[label % len(_PALETTE)]


class SvgCanvas:
    def __init__(self, xlim: tuple[float, float], ylim: tuple[float, float], title: str = ""):
        if xlim[0] >= xlim[1] or ylim[0] >= ylim[1]:
            raise ValueError("canvas limits must be increasing")
        self.xlim = xlim
        self.ylim = ylim
        self._parts: list[str] = []
        self._parts.append(
            f'<rect x="{MARGIN}" y="{MARGIN}" width="{SIZE - 2 * MARGIN}" '
            f'height="{SIZE - 2 * MARGIN}" fill="none" stroke="#222222" stroke-width="1"/>'
        )
        if title:
            self._parts.append(
                f'<text x="{SIZE // 2}" y="{MARGIN - 20}" text-anchor="middle" '
                f'font-family="monospace" font-size="16">{_escape(title)}</text>'
            )

    def px(self, x: float, y: float) -> tuple[float, float]:
        """Data coordinates -> pixel coordinates."""
        w = SIZE - 2 * MARGIN
        fx = (x - self.xlim[0]) / (self.xlim[1] - self.xlim[0])
        fy = (y - self.ylim[0]) / (self.ylim[1] - self.ylim[0])
        return MARGIN + fx * w, SIZE - MARGIN - fy * w

    def scatter(self, points: np.ndarray, color: str = "#1f77b4", radius: float = 2.0, opacity: float = 0.8):
        for x, y in np.asarray(points, dtype=float):
            px, py = self.px(x, y)
            self._parts.append(
                f'<circle cx="{px:.2f}" cy="{py:.2f}" r="{radius}" fill="{color}" fill-opacity="{opacity}"/>'
            )

    def polyline(self, points: np.ndarray, color: str = "#d62728", width: float = 1.0, opacity: float = 1.0):
        coords = " ".join(
            "{:.2f},{:.2f}".format(*self.px(x, y)) for x, y in np.asarray(points, dtype=float)
        )
        self._parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" '
            f'stroke-width="{width}" stroke-opacity="{opacity}"/>'
        )

    def cells(self, values: np.ndarray):
        """Grayscale cell grid over the whole data box; values normalized to [0,1]."""
        values = np.asarray(values, dtype=float)
        vmax = values.max()
        norm = values / vmax if vmax > 0 else values
        rows, cols = values.shape
        w = SIZE - 2 * MARGIN
        cw, ch = w / cols, w / rows
        for i in range(rows):
            for j in range(cols):
                shade = int(255 - 215 * norm[i, j])
                px = MARGIN + j * cw
                py = SIZE - MARGIN - (i + 1) * ch
                self._parts.append(
                    f'<rect x="{px:.2f}" y="{py:.2f}" width="{cw:.2f}" height="{ch:.2f}" '
                    f'fill="rgb({shade},{shade},{shade})" stroke="none"/>'
                )

    def label_axes(self, xlabel: str = "", ylabel: str = ""):
        if xlabel:
            self._parts.append(
                f'<text x="{SIZE // 2}" y="{SIZE - MARGIN // 3}" text-anchor="middle" '
                f'font-family="monospace" font-size="13">{_escape(xlabel)}</text>'
            )
        if ylabel:
            self._parts.append(
                f'<text x="{MARGIN // 3}" y="{SIZE // 2}" text-anchor="middle" '
                f'font-family="monospace" font-size="13" '
                f'transform="rotate(-90 {MARGIN // 3} {SIZE // 2})">{_escape(ylabel)}</text>'
            )

    def tostring(self) -> str:
        body = "\n".join(self._parts)
        return (
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" '
            f'viewBox="0 0 {SIZE} {SIZE}">\n<rect width="{SIZE}" height="{SIZE}" fill="white"/>\n'
            f"{body}\n</svg>\n"
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.tostring())


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _limits(points: np.ndarray, pad: float = 0.1) -> tuple[tuple[float, float], tuple[float, float]]:
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    span = np.maximum(hi - lo, 1e-9)
    return (
        (float(lo[0] - pad * span[0]), float(hi[0] + pad * span[0])),
        (float(lo[1] - pad * span[1]), float(hi[1] + pad * span[1])),
    )


def scatter_plot(path, points: np.ndarray, labels=None, title: str = "", background=None):
    """Scatter of 2-d points colored by class; optional density cell background."""
    points = np.asarray(points, dtype=float)[:, :2]
    xlim, ylim = _limits(points) if background is None else background[1:]
    canvas = SvgCanvas(xlim, ylim, title=title)
    if background is not None:
        canvas.cells(background[0])
    if labels is None:
        canvas.scatter(points)
    else:
        labels = np.asarray(labels)
        for lab in np.unique(labels):
            canvas.scatter(points[labels == lab], color=class_color(int(lab)))
    canvas.save(path)


def line_chart(path, series: dict[str, np.ndarray], title: str = "", log_y: bool = False,
               xlabel: str = "step", ylabel: str = "value"):
    """One polyline per named series over a shared index axis."""
    ys = [np.asarray(v, dtype=float) for v in series.values()]
    if log_y:
        ys = [np.log10(np.maximum(v, 1e-12)) for v in ys]
        ylabel = f"log10 {ylabel}"
    ymin = min(float(v.min()) for v in ys)
    ymax = max(float(v.max()) for v in ys)
    if ymax <= ymin:
        ymax = ymin + 1.0
    xmax = max(len(v) for v in ys)
    canvas = SvgCanvas((0.0, float(xmax)), (ymin, ymax), title=title)
    canvas.label_axes(xlabel, ylabel)
    for (name, _), v, color in zip(series.items(), ys, _PALETTE):
        pts = np.column_stack([np.arange(len(v)), v])
        canvas.polyline(pts, color=color, width=1.5)
    return canvas.save(path)


def density_grid(spec, cells: int = 60, span: float = 1.6):
    """Analytic density evaluated on a cell grid, for scatter backgrounds."""
    from .datasets import true_log_density

    if not spec.has_analytic_density():
        return None
    means, _ = spec.component_arrays()
    extent = span * max(1.0, float(np.abs(np.asarray(means) * spec.scale).max()) * 1.5)
    xs = np.linspace(-extent, extent, cells)
    gx, gy = np.meshgrid(xs, xs)
    points = np.zeros((cells * cells, spec.n))
    points[:, 0] = gx.ravel()
    points[:, 1] = gy.ravel()
    grid = np.exp(true_log_density(spec, points)).reshape(cells, cells)
    return grid, (-extent, extent), (-extent, extent)
