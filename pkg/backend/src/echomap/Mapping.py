import json
import logging
import os
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from matplotlib import colormaps
from matplotlib.colors import Normalize, to_rgb
from PIL import Image, ImageDraw
from scipy.interpolate import RegularGridInterpolator

from echomap.DefectClass import DefectClass, ZONE_ORDER
from echomap.EchoMapException import GridException, InvalidSpecException
from echomap.Figures import new_figure, save_figure
from echomap.Spectral import PeakReading
from echomap.SynthLab import zone_bounds

logger = logging.getLogger(__name__)

METHODS = {"bilinear": ("linear", 2), "bicubic": ("cubic", 4)}
COORD_DECIMALS = 9


@dataclass(eq=False)
class PeakGrid:
    rows: int
    cols: int
    readings: list[PeakReading]
    width_in: float
    height_in: float

    @property
    def xs(self) -> np.ndarray:
        return np.array([r.x_in for r in self.readings[:self.cols]])

    @property
    def ys(self) -> np.ndarray:
        return np.array([self.readings[i * self.cols].y_in for i in range(self.rows)])

    def values(self) -> np.ndarray:
        return np.array([r.f_peak_khz for r in self.readings], dtype=np.float64).reshape(self.rows, self.cols)

    def flagged(self) -> np.ndarray:
        return np.array([r.flagged for r in self.readings], dtype=bool).reshape(self.rows, self.cols)

    def at(self, row: int, col: int) -> PeakReading:
        return self.readings[row * self.cols + col]


@dataclass(eq=False)
class Field:
    """
    A continuous peak-frequency field sampled at cell centres ``((c + 0.5) * res,
    (r + 0.5) * res)``. Cells outside the hull of the scan grid hold NaN.
    """
    values: np.ndarray
    resolution_in: float
    width_in: float
    height_in: float
    origin: tuple[float, float] = (0.0, 0.0)

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        ny, nx = self.values.shape
        res = self.resolution_in
        return self.origin[0] + (np.arange(nx) + 0.5) * res, self.origin[1] + (np.arange(ny) + 0.5) * res

    def finite(self) -> np.ndarray:
        return np.isfinite(self.values)

    def value_range(self) -> tuple[float, float]:
        finite = self.values[self.finite()]
        if finite.size == 0:
            raise InvalidSpecException("Field has no finite cells")
        return float(finite.min()), float(finite.max())

    def to_dict(self) -> dict:
        return {"resolution_in": self.resolution_in, "width_in": self.width_in, "height_in": self.height_in,
                "origin": list(self.origin),
                "values": [[float(v) if np.isfinite(v) else None for v in row] for row in self.values]}

    @classmethod
    def from_dict(cls, d: dict) -> "Field":
        values = np.array([[np.nan if v is None else v for v in row] for row in d["values"]], dtype=np.float64)
        return cls(values, float(d["resolution_in"]), float(d["width_in"]), float(d["height_in"]),
                   tuple(d.get("origin", (0.0, 0.0))))


@dataclass(eq=False)
class Zone:
    defect_class: DefectClass | None
    x_lo_in: float
    x_hi_in: float
    readings: list[PeakReading] = field(default_factory=list)

    @property
    def name(self) -> str:
        return self.defect_class.name if self.defect_class is not None else "GLOBAL"


class MarkerSet(NamedTuple):
    label: str
    points: Sequence[tuple[float, float]]
    color: str
    edgecolor: str = "none"


def _key(r: PeakReading) -> tuple[float, float]:
    return round(r.y_in, COORD_DECIMALS), round(r.x_in, COORD_DECIMALS)


def build_grid(readings: Sequence[PeakReading], rows: int, cols: int,
               width_in: float | None = None, height_in: float | None = None) -> PeakGrid:
    """
    Orders readings row-major by ``(y, x)`` and checks that they form a regular grid.
    When the slab size is not given it is inferred from scan points sitting at cell
    centres.

    :raises GridException: on a count mismatch, a duplicate coordinate or an irregular layout.
    """
    if rows <= 0 or cols <= 0:
        raise GridException(f"Grid must be non-empty, got {rows} x {cols}")
    if len(readings) != rows * cols:
        raise GridException(f"Expected {rows * cols} readings for a {rows} x {cols} grid, got {len(readings)}")
    ordered = sorted(readings, key=_key)
    keys = [_key(r) for r in ordered]
    for a, b in zip(keys, keys[1:]):
        if a == b:
            raise GridException(f"Duplicate scan coordinate x={a[1]}, y={a[0]}")
    grid_keys = np.array(keys).reshape(rows, cols, 2)
    if not (np.all(grid_keys[:, :, 0] == grid_keys[:, :1, 0])
            and np.all(grid_keys[:, :, 1] == grid_keys[:1, :, 1])):
        raise GridException(f"Readings do not lie on a regular {rows} x {cols} grid")
    xs, ys = grid_keys[0, :, 1], grid_keys[:, 0, 0]
    if width_in is None:
        width_in = float(xs[0] + xs[-1])
    if height_in is None:
        height_in = float(ys[0] + ys[-1])
    return PeakGrid(rows, cols, ordered, width_in, height_in)


def infer_grid(readings: Sequence[PeakReading], width_in: float | None = None,
               height_in: float | None = None) -> PeakGrid:
    """
    Builds a grid whose shape is read off the distinct coordinates of the readings.
    """
    rows = len({round(r.y_in, COORD_DECIMALS) for r in readings})
    cols = len({round(r.x_in, COORD_DECIMALS) for r in readings})
    return build_grid(readings, rows, cols, width_in, height_in)


def substituted_values(g: PeakGrid) -> np.ndarray:
    """
    Grid values for interpolation, with each QA-flagged reading replaced by the median
    of its unflagged 3x3 neighbours. A flagged reading without unflagged neighbours
    keeps its value.
    """
    values = g.values()
    flagged = g.flagged()
    out = values.copy()
    for r, c in zip(*np.nonzero(flagged)):
        r_lo, r_hi = max(r - 1, 0), min(r + 2, g.rows)
        c_lo, c_hi = max(c - 1, 0), min(c + 2, g.cols)
        patch = values[r_lo:r_hi, c_lo:c_hi][~flagged[r_lo:r_hi, c_lo:c_hi]]
        if patch.size:
            out[r, c] = float(np.median(patch))
    return out


def _interpolator(g: PeakGrid, method: str) -> RegularGridInterpolator:
    if method not in METHODS:
        raise InvalidSpecException(f"Unknown interpolation method {method}; expected one of {sorted(METHODS)}")
    scipy_method, minimum = METHODS[method]
    if g.rows < minimum or g.cols < minimum:
        raise GridException(f"{method} interpolation needs at least a {minimum} x {minimum} grid, "
                            f"got {g.rows} x {g.cols}")
    return RegularGridInterpolator((g.ys, g.xs), substituted_values(g), method=scipy_method,
                                   bounds_error=False, fill_value=np.nan)


def evaluate(g: PeakGrid, x_in, y_in, method: str = "bilinear") -> np.ndarray:
    """
    Evaluates the interpolated field at arbitrary points; NaN outside the grid hull.
    """
    x = np.atleast_1d(np.asarray(x_in, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y_in, dtype=np.float64))
    return _interpolator(g, method)(np.column_stack([y, x]))


def interpolate(g: PeakGrid, resolution_in: float = 1.0, method: str = "bilinear") -> Field:
    if resolution_in <= 0:
        raise InvalidSpecException(f"Resolution must be positive, got {resolution_in}")
    interpolator = _interpolator(g, method)
    nx = int(round(g.width_in / resolution_in))
    ny = int(round(g.height_in / resolution_in))
    xs = (np.arange(nx) + 0.5) * resolution_in
    ys = (np.arange(ny) + 0.5) * resolution_in
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    values = interpolator(np.column_stack([yy.ravel(), xx.ravel()])).reshape(ny, nx)
    logger.info("Interpolated a %d x %d grid to a %d x %d field (%s)", g.rows, g.cols, ny, nx, method)
    return Field(values, resolution_in, g.width_in, g.height_in)


def split_readings(readings: Sequence[PeakReading], width_in: float) -> list[Zone]:
    """
    Assigns each reading to one of four longitudinal zones by its x coordinate, using
    half-open intervals ``[lo, hi)``.
    """
    bounds = zone_bounds(width_in)
    zones = [Zone(defect_class, lo, hi) for (lo, hi), defect_class in zip(bounds, ZONE_ORDER)]
    step = width_in / len(zones)
    for r in readings:
        idx = min(max(int(r.x_in // step), 0), len(zones) - 1)
        zones[idx].readings.append(r)
    return zones


def split_zones(g: PeakGrid) -> list[Zone]:
    return split_readings(g.readings, g.width_in)


def field_readings(f: Field, prefix: str = "f") -> list[PeakReading]:
    """
    Every finite field cell as an unflagged reading at the cell centre, row-major.
    """
    xs, ys = f.cell_centers()
    readings = []
    for r, c in zip(*np.nonzero(f.finite())):
        readings.append(PeakReading(float(xs[c]), float(ys[r]), float(f.values[r, c]),
                                    point_id=f"{prefix}{r:03d}-{c:03d}"))
    return readings


def write_field_json(f: Field, path: str):
    with open(path, "w") as fp:
        json.dump(f.to_dict(), fp)
        fp.write("\n")


def read_field_json(path: str) -> Field:
    with open(path) as fp:
        return Field.from_dict(json.load(fp))


def _norm(lo: float, hi: float) -> Normalize:
    if hi > lo:
        return Normalize(lo, hi)
    return Normalize(lo - 0.5, hi + 0.5)


def render_heatmap(f: Field, path: str, palette: str = "viridis", vmin: float | None = None,
                   vmax: float | None = None, markers: Sequence[MarkerSet] = (), title: str = "",
                   ppm_scale: int = 4):
    """
    Renders a field as an SVG (one vector quad per cell) or, for a ``.ppm`` path, a
    raster with ``ppm_scale`` pixels per cell and markers drawn as filled squares. The
    colour scale runs linearly from the field minimum to its maximum unless
    ``vmin``/``vmax`` pin it, and the legend is ticked at min, mid and max. NaN cells
    are left blank.
    """
    lo, hi = f.value_range()
    lo = lo if vmin is None else vmin
    hi = hi if vmax is None else vmax
    norm = _norm(lo, hi)
    cmap = colormaps[palette]
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    if path.lower().endswith(".ppm"):
        _render_ppm(f, path, cmap, norm, (lo, hi), ppm_scale, markers)
        return

    fig, ax = new_figure(9.0, max(2.5, 9.0 * f.height_in / f.width_in + 1.0))
    ny, nx = f.values.shape
    x_edges = f.origin[0] + np.arange(nx + 1) * f.resolution_in
    y_edges = f.origin[1] + np.arange(ny + 1) * f.resolution_in
    mesh = ax.pcolormesh(x_edges, y_edges, np.ma.masked_invalid(f.values), cmap=cmap, norm=norm,
                         shading="flat")
    bar = fig.colorbar(mesh, ax=ax, pad=0.02)
    bar.set_ticks([norm.vmin, (norm.vmin + norm.vmax) / 2, norm.vmax])
    bar.set_ticklabels([f"{v:.2f}" for v in (lo, (lo + hi) / 2, hi)])
    bar.set_label("Peak frequency (kHz)")
    for marker in markers:
        if len(marker.points):
            xy = np.asarray(marker.points, dtype=np.float64)
            ax.scatter(xy[:, 0], xy[:, 1], s=10, c=marker.color, edgecolors=marker.edgecolor,
                       linewidths=0.5, label=marker.label)
    if any(len(m.points) for m in markers):
        ax.legend(loc="upper right", framealpha=0.8)
    ax.set_xlim(x_edges[0], x_edges[-1])
    ax.set_ylim(y_edges[0], y_edges[-1])
    ax.set_aspect("equal")
    ax.set_xlabel("X (in)")
    ax.set_ylabel("Y (in)")
    if title:
        ax.set_title(title)
    save_figure(fig, path)


LEGEND_GAP_PX = 8
LEGEND_WIDTH_PX = 12
TICK_PX = 4
MARKER_RADIUS_PX = 2


def _rgb(color: str) -> tuple[int, int, int]:
    r, g, b = to_rgb(color)
    return int(round(r * 255)), int(round(g * 255)), int(round(b * 255))


def _render_ppm(f: Field, path: str, cmap, norm: Normalize, value_range: tuple[float, float], scale: int,
                markers: Sequence[MarkerSet] = ()):
    rgba = cmap(norm(np.nan_to_num(f.values, nan=norm.vmin)))
    rgb = (rgba[..., :3] * 255).round().astype(np.uint8)
    rgb[~f.finite()] = 255
    # Row 0 of the field is the bottom edge of the slab.
    cells = np.flipud(rgb).repeat(scale, axis=0).repeat(scale, axis=1)
    height, width = cells.shape[:2]
    canvas = np.full((height, width + LEGEND_GAP_PX + LEGEND_WIDTH_PX + TICK_PX, 3), 255, dtype=np.uint8)
    canvas[:, :width] = cells

    lo, hi = value_range
    ramp = np.linspace(hi, lo, height)
    bar = (cmap(norm(ramp))[:, :3] * 255).round().astype(np.uint8)
    left = width + LEGEND_GAP_PX
    canvas[:, left:left + LEGEND_WIDTH_PX] = bar[:, None, :]
    for row in (0, height // 2, height - 1):
        canvas[row, left + LEGEND_WIDTH_PX:] = 0

    image = Image.fromarray(canvas)
    draw = ImageDraw.Draw(image)
    radius = max(MARKER_RADIUS_PX, scale // 2)
    for marker in markers:
        fill = _rgb(marker.color)
        outline = None if marker.edgecolor == "none" else _rgb(marker.edgecolor)
        for x_in, y_in in marker.points:
            px = (x_in - f.origin[0]) / f.resolution_in * scale
            py = height - (y_in - f.origin[1]) / f.resolution_in * scale
            draw.rectangle([px - radius, py - radius, px + radius, py + radius], fill=fill, outline=outline)
    image.save(path, format="PPM")
