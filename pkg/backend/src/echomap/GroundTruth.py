import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from matplotlib.colors import ListedColormap

from echomap.DefectRect import DefectRect
from echomap.EchoMapException import OutOfExtentException, ShapeMismatchException
from echomap.Figures import new_figure, save_figure

logger = logging.getLogger(__name__)

DEFAULT_RESOLUTION_IN = 1.0


@dataclass(eq=False)
class GroundTruthMask:
    """
    Binary ground-truth mask at a fixed cell resolution. ``cells[r, c]`` is 0 when the
    centre of the cell lies inside a seeded defect and 1 for intact concrete. Row ``r``
    spans ``y`` in ``[r*res, (r+1)*res)``, column ``c`` spans ``x`` likewise.
    """
    cells: np.ndarray
    resolution_in: float
    width_in: float
    height_in: float
    rects: tuple[DefectRect, ...] = ()

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape

    @property
    def defect(self) -> np.ndarray:
        """
        Boolean array, True on defect cells.
        """
        return self.cells == 0

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        rows, cols = self.cells.shape
        return (np.arange(cols) + 0.5) * self.resolution_in, (np.arange(rows) + 0.5) * self.resolution_in

    def cell_of(self, x_in: float, y_in: float) -> tuple[int, int]:
        if not (0 <= x_in < self.width_in and 0 <= y_in < self.height_in):
            raise OutOfExtentException(f"Point ({x_in}, {y_in}) lies outside the "
                                       f"{self.width_in} x {self.height_in} in mask")
        row = min(int(y_in // self.resolution_in), self.cells.shape[0] - 1)
        col = min(int(x_in // self.resolution_in), self.cells.shape[1] - 1)
        return row, col

    def restrict_to(self, x_lo_in: float, x_hi_in: float) -> "GroundTruthMask":
        """
        Returns a copy in which every cell whose centre lies outside ``[x_lo_in, x_hi_in)``
        is marked intact. Used to compare a zone's detections against its own defect only.
        """
        xs, _ = self.cell_centers()
        cells = self.cells.copy()
        cells[:, (xs < x_lo_in) | (xs >= x_hi_in)] = 1
        rects = tuple(r for r in self.rects if x_lo_in <= r.centroid[0] < x_hi_in)
        return GroundTruthMask(cells, self.resolution_in, self.width_in, self.height_in, rects)

    def __eq__(self, other) -> bool:
        if not isinstance(other, GroundTruthMask):
            return NotImplemented
        return (self.resolution_in == other.resolution_in and self.width_in == other.width_in
                and self.height_in == other.height_in and np.array_equal(self.cells, other.cells))


@dataclass
class OverlayMetrics:
    valid_points: int = 0
    overlap_pct: float = 0.0
    iou: float = 0.0
    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0
    defective_points: int = 0
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"valid_points": self.valid_points, "defective_points": self.defective_points,
                "overlap_pct": self.overlap_pct, "iou": self.iou, "precision": self.precision,
                "recall": self.recall, "f1": self.f1}

    @classmethod
    def from_dict(cls, d: dict) -> "OverlayMetrics":
        return cls(valid_points=int(d["valid_points"]), overlap_pct=float(d["overlap_pct"]),
                   iou=float(d["iou"]), precision=float(d["precision"]), recall=float(d["recall"]),
                   f1=float(d["f1"]), defective_points=int(d.get("defective_points", 0)))


def f1_score(precision: float, recall: float) -> float:
    return 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0


def build_mask(rects: Sequence[DefectRect], width_in: float = 120.0, height_in: float = 40.0,
               resolution_in: float = DEFAULT_RESOLUTION_IN) -> GroundTruthMask:
    """
    Rasterizes defect rectangles into a ground-truth mask. A cell is 0 (defect) iff its
    centre lies inside at least one rectangle.

    :raises OutOfExtentException: if a rectangle does not fit inside the slab.
    """
    rows = int(round(height_in / resolution_in))
    cols = int(round(width_in / resolution_in))
    cells = np.ones((rows, cols), dtype=np.uint8)
    xs = (np.arange(cols) + 0.5) * resolution_in
    ys = (np.arange(rows) + 0.5) * resolution_in
    for rect in rects:
        if not rect.inside(width_in, height_in):
            raise OutOfExtentException(f"{rect} does not fit inside the {width_in} x {height_in} in slab")
        in_cols = (xs >= rect.x_in) & (xs < rect.x_hi_in)
        in_rows = (ys >= rect.y_in) & (ys < rect.y_hi_in)
        cells[np.ix_(in_rows, in_cols)] = 0
    return GroundTruthMask(cells, resolution_in, width_in, height_in, tuple(rects))


def point_in_defect(m: GroundTruthMask, x_in: float, y_in: float) -> bool:
    row, col = m.cell_of(x_in, y_in)
    return bool(m.cells[row, col] == 0)


def _as_defect_array(a) -> np.ndarray:
    # Plain arrays use 1 = defect; masks use their own 0 = defect convention.
    if isinstance(a, GroundTruthMask):
        return a.defect
    return np.asarray(a).astype(bool)


def _paired(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    a, b = _as_defect_array(pred), _as_defect_array(gt)
    if a.shape != b.shape:
        raise ShapeMismatchException(f"Prediction shape {a.shape} does not match ground truth shape {b.shape}")
    return a, b


def iou(pred, gt) -> float:
    """
    Intersection over union of the defect cells of two same-shaped masks; 0 when both
    are empty.
    """
    a, b = _paired(pred, gt)
    union = np.count_nonzero(a | b)
    return np.count_nonzero(a & b) / union if union else 0.0


def precision_recall_f1(pred, gt) -> OverlayMetrics:
    """
    Cell-wise precision, recall and F1 with defect cells as the positive class. An empty
    prediction has precision 0.
    """
    a, b = _paired(pred, gt)
    tp = np.count_nonzero(a & b)
    fp = np.count_nonzero(a & ~b)
    fn = np.count_nonzero(~a & b)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return OverlayMetrics(valid_points=tp, overlap_pct=precision, iou=iou(a, b), precision=precision,
                          recall=recall, f1=f1_score(precision, recall), defective_points=tp + fp)


def _xy(point) -> tuple[float, float]:
    if hasattr(point, "x_in"):
        return point.x_in, point.y_in
    return float(point[0]), float(point[1])


def grid_pitch(points: Iterable) -> float | None:
    """
    Smallest spacing between distinct scan coordinates along either axis, or None when
    there are fewer than two distinct coordinates on both axes.
    """
    coords = np.array([_xy(p) for p in points], dtype=np.float64).reshape(-1, 2)
    pitches = []
    for axis in range(2):
        unique = np.unique(coords[:, axis])
        if len(unique) > 1:
            pitches.append(np.min(np.diff(unique)))
    return float(min(pitches)) if pitches else None


def rasterize_points(points: Iterable, m: GroundTruthMask, radius_in: float) -> np.ndarray:
    """
    Dilates points into discs of ``radius_in`` on the mask's cell grid. A cell is set
    when its centre lies within the radius of any point.
    """
    pred = np.zeros(m.shape, dtype=bool)
    xs, ys = m.cell_centers()
    res = m.resolution_in
    for point in points:
        x, y = _xy(point)
        c_lo = max(int(np.floor((x - radius_in) / res)), 0)
        c_hi = min(int(np.ceil((x + radius_in) / res)) + 1, len(xs))
        r_lo = max(int(np.floor((y - radius_in) / res)), 0)
        r_hi = min(int(np.ceil((y + radius_in) / res)) + 1, len(ys))
        dx = xs[c_lo:c_hi] - x
        dy = ys[r_lo:r_hi] - y
        disc = dy[:, None] ** 2 + dx[None, :] ** 2 <= radius_in ** 2 + 1e-12
        pred[r_lo:r_hi, c_lo:c_hi] |= disc
    return pred


def _cells_hit(points: Iterable, m: GroundTruthMask) -> set[tuple[int, int]]:
    return {m.cell_of(*_xy(p)) for p in points}


def overlay(defective: Sequence, m: GroundTruthMask, scan_points: Sequence | None = None,
            dilation_radius_in: float | None = None) -> tuple[list, OverlayMetrics]:
    """
    Validates clustered defective points against a ground-truth mask.

    :param defective: Cluster 0 readings (anything with ``x_in``/``y_in``).
    :param m: The mask, usually restricted to the zone the points came from.
    :param scan_points: Every scan point of the zone; defect cells containing one of them
        form the recall denominator. Defaults to the defective points.
    :param dilation_radius_in: Disc radius used to rasterize the points for IoU. Defaults
        to half the scan pitch.
    :returns: The valid points (inside a defect) and the overlay metrics.
    """
    if not defective:
        return [], OverlayMetrics(warnings=["no defective points to validate"])
    valid = [p for p in defective if point_in_defect(m, *_xy(p))]
    overlap = len(valid) / len(defective)

    reference = scan_points if scan_points is not None else defective
    reachable = {cell for cell in _cells_hit(reference, m) if m.cells[cell] == 0}
    detected = {cell for cell in _cells_hit(valid, m) if m.cells[cell] == 0}
    recall = len(detected & reachable) / len(reachable) if reachable else 0.0

    if dilation_radius_in is None:
        pitch = grid_pitch(reference)
        dilation_radius_in = pitch / 2 if pitch else m.resolution_in / 2
    pred = rasterize_points(defective, m, dilation_radius_in)
    metrics = OverlayMetrics(valid_points=len(valid), overlap_pct=overlap, iou=iou(pred, m),
                             precision=overlap, recall=recall, f1=f1_score(overlap, recall),
                             defective_points=len(defective))
    logger.info("overlay: %d/%d points validated, IoU %.3f", len(valid), len(defective), metrics.iou)
    return valid, metrics


OVERLAY_CMAP = ListedColormap(["#d62728", "#1f4e9c"])


def render_overlay(m: GroundTruthMask, defective: Sequence, valid: Sequence, path: str, title: str = ""):
    """
    Draws the mask as coloured cells (red defect, blue intact), Cluster 0 points in yellow
    and validated points as white markers with black edges.
    """
    aspect = m.height_in / m.width_in
    fig, ax = new_figure(9.0, max(2.5, 9.0 * aspect + 0.8))
    ax.imshow(m.cells, cmap=OVERLAY_CMAP, vmin=0, vmax=1, origin="lower", interpolation="nearest",
              extent=(0, m.width_in, 0, m.height_in))
    if defective:
        xy = np.array([_xy(p) for p in defective])
        ax.scatter(xy[:, 0], xy[:, 1], s=14, c="#ffd700", edgecolors="none", label="Cluster 0")
    if valid:
        xy = np.array([_xy(p) for p in valid])
        ax.scatter(xy[:, 0], xy[:, 1], s=18, c="white", edgecolors="black", linewidths=0.7,
                   label="GTM validated")
    ax.set_xlabel("X (in)")
    ax.set_ylabel("Y (in)")
    if title:
        ax.set_title(title)
    if defective or valid:
        ax.legend(loc="upper right", framealpha=0.8)
    save_figure(fig, path)
