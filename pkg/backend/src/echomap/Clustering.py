import dataclasses
import json
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd

from echomap.EchoMapException import (DegenerateClusteringException, InvalidSpecException,
                                      ZoneTooSmallException)
from echomap.Mapping import Zone
from echomap.Spectral import PeakReading, QAFlag

logger = logging.getLogger(__name__)

DEFAULT_RESTARTS = 5
DEFAULT_MAX_ITER = 100
DEFAULT_TOL = 1e-6


@dataclass(eq=False)
class ClusterResult:
    """
    Outcome of a k-means run. ``cost`` is the within-cluster sum of squares of
    ``labels`` against ``centroids``; ``cost_history`` holds the cost after every Lloyd
    update of the kept restart.
    """
    labels: np.ndarray
    centroids: np.ndarray
    cost: float
    iterations: int
    seed: int
    degenerate: bool = False
    refined: bool = False
    cost_history: list[float] = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.centroids)

    def centroid_values(self) -> list[float]:
        c = np.asarray(self.centroids)
        return [float(v) for v in (c if c.ndim == 1 else c[:, 0])]


def _as_points(values) -> tuple[np.ndarray, bool]:
    x = np.asarray(values, dtype=np.float64)
    if x.ndim == 1:
        return x[:, None], True
    return x, False


def within_cluster_cost(x: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> float:
    x, _ = _as_points(x)
    c, _ = _as_points(centroids)
    return float(np.sum((x - c[labels]) ** 2))


def _assign(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d2 = np.sum((x[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
    return np.argmin(d2, axis=1)


def _update(x: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    updated = centroids.copy()
    for j in range(len(centroids)):
        members = x[labels == j]
        # Empty clusters keep their previous centroid.
        if len(members):
            updated[j] = members.mean(axis=0)
    return updated


def kmeans_plus_plus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centroids = np.empty((k, x.shape[1]))
    centroids[0] = x[rng.integers(len(x))]
    for i in range(1, k):
        d2 = np.min(np.sum((x[:, None, :] - centroids[None, :i, :]) ** 2, axis=2), axis=1)
        total = d2.sum()
        idx = rng.choice(len(x), p=d2 / total) if total > 0 else rng.integers(len(x))
        centroids[i] = x[idx]
    return centroids


def lloyd(x: np.ndarray, centroids: np.ndarray, max_iter: int, tol: float) -> tuple[np.ndarray, np.ndarray, int, list[float]]:
    history = []
    iterations = 0
    for iterations in range(1, max_iter + 1):
        labels = _assign(x, centroids)
        updated = _update(x, labels, centroids)
        history.append(within_cluster_cost(x, labels, updated))
        shift = float(np.max(np.linalg.norm(updated - centroids, axis=1)))
        centroids = updated
        if shift < tol:
            break
    labels = _assign(x, centroids)
    final = within_cluster_cost(x, labels, centroids)
    if not history or final < history[-1]:
        history.append(final)
    return labels, centroids, iterations, history


def best_split_1d(values: np.ndarray) -> tuple[float, float] | None:
    """
    Exact 2-means in one dimension: the optimal partition is a split of the sorted
    values, so all splits between distinct values are scanned with prefix sums.
    Returns ``(threshold, cost)`` where values ``<= threshold`` form the lower cluster,
    or None when all values are equal.
    """
    v = np.sort(values)
    n = len(v)
    s = np.concatenate([[0.0], np.cumsum(v)])
    s2 = np.concatenate([[0.0], np.cumsum(v * v)])
    i = np.arange(1, n)
    valid = v[1:] > v[:-1]
    if not np.any(valid):
        return None
    left = s2[i] - s[i] ** 2 / i
    right = (s2[n] - s2[i]) - (s[n] - s[i]) ** 2 / (n - i)
    cost = np.where(valid, left + right, np.inf)
    best = int(np.argmin(cost))
    return float(v[best]), float(cost[best])


def kmeans(values, k: int = 2, seed: int = 0, max_iter: int = DEFAULT_MAX_ITER, tol: float = DEFAULT_TOL,
           restarts: int = DEFAULT_RESTARTS, raise_on_degenerate: bool = False) -> ClusterResult:
    """
    k-means with k-means++ seeding and Lloyd iterations, keeping the lowest-cost of
    ``restarts`` seeded runs. For one-dimensional data with ``k = 2`` the kept run is
    checked against the exact sorted-split optimum, which replaces it (``refined``) when
    it is better.

    :raises InvalidSpecException: if ``k < 1`` or there are fewer values than clusters.
    :raises DegenerateClusteringException: if there are fewer distinct values than
        clusters and ``raise_on_degenerate`` is set.
    """
    x, one_dimensional = _as_points(values)
    if k < 1:
        raise InvalidSpecException(f"k must be at least 1, got {k}")
    if len(x) < k:
        raise InvalidSpecException(f"Need at least {k} values to form {k} clusters, got {len(x)}")

    distinct = np.unique(x, axis=0)
    if len(distinct) < k:
        if raise_on_degenerate:
            raise DegenerateClusteringException(f"{len(distinct)} distinct values cannot form {k} clusters")
        centroids = np.concatenate([distinct, np.repeat(distinct[-1:], k - len(distinct), axis=0)])
        labels = _assign(x, distinct)
        cost = within_cluster_cost(x, labels, centroids)
        result = ClusterResult(labels, centroids, cost, 0, seed, degenerate=True, cost_history=[cost])
        return _squeezed(result, one_dimensional)

    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, restarts)):
        labels, centroids, iterations, history = lloyd(x, kmeans_plus_plus(x, k, rng), max_iter, tol)
        if best is None or history[-1] < best[3][-1]:
            best = labels, centroids, iterations, history
    labels, centroids, iterations, history = best
    result = ClusterResult(labels, centroids, within_cluster_cost(x, labels, centroids), iterations, seed,
                           cost_history=history)

    if one_dimensional and k == 2:
        threshold, exact_cost = best_split_1d(x[:, 0])
        lower = x[:, 0] <= threshold
        exact_labels = np.where(lower, 0, 1)
        ordered = np.sort(x[:, 0])
        exact_centroids = np.array([[ordered[ordered <= threshold].mean()], [ordered[ordered > threshold].mean()]])
        refined = result.cost > exact_cost + 1e-9 * max(1.0, exact_cost)
        if refined:
            logger.debug("k-means restarts missed the 1-D optimum (%.6g > %.6g)", result.cost, exact_cost)
        result = ClusterResult(exact_labels, exact_centroids, within_cluster_cost(x, exact_labels, exact_centroids),
                               iterations, seed, refined=refined, cost_history=history)
    return _squeezed(result, one_dimensional)


def _squeezed(r: ClusterResult, one_dimensional: bool) -> ClusterResult:
    if one_dimensional:
        return dataclasses.replace(r, centroids=r.centroids[:, 0].copy())
    return r


def relabel_defective(r: ClusterResult) -> ClusterResult:
    """
    Orders a 2-cluster result so that cluster 0 has the lower centroid, the cluster
    taken as defective.
    """
    if r.k != 2:
        raise InvalidSpecException(f"Defect relabelling needs exactly 2 clusters, got {r.k}")
    c = r.centroid_values()
    if c[0] <= c[1]:
        return r
    return dataclasses.replace(r, labels=1 - r.labels, centroids=r.centroids[::-1].copy())


@dataclass(eq=False)
class ZoneDetection:
    zone: Zone
    defective: list[PeakReading]
    intact: list[PeakReading]
    excluded: list[PeakReading]
    result: ClusterResult

    @property
    def centroids(self) -> list[float]:
        return self.result.centroid_values()

    def summary(self) -> dict:
        return {"zone": self.zone.name, "x_lo_in": self.zone.x_lo_in, "x_hi_in": self.zone.x_hi_in,
                "centroids_khz": self.centroids, "cost": self.result.cost,
                "iterations": self.result.iterations, "degenerate": self.result.degenerate,
                "refined": self.result.refined, "seed": self.result.seed,
                "defective": len(self.defective), "intact": len(self.intact), "excluded": len(self.excluded)}


def cluster_zone(z: Zone, seed: int = 0, restarts: int = DEFAULT_RESTARTS, max_iter: int = DEFAULT_MAX_ITER,
                 tol: float = DEFAULT_TOL) -> ZoneDetection:
    """
    Two-means over the peak frequencies of a zone's unflagged readings. The readings
    of the lower-frequency cluster are returned as defective.

    :raises ZoneTooSmallException: if fewer than two unflagged readings remain.
    """
    usable = [r for r in z.readings if not r.flagged]
    excluded = [r for r in z.readings if r.flagged]
    if len(usable) < 2:
        raise ZoneTooSmallException(f"Zone {z.name} has {len(usable)} usable readings, at least 2 are needed")
    result = relabel_defective(kmeans([r.f_peak_khz for r in usable], 2, seed, max_iter, tol, restarts))
    if result.degenerate:
        # Nothing stands out from a zone of identical readings.
        logger.warning("Zone %s: all usable readings are equal, no defective cluster", z.name)
        return ZoneDetection(z, [], usable, excluded, result)
    defective = [r for r, label in zip(usable, result.labels) if label == 0]
    intact = [r for r, label in zip(usable, result.labels) if label == 1]
    logger.info("Zone %s: %d defective of %d usable readings, centroids %s", z.name, len(defective), len(usable),
                ", ".join(f"{c:.3f}" for c in result.centroid_values()))
    return ZoneDetection(z, defective, intact, excluded, result)


def cluster_global(readings: Sequence[PeakReading], seed: int = 0, restarts: int = DEFAULT_RESTARTS) -> ZoneDetection:
    """
    Clusters a whole slab or deck as one zone.
    """
    xs = [r.x_in for r in readings] or [0.0]
    return cluster_zone(Zone(None, min(xs), max(xs), list(readings)), seed, restarts)


def write_detections(detections: Sequence[ZoneDetection], csv_path: str, json_path: str):
    """
    Writes the defective points of every zone as CSV and the per-zone centroids and
    run statistics as JSON.
    """
    rows = [{"zone": d.zone.name, "point_id": r.point_id, "x_in": r.x_in, "y_in": r.y_in,
             "f_peak_khz": r.f_peak_khz, "qa": r.qa.label()}
            for d in detections for r in d.defective]
    pd.DataFrame(rows, columns=["zone", "point_id", "x_in", "y_in", "f_peak_khz", "qa"]) \
        .to_csv(csv_path, index=False, float_format="%.17g")
    with open(json_path, "w") as f:
        json.dump([d.summary() for d in detections], f, indent=2)
        f.write("\n")


def read_defective_csv(path: str) -> dict[str, list[PeakReading]]:
    df = pd.read_csv(path, dtype={"point_id": str, "qa": str, "zone": str}, keep_default_na=False)
    points: dict[str, list[PeakReading]] = {}
    for row in df.itertuples(index=False):
        points.setdefault(row.zone, []).append(PeakReading(float(row.x_in), float(row.y_in), float(row.f_peak_khz),
                                                           QAFlag.from_label(row.qa), str(row.point_id)))
    return points
