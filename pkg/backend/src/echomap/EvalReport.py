import logging
import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from echomap.DefectClass import DefectClass, NUM_CLASSES
from echomap.EchoMapException import ShapeMismatchException
from echomap.Figures import new_figure, save_figure
from echomap.GroundTruth import OverlayMetrics
from echomap.Training import TrainHistory

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.4f"
# Reference figures from the field study, printed next to the synthetic statistics.
REFERENCE_LAG1 = (0.65, 0.12)
REFERENCE_MEAN_IOU = (0.704, 0.018)


@dataclass(eq=False)
class ConfusionMatrix:
    """
    Rows are true classes, columns predicted classes.
    """
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def col_sums(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    def to_frame(self) -> pd.DataFrame:
        names = [c.short_name for c in DefectClass]
        return pd.DataFrame(self.counts, index=pd.Index(names, name="True"), columns=names)


@dataclass
class ClassMetrics:
    precision: list[float]
    recall: list[float]
    f1: list[float]
    support: list[int]
    accuracy: float
    undefined: list[str] = field(default_factory=list)

    @property
    def per_class_accuracy(self) -> list[float]:
        return self.recall

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame({"Class": [f"{c.short_name} {c.display_name}" for c in DefectClass],
                           "Precision": self.precision, "Recall": self.recall, "F1-Score": self.f1,
                           "Support": self.support, "Per-Class Accuracy": self.per_class_accuracy})
        overall = pd.DataFrame({"Class": ["Overall accuracy"], "Precision": [np.nan], "Recall": [np.nan],
                                "F1-Score": [np.nan], "Support": [sum(self.support)],
                                "Per-Class Accuracy": [self.accuracy]})
        return pd.concat([df, overall], ignore_index=True)


def confusion(true_labels, pred_labels, classes: int = NUM_CLASSES) -> ConfusionMatrix:
    true_labels = np.asarray(true_labels, dtype=np.int64)
    pred_labels = np.asarray(pred_labels, dtype=np.int64)
    if true_labels.shape != pred_labels.shape:
        raise ShapeMismatchException(f"{len(true_labels)} true labels but {len(pred_labels)} predictions")
    counts = np.zeros((classes, classes), dtype=np.int64)
    np.add.at(counts, (true_labels, pred_labels), 1)
    return ConfusionMatrix(counts)


def class_metrics(cm: ConfusionMatrix) -> ClassMetrics:
    """
    Per-class precision, recall and F1 plus overall accuracy. A zero denominator gives
    a metric of 0 and is listed in ``undefined``.
    """
    counts = cm.counts
    diag = np.diag(counts).astype(np.float64)
    cols, rows = cm.col_sums(), cm.row_sums()
    undefined = []
    precision, recall, f1 = [], [], []
    for j, c in enumerate(DefectClass):
        if cols[j] == 0:
            undefined.append(f"precision {c.short_name}")
        if rows[j] == 0:
            undefined.append(f"recall {c.short_name}")
        p = diag[j] / cols[j] if cols[j] else 0.0
        r = diag[j] / rows[j] if rows[j] else 0.0
        precision.append(float(p))
        recall.append(float(r))
        f1.append(float(2 * p * r / (p + r)) if p + r > 0 else 0.0)
    accuracy = float(diag.sum() / cm.total) if cm.total else 0.0
    if not cm.total:
        undefined.append("accuracy")
    return ClassMetrics(precision, recall, f1, [int(v) for v in rows], accuracy, undefined)


@dataclass
class DatasetSummary:
    train_counts: list[int]
    test_counts: list[int]
    padded: int = 0
    lag1_mean: float = 0.0
    lag1_std: float = 0.0
    lag1_count: int = 0

    @property
    def total(self) -> int:
        return sum(self.train_counts) + sum(self.test_counts)


@dataclass
class ReportBundle:
    """
    Everything a lab report is built from. Overlay maps are keyed by
    ``(slab_id, DefectClass)``.
    """
    overlays: dict[tuple[int, DefectClass], OverlayMetrics] = field(default_factory=dict)
    dense_overlays: dict[tuple[int, DefectClass], OverlayMetrics] = field(default_factory=dict)
    centroids: dict[tuple[int, DefectClass], list[float]] = field(default_factory=dict)
    confusion: ConfusionMatrix | None = None
    full_gtm_confusion: ConfusionMatrix | None = None
    history: TrainHistory | None = None
    dataset: DatasetSummary | None = None
    warnings: list[str] = field(default_factory=list)
    title: str = "Impact-echo lab run"


def _slabs(overlays: dict) -> list[int]:
    return sorted({slab for slab, _ in overlays})


def metric_table(overlays: dict[tuple[int, DefectClass], OverlayMetrics], metric: str) -> pd.DataFrame:
    """
    One row per slab and one column per defect class, plus a per-slab mean column and
    an ``Avg`` row.
    """
    rows = []
    for slab in _slabs(overlays):
        row = {"Slab": f"Slab {slab}"}
        for c in DefectClass:
            m = overlays.get((slab, c))
            row[c.short_name] = getattr(m, metric) if m is not None else np.nan
        rows.append(row)
    df = pd.DataFrame(rows, columns=["Slab"] + [c.short_name for c in DefectClass])
    if df.empty:
        return df
    df["Mean"] = df[[c.short_name for c in DefectClass]].mean(axis=1)
    avg = {"Slab": "Avg", **{col: df[col].mean() for col in df.columns if col != "Slab"}}
    return pd.concat([df, pd.DataFrame([avg])], ignore_index=True)


def overlap_table(overlays: dict[tuple[int, DefectClass], OverlayMetrics]) -> pd.DataFrame:
    rows = [{"Slab": slab, "Defect": c.display_name, "Cluster 0 points": m.defective_points,
             "Validated points": m.valid_points, "Overlap %": 100 * m.overlap_pct}
            for (slab, c), m in sorted(overlays.items(), key=lambda kv: (kv[0][0], int(kv[0][1])))]
    return pd.DataFrame(rows, columns=["Slab", "Defect", "Cluster 0 points", "Validated points", "Overlap %"])


def centroid_table(centroids: dict[tuple[int, DefectClass], list[float]]) -> pd.DataFrame:
    rows = [{"Slab": slab, "Defect": c.display_name, "Cluster 0 (kHz)": cs[0],
             "Cluster 1 (kHz)": cs[1] if len(cs) > 1 else np.nan}
            for (slab, c), cs in sorted(centroids.items(), key=lambda kv: (kv[0][0], int(kv[0][1])))]
    return pd.DataFrame(rows, columns=["Slab", "Defect", "Cluster 0 (kHz)", "Cluster 1 (kHz)"])


def dataset_table(summary: DatasetSummary) -> pd.DataFrame:
    df = pd.DataFrame({"Class": [c.display_name for c in DefectClass], "Train": summary.train_counts,
                       "Test": summary.test_counts})
    df["Total"] = df["Train"] + df["Test"]
    total = pd.DataFrame([{"Class": "Total", "Train": df["Train"].sum(), "Test": df["Test"].sum(),
                           "Total": df["Total"].sum()}])
    return pd.concat([df, total], ignore_index=True)


def slab_iou_stats(overlays: dict[tuple[int, DefectClass], OverlayMetrics]) -> tuple[float, float]:
    """
    Mean and standard deviation, across slabs, of each slab's mean zone IoU.
    """
    per_slab = [np.mean([m.iou for (s, _), m in overlays.items() if s == slab]) for slab in _slabs(overlays)]
    if not per_slab:
        return 0.0, 0.0
    return float(np.mean(per_slab)), float(np.std(per_slab))


def mean_metric(overlays: dict[tuple[int, DefectClass], OverlayMetrics], metric: str) -> float:
    values = [getattr(m, metric) for m in overlays.values()]
    return float(np.mean(values)) if values else 0.0


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "" if np.isnan(v) else f"{v:.4f}"
    return str(v)


def markdown_table(df: pd.DataFrame, index: bool = False) -> str:
    if index:
        df = df.reset_index()
    header = "| " + " | ".join(str(c) for c in df.columns) + " |"
    rule = "|" + "|".join("---" for _ in df.columns) + "|"
    body = ["| " + " | ".join(_fmt(v) for v in row) + " |" for row in df.itertuples(index=False)]
    return "\n".join([header, rule] + body)


def _write_table(df: pd.DataFrame, tables_dir: str, name: str, written: list[str], index: bool = False) -> str:
    path = os.path.join(tables_dir, f"{name}.csv")
    df.to_csv(path, index=index, float_format=FLOAT_FORMAT)
    written.append(path)
    return path


def render_history(history: TrainHistory, path: str):
    fig, ax = new_figure(6.0, 3.5)
    epochs = np.arange(len(history.train_loss))
    ax.plot(epochs, history.train_loss, color="#1f77b4", label="Train loss")
    ax.set_xlabel("Epoch")
    ax.set_ylabel("Loss")
    acc = ax.twinx()
    acc.plot(epochs, history.train_accuracy, color="#2ca02c", label="Train accuracy")
    acc.plot(epochs, history.test_accuracy, color="#d62728", label="Test accuracy")
    acc.set_ylim(0, 1)
    acc.set_ylabel("Accuracy")
    lines = ax.get_lines() + acc.get_lines()
    ax.legend(lines, [line.get_label() for line in lines], loc="center right")
    save_figure(fig, path)


def emit_report(bundle: ReportBundle, out_dir: str) -> list[str]:
    """
    Writes ``report.md``, ``tables/*.csv`` and ``figures/training_history.svg``. Every
    file depends only on the bundle. Returns the paths written.
    """
    tables_dir = os.path.join(out_dir, "tables")
    figures_dir = os.path.join(out_dir, "figures")
    os.makedirs(tables_dir, exist_ok=True)
    written: list[str] = []
    md = [f"# {bundle.title}", ""]

    if bundle.overlays:
        iou_mean, iou_std = slab_iou_stats(bundle.overlays)
        md += ["## Ground-truth overlay (scan grid)", "",
               f"- Mean IoU across slabs: {iou_mean:.4f} +- {iou_std:.4f} "
               f"(field study: {REFERENCE_MEAN_IOU[0]} +- {REFERENCE_MEAN_IOU[1]})",
               f"- Mean zone precision: {mean_metric(bundle.overlays, 'precision'):.4f}",
               f"- Mean zone recall: {mean_metric(bundle.overlays, 'recall'):.4f}",
               f"- Mean zone F1: {mean_metric(bundle.overlays, 'f1'):.4f}", ""]
        for metric, title in (("iou", "IoU"), ("precision", "Precision"), ("recall", "Recall"), ("f1", "F1")):
            df = metric_table(bundle.overlays, metric)
            _write_table(df, tables_dir, metric, written)
            md += [f"### {title}", "", markdown_table(df), ""]
        df = overlap_table(bundle.overlays)
        _write_table(df, tables_dir, "overlap", written)
        md += ["### Validated points and overlap", "", markdown_table(df), ""]
    else:
        md += ["## Ground-truth overlay", "", "No overlay metrics were produced.", ""]

    if bundle.centroids:
        df = centroid_table(bundle.centroids)
        _write_table(df, tables_dir, "centroids", written)
        md += ["### Zone centroids", "", markdown_table(df), ""]

    if bundle.dense_overlays:
        df = overlap_table(bundle.dense_overlays)
        _write_table(df, tables_dir, "dense_validated", written)
        md += ["## Validated field cells (sequence source)", "", markdown_table(df), ""]

    if bundle.dataset is not None:
        ds = bundle.dataset
        df = dataset_table(ds)
        _write_table(df, tables_dir, "dataset", written)
        md += ["## Sequence dataset", "",
               f"- Sequences: {ds.total} ({sum(ds.train_counts)} train / {sum(ds.test_counts)} test), "
               f"{ds.padded} padded",
               f"- Lag-1 autocorrelation: {ds.lag1_mean:.4f} +- {ds.lag1_std:.4f} over {ds.lag1_count} sequences "
               f"(field study: {REFERENCE_LAG1[0]} +- {REFERENCE_LAG1[1]})", "",
               markdown_table(df), ""]

    for cm, name, title in ((bundle.confusion, "classification", "Classification (test split)"),
                            (bundle.full_gtm_confusion, "full_gtm_classification",
                             "Classification (all ground-truth cells)")):
        if cm is None:
            continue
        metrics = class_metrics(cm)
        df = metrics.to_frame()
        _write_table(df, tables_dir, name, written)
        _write_table(cm.to_frame(), tables_dir, f"{name}_confusion", written, index=True)
        md += [f"## {title}", "", f"- Accuracy: {metrics.accuracy:.4f}",
               f"- Mean F1 across defect types: {float(np.mean(metrics.f1)):.4f}", "",
               markdown_table(df), "", "Confusion matrix (rows true, columns predicted):", "",
               markdown_table(cm.to_frame(), index=True), ""]
        if metrics.undefined:
            md += [f"Undefined metrics reported as 0: {', '.join(metrics.undefined)}", ""]
    if bundle.confusion is None:
        md += ["## Classification", "", "The classifier stage did not run.", ""]

    if bundle.history is not None and bundle.history.train_loss:
        df = bundle.history.to_frame()
        _write_table(df, tables_dir, "history", written)
        path = os.path.join(figures_dir, "training_history.svg")
        render_history(bundle.history, path)
        written.append(path)
        md += ["## Training", "", f"- Epoch 0 loss: {bundle.history.train_loss[0]:.4f}",
               f"- Final loss: {bundle.history.train_loss[-1]:.4f}",
               f"- Final test accuracy: {bundle.history.test_accuracy[-1]:.4f}", "",
               "![training history](figures/training_history.svg)", ""]

    md += ["## Warnings", ""]
    md += [f"- {w}" for w in bundle.warnings] if bundle.warnings else ["None."]
    path = os.path.join(out_dir, "report.md")
    with open(path, "w") as f:
        f.write("\n".join(md) + "\n")
    written.append(path)
    logger.info("Wrote report with %d files to %s", len(written), out_dir)
    return written


@dataclass
class FieldSummary:
    counts: list[int]
    defective_points: int
    sequences: int
    warnings: list[str] = field(default_factory=list)

    @property
    def percentages(self) -> list[float]:
        total = sum(self.counts)
        return [100.0 * c / total if total else 0.0 for c in self.counts]

    def modal_class(self) -> DefectClass | None:
        if not sum(self.counts):
            return None
        return DefectClass(int(np.argmax(self.counts)))


def emit_field_report(summary: FieldSummary, out_dir: str, map_path: str | None = None) -> list[str]:
    tables_dir = os.path.join(out_dir, "tables")
    os.makedirs(tables_dir, exist_ok=True)
    written: list[str] = []
    md = ["# Impact-echo field run", "",
          f"- Defective points: {summary.defective_points}",
          f"- Sequences classified: {summary.sequences}", ""]
    if summary.sequences:
        df = pd.DataFrame({"Class": [c.display_name for c in DefectClass], "Predictions": summary.counts,
                           "Percent": summary.percentages})
        _write_table(df, tables_dir, "field_predictions", written)
        md += ["## Predicted defect types", "", markdown_table(df), "",
               f"Modal class: {summary.modal_class().display_name}", ""]
        if map_path:
            md += [f"![prediction map]({os.path.relpath(map_path, out_dir)})", ""]
    else:
        md += ["## Predicted defect types", "", "No defective points were found, nothing was classified.", ""]
    md += ["## Warnings", ""]
    md += [f"- {w}" for w in summary.warnings] if summary.warnings else ["None."]
    path = os.path.join(out_dir, "field_report.md")
    with open(path, "w") as f:
        f.write("\n".join(md) + "\n")
    written.append(path)
    return written
