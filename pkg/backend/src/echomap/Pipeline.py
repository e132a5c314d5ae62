"""
End-to-end orchestration. The lab pipeline runs file-to-file stages over a run
directory (synth, analyze, map, cluster, overlay, sequences, train, evaluate, report);
the field pipeline classifies the defective points of a single deck with a trained
model.
"""
import json
import logging
import os
from typing import Sequence

import numpy as np
import pandas as pd
from scipy import ndimage

from echomap.Clustering import ZoneDetection, cluster_global, cluster_zone, read_defective_csv, write_detections
from echomap.DefectClass import CLASS_COLORS, DefectClass, ZONE_ORDER
from echomap.EchoMapException import StageException, ZoneTooSmallException
from echomap.EvalReport import (DatasetSummary, FieldSummary, ReportBundle, confusion, emit_field_report,
                                emit_report)
from echomap.GroundTruth import GroundTruthMask, OverlayMetrics, build_mask, overlay, point_in_defect, render_overlay
from echomap.Mapping import (Field, MarkerSet, PeakGrid, build_grid, field_readings, infer_grid, interpolate,
                             read_field_json, render_heatmap, split_readings, write_field_json)
from echomap.PipelineConfig import PipelineConfig
from echomap.SequenceData import (TEST, TRAIN, SequenceDataset, apply_normalization, build_sequences,
                                  corpus_autocorr, normalize, read_jsonl, serpentine_order, train_test_split,
                                  window_stream, write_jsonl)
from echomap.Spectral import PeakReading, analyze, read_readings_csv, write_readings_csv
from echomap.Stage import RunLayout, Stage
from echomap.SynthLab import SlabSpec, read_rects_json, read_spec_json, read_waveforms_csv, synth_slab, \
    write_spec_json, write_waveforms_csv
from echomap.Training import TrainHistory, init_model, load_model, predict, predict_raw, save_model, train

logger = logging.getLogger(__name__)

STAGE_ORDER = ["synth", "analyze", "map", "cluster", "overlay", "sequences", "train", "evaluate", "report"]
# Seed index offsets for the two clustering tiers of a slab.
GRID_TIER, CELL_TIER = 0, 50


def _makedirs_for(path: str):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)


def grid_for(readings: Sequence[PeakReading], spec: SlabSpec | None = None) -> PeakGrid:
    if spec is None:
        return infer_grid(readings)
    return build_grid(readings, spec.grid_rows, spec.grid_cols, spec.width_in, spec.height_in)


def cell_readings(grid: PeakGrid, config: PipelineConfig) -> list[PeakReading]:
    """
    Readings at every finite cell of the interpolated field; the dense source of
    validated points for sequence construction.
    """
    return field_readings(interpolate(grid, config.field_resolution_in, config.map_method))


def cluster_readings(readings: Sequence[PeakReading], width_in: float, config: PipelineConfig,
                     seed_index: int, scope: str | None = None) -> tuple[list[ZoneDetection], list[str]]:
    """
    Clusters readings per zone, or over the whole slab and then splits the result by
    zone. Zones with too few usable readings are skipped with a warning.
    """
    scope = scope or config.cluster_scope
    warnings = []
    zones = split_readings(readings, width_in)
    if scope == "global":
        try:
            detection = cluster_global(readings, config.derive_seed("cluster", seed_index), config.restarts)
        except ZoneTooSmallException as e:
            return [], [str(e)]
        defective = {id(r) for r in detection.defective}
        excluded = {id(r) for r in detection.excluded}
        return [ZoneDetection(z, [r for r in z.readings if id(r) in defective],
                              [r for r in z.readings if id(r) not in defective and id(r) not in excluded],
                              [r for r in z.readings if id(r) in excluded], detection.result)
                for z in zones], warnings
    detections = []
    for i, zone in enumerate(zones):
        try:
            detections.append(cluster_zone(zone, config.derive_seed("cluster", seed_index + i), config.restarts))
        except ZoneTooSmallException as e:
            warnings.append(str(e))
    return detections, warnings


def overlay_zones(defective: dict[str, list[PeakReading]], scan_points: Sequence[PeakReading],
                  mask: GroundTruthMask) -> dict[str, tuple[list[PeakReading], OverlayMetrics]]:
    """
    Overlays each zone's defective points on the mask restricted to that zone.
    """
    results = {}
    for zone in split_readings(scan_points, mask.width_in):
        if not zone.readings:
            continue
        results[zone.name] = overlay(defective.get(zone.name, []), mask.restrict_to(zone.x_lo_in, zone.x_hi_in),
                                     scan_points=zone.readings)
    return results


def _points_frame(points: dict[str, list[PeakReading]]) -> pd.DataFrame:
    rows = [{"zone": zone, "point_id": r.point_id, "x_in": r.x_in, "y_in": r.y_in, "f_peak_khz": r.f_peak_khz,
             "qa": r.qa.label()}
            for zone in sorted(points, key=lambda z: int(DefectClass.parse(z))) for r in points[zone]]
    return pd.DataFrame(rows, columns=["zone", "point_id", "x_in", "y_in", "f_peak_khz", "qa"])


def write_overlay(results: dict[str, tuple[list[PeakReading], OverlayMetrics]], json_path: str, valid_csv: str):
    with open(json_path, "w") as f:
        json.dump({zone: m.to_dict() for zone, (_, m) in results.items()}, f, indent=2)
        f.write("\n")
    _points_frame({zone: valid for zone, (valid, _) in results.items()}) \
        .to_csv(valid_csv, index=False, float_format="%.17g")


def read_overlay_json(path: str) -> dict[str, OverlayMetrics]:
    with open(path) as f:
        return {zone: OverlayMetrics.from_dict(d) for zone, d in json.load(f).items()}


def _crop(f: Field, x_lo: float, x_hi: float) -> Field:
    xs, _ = f.cell_centers()
    cols = np.flatnonzero((xs >= x_lo) & (xs < x_hi))
    return Field(f.values[:, cols], f.resolution_in, len(cols) * f.resolution_in, f.height_in,
                 (f.origin[0] + cols[0] * f.resolution_in, f.origin[1]))


class SynthStage(Stage):

    def name(self) -> str:
        return "synth"

    def execute(self):
        for slab_id in range(1, self.config.slabs + 1):
            spec = self.config.slab_spec(slab_id)
            waveforms, _ = synth_slab(spec)
            os.makedirs(self.layout.slab_dir(slab_id), exist_ok=True)
            write_spec_json(spec, self.layout.slab_file(slab_id, "spec.json"))
            write_waveforms_csv(waveforms, self.layout.slab_file(slab_id, "waveforms.csv"))


class AnalyzeStage(Stage):

    def name(self) -> str:
        return "analyze"

    def execute(self):
        for slab_id in range(1, self.config.slabs + 1):
            analyze_file(self.layout.slab_file(slab_id, "waveforms.csv"),
                         self.layout.slab_file(slab_id, "readings.csv"), self.config)


class MapStage(Stage):
    """
    Interpolates every slab and renders the heatmaps, on one colour scale across slabs
    when ``shared_color_scale`` is set.
    """

    def name(self) -> str:
        return "map"

    def execute(self):
        fields = {}
        for slab_id in range(1, self.config.slabs + 1):
            spec = read_spec_json(self.layout.slab_file(slab_id, "spec.json"))
            readings = read_readings_csv(self.layout.slab_file(slab_id, "readings.csv"))
            fields[slab_id] = interpolate(grid_for(readings, spec), self.config.map_resolution_in,
                                          self.config.map_method)
            write_field_json(fields[slab_id], self.layout.slab_file(slab_id, "field.json"))
        vmin = vmax = None
        if self.config.shared_color_scale:
            ranges = [f.value_range() for f in fields.values()]
            vmin, vmax = min(r[0] for r in ranges), max(r[1] for r in ranges)
        for slab_id, f in fields.items():
            render_heatmap(f, self.layout.slab_file(slab_id, f"heatmap.{self.config.image_format}"),
                           vmin=vmin, vmax=vmax, title=f"Slab {slab_id} peak frequency")


class ClusterStage(Stage):
    """
    Clusters the scan-grid readings (the tier the overlay tables report on) and, with
    the field sequence source, the interpolated field cells.
    """

    def name(self) -> str:
        return "cluster"

    def execute(self):
        config = self.config
        for slab_id in range(1, config.slabs + 1):
            spec = read_spec_json(self.layout.slab_file(slab_id, "spec.json"))
            readings = read_readings_csv(self.layout.slab_file(slab_id, "readings.csv"))
            detections, warnings = cluster_readings(readings, spec.width_in, config, slab_id * 100 + GRID_TIER)
            for w in warnings:
                self.warn(f"slab {slab_id}: {w}")
            write_detections(detections, self.layout.slab_file(slab_id, "detections.csv"),
                             self.layout.slab_file(slab_id, "centroids.json"))
            if config.figures:
                self._zone_figures(slab_id, detections)
            if config.sequence_source == "field":
                cells = cell_readings(grid_for(readings, spec), config)
                write_readings_csv(cells, self.layout.slab_file(slab_id, "cells.csv"))
                cell_detections, warnings = cluster_readings(cells, spec.width_in, config,
                                                             slab_id * 100 + CELL_TIER)
                for w in warnings:
                    self.warn(f"slab {slab_id} cells: {w}")
                write_detections(cell_detections, self.layout.slab_file(slab_id, "cell_detections.csv"),
                                 self.layout.slab_file(slab_id, "cell_centroids.json"))

    def _zone_figures(self, slab_id: int, detections: list[ZoneDetection]):
        f = read_field_json(self.layout.slab_file(slab_id, "field.json"))
        for d in detections:
            zone_field = _crop(f, d.zone.x_lo_in, d.zone.x_hi_in)
            if not np.any(zone_field.finite()):
                continue
            markers = [MarkerSet("Cluster 0", [(r.x_in, r.y_in) for r in d.defective], "#d62728", "black")]
            render_heatmap(zone_field, self.layout.slab_figure(slab_id, f"zone_{d.zone.name}.svg"),
                           markers=markers, title=f"Slab {slab_id}, {d.zone.name}")


class OverlayStage(Stage):

    def name(self) -> str:
        return "overlay"

    def execute(self):
        config = self.config
        for slab_id in range(1, config.slabs + 1):
            spec = read_spec_json(self.layout.slab_file(slab_id, "spec.json"))
            mask = build_mask(spec.defects, spec.width_in, spec.height_in)
            readings = read_readings_csv(self.layout.slab_file(slab_id, "readings.csv"))
            defective = read_defective_csv(self.layout.slab_file(slab_id, "detections.csv"))
            results = overlay_zones(defective, readings, mask)
            for zone, (_, m) in results.items():
                for w in m.warnings:
                    self.warn(f"slab {slab_id} zone {zone}: {w}")
            write_overlay(results, self.layout.slab_file(slab_id, "overlay.json"),
                          self.layout.slab_file(slab_id, "valid.csv"))
            if config.figures:
                for zone, (valid, _) in results.items():
                    render_overlay(mask, defective.get(zone, []), valid,
                                   self.layout.slab_figure(slab_id, f"overlay_{zone}.svg"),
                                   title=f"Slab {slab_id}, {zone}")
            if config.sequence_source == "field":
                cells = read_readings_csv(self.layout.slab_file(slab_id, "cells.csv"))
                cell_defective = read_defective_csv(self.layout.slab_file(slab_id, "cell_detections.csv"))
                write_overlay(overlay_zones(cell_defective, cells, mask),
                              self.layout.slab_file(slab_id, "cell_overlay.json"),
                              self.layout.slab_file(slab_id, "cell_valid.csv"))


def _read_points_by_zone(path: str) -> dict[str, list[PeakReading]]:
    return read_defective_csv(path) if os.path.exists(path) else {}


class SequenceStage(Stage):
    """
    Builds the labelled sequence corpus from validated points, assigns the train/test
    split, and builds the evaluation corpus from every point inside the ground truth.
    """

    def name(self) -> str:
        return "sequences"

    def execute(self):
        config = self.config
        valid_name, all_name = (("cell_valid.csv", "cells.csv") if config.sequence_source == "field"
                                else ("valid.csv", "readings.csv"))
        validated, inside = {}, {}
        for slab_id in range(1, config.slabs + 1):
            spec = read_spec_json(self.layout.slab_file(slab_id, "spec.json"))
            mask = build_mask(spec.defects, spec.width_in, spec.height_in)
            for zone, points in _read_points_by_zone(self.layout.slab_file(slab_id, valid_name)).items():
                validated[(slab_id, DefectClass.parse(zone))] = points
            everything = read_readings_csv(self.layout.slab_file(slab_id, all_name))
            for zone in split_readings(everything, spec.width_in):
                restricted = mask.restrict_to(zone.x_lo_in, zone.x_hi_in)
                points = [r for r in zone.readings if point_in_defect(restricted, r.x_in, r.y_in)]
                if restricted.rects:
                    inside[(slab_id, zone.defect_class)] = points
            for defect_class in ZONE_ORDER:
                validated.setdefault((slab_id, defect_class), [])

        sequences, warnings = build_sequences(validated, config.seq_length, config.stride, config.multiplicity)
        for w in warnings:
            self.warn(w)
        ds = SequenceDataset(sequences)
        if len(ds):
            ds = train_test_split(ds, config.split_ratio, config.derive_seed("split"), config.stratified)
            for w in ds.warnings:
                self.warn(w)
        else:
            self.warn("no validated points anywhere, the sequence corpus is empty")
        os.makedirs(self.layout.path("dataset"), exist_ok=True)
        write_jsonl(ds, self.layout.path("dataset", "sequences.jsonl"))
        full, _ = build_sequences(inside, config.seq_length, config.stride, config.multiplicity)
        write_jsonl(full, self.layout.path("dataset", "full_gtm.jsonl"))


class TrainStage(Stage):

    def name(self) -> str:
        return "train"

    def execute(self):
        model_path = self.layout.path("model", "model.json")
        history_path = self.layout.path("model", "history.csv")
        for stale in (model_path, history_path):
            if os.path.exists(stale):
                os.remove(stale)
        ds = read_jsonl(self.layout.path("dataset", "sequences.jsonl"))
        present = [c for c, n in enumerate(ds.class_counts(TRAIN)) if n > 0]
        if len(present) < 2:
            self.warn(f"train split holds {len(present)} class(es), the classifier stage is skipped")
            return
        ds = normalize(ds)
        for w in ds.warnings:
            self.warn(w)
        model_config = self.config.model_config()
        model, history = train(init_model(model_config), ds, model_config)
        os.makedirs(self.layout.path("model"), exist_ok=True)
        save_model(model, model_path)
        history.to_frame().to_csv(history_path, index=False, float_format="%.17g")


def _prediction_frame(ds: SequenceDataset, labels: np.ndarray, confidence: np.ndarray) -> pd.DataFrame:
    return pd.DataFrame({"slab": [s.slab_id for s in ds.sequences], "zone": [s.zone for s in ds.sequences],
                         "anchor_x_in": [s.anchor[0] for s in ds.sequences],
                         "anchor_y_in": [s.anchor[1] for s in ds.sequences],
                         "true": [s.label for s in ds.sequences], "pred": labels, "confidence": confidence})


class EvaluateStage(Stage):

    def name(self) -> str:
        return "evaluate"

    def execute(self):
        outputs = {TEST: self.layout.path("predictions", "test.csv"),
                   "full_gtm": self.layout.path("predictions", "full_gtm.csv")}
        for stale in outputs.values():
            if os.path.exists(stale):
                os.remove(stale)
        model_path = self.layout.path("model", "model.json")
        if not os.path.exists(model_path):
            self.warn("no trained model, evaluation skipped")
            return
        model = load_model(model_path)
        os.makedirs(self.layout.path("predictions"), exist_ok=True)
        test = read_jsonl(self.layout.path("dataset", "sequences.jsonl"))
        test = SequenceDataset(apply_normalization(test.subset(TEST), model.normalization), model.normalization)
        full = read_jsonl(self.layout.path("dataset", "full_gtm.jsonl"))
        full = SequenceDataset(apply_normalization(full.sequences, model.normalization), model.normalization)
        for key, ds in ((TEST, test), ("full_gtm", full)):
            prediction = predict(model, ds)
            _prediction_frame(ds, prediction.labels, prediction.confidence) \
                .to_csv(outputs[key], index=False, float_format="%.17g")


def _confusion_from(path: str):
    if not os.path.exists(path):
        return None
    df = pd.read_csv(path)
    return confusion(df["true"].to_numpy(), df["pred"].to_numpy())


class ReportStage(Stage):

    def name(self) -> str:
        return "report"

    def execute(self):
        emit_report(build_bundle(self.config, self.layout), self.layout.out_dir)


def build_bundle(config: PipelineConfig, layout: RunLayout) -> ReportBundle:
    """
    Gathers the persisted outputs of a lab run into a report bundle.
    """
    bundle = ReportBundle()
    for slab_id in range(1, config.slabs + 1):
        for path, target in ((layout.slab_file(slab_id, "overlay.json"), bundle.overlays),
                             (layout.slab_file(slab_id, "cell_overlay.json"), bundle.dense_overlays)):
            if os.path.exists(path):
                for zone, m in read_overlay_json(path).items():
                    target[(slab_id, DefectClass.parse(zone))] = m
        centroids_path = layout.slab_file(slab_id, "centroids.json")
        if os.path.exists(centroids_path):
            with open(centroids_path) as f:
                for summary in json.load(f):
                    bundle.centroids[(slab_id, DefectClass.parse(summary["zone"]))] = summary["centroids_khz"]

    sequences_path = layout.path("dataset", "sequences.jsonl")
    if os.path.exists(sequences_path):
        ds = read_jsonl(sequences_path)
        lag_mean, lag_std, lag_count = corpus_autocorr([s for s in ds.sequences if not s.padded])
        bundle.dataset = DatasetSummary(ds.class_counts(TRAIN), ds.class_counts(TEST),
                                        sum(s.padded for s in ds.sequences), lag_mean, lag_std, lag_count)
    history_path = layout.path("model", "history.csv")
    if os.path.exists(history_path):
        bundle.history = TrainHistory.from_frame(pd.read_csv(history_path))
    bundle.confusion = _confusion_from(layout.path("predictions", "test.csv"))
    bundle.full_gtm_confusion = _confusion_from(layout.path("predictions", "full_gtm.csv"))
    bundle.warnings = layout.collect_warnings(STAGE_ORDER[:-1])
    return bundle


def make_stage(name: str, config: PipelineConfig, layout: RunLayout) -> Stage:
    match name:
        case "synth":
            return SynthStage(config, layout)
        case "analyze":
            return AnalyzeStage(config, layout)
        case "map":
            return MapStage(config, layout)
        case "cluster":
            return ClusterStage(config, layout)
        case "overlay":
            return OverlayStage(config, layout)
        case "sequences":
            return SequenceStage(config, layout)
        case "train":
            return TrainStage(config, layout)
        case "evaluate":
            return EvaluateStage(config, layout)
        case "report":
            return ReportStage(config, layout)
    raise ValueError(f"Unknown stage {name}")


def run_lab(config: PipelineConfig, stages: Sequence[str] = STAGE_ORDER) -> str:
    """
    Runs the lab pipeline stages in order into ``config.out_dir`` and returns the path
    of the report.

    :raises StageException: tagged with the failing stage.
    """
    layout = RunLayout(config.out_dir)
    os.makedirs(layout.out_dir, exist_ok=True)
    config.write_json(layout.path("config.json"))
    for name in stages:
        make_stage(name, config, layout).run()
    return layout.path("report.md")


def run_stage(name: str, fn, *args, **kwargs):
    """
    Calls a single-stage command, tagging any failure with the stage name.
    """
    try:
        return fn(*args, **kwargs)
    except StageException:
        raise
    except Exception as e:
        raise StageException(name, e) from e


def analyze_file(waveforms_csv: str, readings_csv: str, config: PipelineConfig) -> list[PeakReading]:
    readings = analyze(read_waveforms_csv(waveforms_csv), config.min_khz, config.hann, config.qa_radius_in)
    _makedirs_for(readings_csv)
    write_readings_csv(readings, readings_csv)
    return readings


def map_file(readings_csv: str, out_dir: str, config: PipelineConfig, spec_json: str | None = None) -> Field:
    spec = read_spec_json(spec_json) if spec_json else None
    f = interpolate(grid_for(read_readings_csv(readings_csv), spec), config.map_resolution_in, config.map_method)
    os.makedirs(out_dir, exist_ok=True)
    write_field_json(f, os.path.join(out_dir, "field.json"))
    render_heatmap(f, os.path.join(out_dir, f"heatmap.{config.image_format}"))
    return f


def cluster_file(readings_csv: str, out_dir: str, config: PipelineConfig,
                 width_in: float | None = None) -> list[ZoneDetection]:
    readings = read_readings_csv(readings_csv)
    width = width_in or grid_for(readings).width_in
    detections, warnings = cluster_readings(readings, width, config, 0)
    for w in warnings:
        logger.warning(w)
    os.makedirs(out_dir, exist_ok=True)
    write_detections(detections, os.path.join(out_dir, "detections.csv"), os.path.join(out_dir, "centroids.json"))
    return detections


def overlay_file(defective_csv: str, rects_json: str, out_dir: str, config: PipelineConfig,
                 readings_csv: str | None = None) -> dict[str, OverlayMetrics]:
    slab = config.slab_spec(0)
    mask = build_mask(read_rects_json(rects_json), slab.width_in, slab.height_in)
    defective = read_defective_csv(defective_csv)
    scan_points = read_readings_csv(readings_csv) if readings_csv else [r for pts in defective.values() for r in pts]
    results = overlay_zones(defective, scan_points, mask)
    os.makedirs(out_dir, exist_ok=True)
    write_overlay(results, os.path.join(out_dir, "overlay.json"), os.path.join(out_dir, "valid.csv"))
    every = [r for pts in defective.values() for r in pts]
    valid = [r for v, _ in results.values() for r in v]
    render_overlay(mask, every, valid, os.path.join(out_dir, "overlay.svg"))
    return {zone: m for zone, (_, m) in results.items()}


def train_file(dataset_jsonl: str, out_dir: str, config: PipelineConfig) -> TrainHistory:
    ds = read_jsonl(dataset_jsonl)
    if not ds.subset(TRAIN):
        ds = train_test_split(ds, config.split_ratio, config.derive_seed("split"), config.stratified)
    ds = normalize(ds)
    model_config = config.model_config()
    model, history = train(init_model(model_config), ds, model_config)
    os.makedirs(out_dir, exist_ok=True)
    save_model(model, os.path.join(out_dir, "model.json"))
    history.to_frame().to_csv(os.path.join(out_dir, "history.csv"), index=False, float_format="%.17g")
    return history


def predict_file(model_json: str, dataset_jsonl: str, predictions_csv: str) -> pd.DataFrame:
    model = load_model(model_json)
    raw = read_jsonl(dataset_jsonl)
    ds = SequenceDataset(apply_normalization(raw.sequences, model.normalization), model.normalization)
    prediction = predict(model, ds)
    df = _prediction_frame(ds, prediction.labels, prediction.confidence)
    _makedirs_for(predictions_csv)
    df.to_csv(predictions_csv, index=False, float_format="%.17g")
    return df


def report_from_dir(run_dir: str) -> list[str]:
    config = PipelineConfig.from_json(os.path.join(run_dir, "config.json"))
    layout = RunLayout(run_dir)
    return emit_report(build_bundle(config, layout), run_dir)


def defect_components(points: Sequence[PeakReading], xs: np.ndarray, ys: np.ndarray) -> list[list[PeakReading]]:
    """
    Groups points into 8-connected components on the lattice spanned by ``xs`` and
    ``ys``, each point snapping to its nearest lattice node. Components are ordered by
    their first node in row-major order.
    """
    xs, ys = np.asarray(xs), np.asarray(ys)
    occupied = np.zeros((len(ys), len(xs)), dtype=bool)
    nodes = []
    for p in points:
        node = int(np.argmin(np.abs(ys - p.y_in))), int(np.argmin(np.abs(xs - p.x_in)))
        occupied[node] = True
        nodes.append(node)
    labels, count = ndimage.label(occupied, structure=np.ones((3, 3), dtype=int))
    components = [[] for _ in range(count)]
    for p, node in zip(points, nodes):
        components[labels[node] - 1].append(p)
    return components


def run_field(config: PipelineConfig, readings_csv: str, model_json: str, out_dir: str | None = None,
              scope: str = "global") -> FieldSummary:
    """
    Classifies a deck: clusters its readings (by default over the whole deck), groups the
    defective points into connected regions, slides windows over each region in
    serpentine order, and attributes each prediction to the first point of its window.

    :raises StageException: tagged ``field-model`` when the model cannot be used.
    """
    layout = RunLayout(out_dir or config.out_dir)
    os.makedirs(layout.out_dir, exist_ok=True)
    model = run_stage("field-model", load_model, model_json)

    def classify() -> FieldSummary:
        readings = read_readings_csv(readings_csv)
        grid = infer_grid(readings)
        f = interpolate(grid, config.field_resolution_in, config.map_method)
        points = field_readings(f) if config.sequence_source == "field" else list(grid.readings)
        xs, ys = f.cell_centers() if config.sequence_source == "field" else (grid.xs, grid.ys)
        detections, warnings = cluster_readings(points, grid.width_in, config, 0, scope)
        defective = [r for d in detections for r in d.defective]

        values, anchors = [], []
        for component in defect_components(defective, xs, ys):
            stream = serpentine_order(component)
            for start, window, _ in window_stream([p.f_peak_khz for p in stream], model.config.seq_len,
                                                  config.stride):
                values.append(window)
                anchors.append(stream[start])
        counts = [0] * len(DefectClass)
        rows = []
        if values:
            prediction = predict_raw(model, np.array(values))
            counts = [int(c) for c in np.bincount(prediction.labels, minlength=len(DefectClass))]
            rows = [{"anchor_x_in": a.x_in, "anchor_y_in": a.y_in, "label": int(label),
                     "class": DefectClass(int(label)).display_name, "confidence": float(conf)}
                    for a, label, conf in zip(anchors, prediction.labels, prediction.confidence)]
        else:
            warnings.append("no defective points, nothing to classify")
        pd.DataFrame(rows, columns=["anchor_x_in", "anchor_y_in", "label", "class", "confidence"]) \
            .to_csv(layout.path("predictions.csv"), index=False, float_format="%.17g")

        map_path = layout.path("figures", f"prediction_map.{config.image_format}")
        markers = [MarkerSet(c.display_name, [(row["anchor_x_in"], row["anchor_y_in"]) for row in rows
                                              if row["label"] == int(c)], CLASS_COLORS[c], "black")
                   for c in DefectClass]
        render_heatmap(interpolate(grid, config.map_resolution_in, config.map_method), map_path,
                       markers=markers, title="Predicted defect types")
        summary = FieldSummary(counts, len(defective), len(values), warnings)
        emit_field_report(summary, layout.out_dir, map_path)
        return summary

    return run_stage("field", classify)
