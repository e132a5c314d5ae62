import filecmp
import json
import os
import shutil
import tempfile
import unittest

import numpy as np
import pandas as pd

from echomap.DefectClass import DefectClass
from echomap.DefectRect import DefectRect
from echomap.EchoMapException import StageException
from echomap.GroundTruth import build_mask, point_in_defect
from echomap.Pipeline import (STAGE_ORDER, analyze_file, cluster_file, cluster_readings, defect_components,
                              map_file, overlay_file, predict_file, read_overlay_json, report_from_dir, run_field,
                              run_lab)
from echomap.SequenceData import TEST, read_jsonl
from echomap.Spectral import analyze, write_readings_csv
from echomap.SynthLab import field_deck_spec, synth_slab, write_spec_json, write_waveforms_csv
from test.EchoMapTestHelpers import grid_readings, reading, small_lab_config

SLAB_FILES = ["spec.json", "waveforms.csv", "readings.csv", "field.json", "heatmap.svg", "detections.csv",
              "centroids.json", "cells.csv", "cell_detections.csv", "overlay.json", "valid.csv",
              "cell_overlay.json", "cell_valid.csv"]


class LabRunTestCase(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.mkdtemp()
        cls.config = small_lab_config(os.path.join(cls.tmp, "lab"))
        cls.report = run_lab(cls.config)
        cls.run_dir = cls.config.out_dir

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.tmp, ignore_errors=True)

    def path(self, *parts):
        return os.path.join(self.run_dir, *parts)

    def test_run_directory_layout(self):
        """T10.1.1 - Every stage leaves its files in the run directory"""
        self.assertEqual(self.report, self.path("report.md"))
        for slab_id in (1, 2):
            for name in SLAB_FILES:
                self.assertTrue(os.path.exists(self.path("slabs", f"slab_{slab_id:02d}", name)), name)
        for name in ("config.json", "dataset/sequences.jsonl", "dataset/full_gtm.jsonl", "model/model.json",
                     "model/history.csv", "predictions/test.csv", "predictions/full_gtm.csv", "tables/iou.csv",
                     "figures/training_history.svg"):
            self.assertTrue(os.path.exists(self.path(name)), name)
        for stage in STAGE_ORDER:
            self.assertTrue(os.path.exists(self.path("warnings", f"{stage}.json")), stage)

    def test_validated_points_lie_inside_defects(self):
        """T10.1.2 - Every validated point sits inside its own zone's defect"""
        with open(self.path("slabs", "slab_01", "spec.json")) as f:
            rects = [DefectRect.from_dict(r) for r in json.load(f)["defects"]]
        mask = build_mask(rects)
        valid = pd.read_csv(self.path("slabs", "slab_01", "valid.csv"))
        self.assertGreater(len(valid), 0)
        for row in valid.itertuples(index=False):
            self.assertTrue(point_in_defect(mask, row.x_in, row.y_in))
            rect = next(r for r in rects if r.contains(row.x_in, row.y_in))
            self.assertEqual(rect.defect_class.name, row.zone)

    def test_overlay_finds_the_seeded_defects(self):
        """T10.1.3 - Cluster 0 of each zone is dominated by defect points"""
        precisions = [m.precision for slab_id in (1, 2)
                      for m in read_overlay_json(self.path("slabs", f"slab_{slab_id:02d}", "overlay.json")).values()]
        self.assertEqual(len(precisions), 8)
        self.assertGreaterEqual(float(np.mean(precisions)), 0.8)

    def test_sequence_corpus(self):
        """T10.1.4 - The corpus is split, labelled by zone and predicted on its test split"""
        ds = read_jsonl(self.path("dataset", "sequences.jsonl"))
        self.assertTrue(all(s.split in ("train", "test") for s in ds.sequences))
        self.assertTrue(all(len(s.values) == self.config.seq_length for s in ds.sequences))
        self.assertTrue(all(DefectClass(s.label).name == s.zone for s in ds.sequences))
        self.assertEqual(set(s.slab_id for s in ds.sequences), {1, 2})
        predictions = pd.read_csv(self.path("predictions", "test.csv"))
        self.assertEqual(len(predictions), len(ds.subset(TEST)))
        self.assertEqual(list(predictions.columns),
                         ["slab", "zone", "anchor_x_in", "anchor_y_in", "true", "pred", "confidence"])

    def test_history_covers_every_epoch(self):
        """T10.1.5 - The training history has the untrained entry plus one row per epoch"""
        history = pd.read_csv(self.path("model", "history.csv"))
        self.assertEqual(len(history), self.config.model.epochs + 1)

    def test_report_sections(self):
        """T10.1.6 - The report covers overlay, dataset and classification"""
        with open(self.report) as f:
            report = f.read()
        for heading in ("## Ground-truth overlay (scan grid)", "## Sequence dataset", "## Classification (test split)",
                        "## Classification (all ground-truth cells)", "## Training", "## Warnings"):
            self.assertIn(heading, report)

    def test_report_rebuilds_identically(self):
        """T10.1.7 - Rebuilding the report from the run directory gives the same text"""
        with open(self.report) as f:
            before = f.read()
        report_from_dir(self.run_dir)
        with open(self.report) as f:
            self.assertEqual(f.read(), before)

    def test_runs_are_reproducible(self):
        """T10.1.8 - A second run with the same configuration writes identical files"""
        config = small_lab_config(os.path.join(self.tmp, "again"))
        run_lab(config)
        for name in ("slabs/slab_02/readings.csv", "slabs/slab_02/cell_valid.csv", "dataset/sequences.jsonl",
                     "model/model.json", "predictions/test.csv", "report.md"):
            self.assertTrue(filecmp.cmp(self.path(name), os.path.join(config.out_dir, name), shallow=False), name)

    def test_predict_file(self):
        """T10.1.9 - Raw sequence files are predicted with the model's stored normalization"""
        out = os.path.join(self.tmp, "predict", "full.csv")
        df = predict_file(self.path("model", "model.json"), self.path("dataset", "full_gtm.jsonl"), out)
        stage = pd.read_csv(self.path("predictions", "full_gtm.csv"))
        np.testing.assert_array_equal(df["pred"].to_numpy(), stage["pred"].to_numpy())
        self.assertTrue(os.path.exists(out))

    def test_field_deck(self):
        """T10.1.10 - A field deck is classified with the lab model"""
        spec = field_deck_spec(80.0, 40.0, [DefectRect(20.0, 12.0, 16.0, 16.0, DefectClass.VOID),
                                            DefectRect(52.0, 8.0, 12.0, 20.0, DefectClass.HONEYCOMB)], seed=5)
        waveforms, _ = synth_slab(spec)
        deck = os.path.join(self.tmp, "deck")
        os.makedirs(deck, exist_ok=True)
        readings_csv = os.path.join(deck, "readings.csv")
        write_readings_csv(analyze(waveforms), readings_csv)
        out = os.path.join(deck, "out")
        summary = run_field(self.config, readings_csv, self.path("model", "model.json"), out)
        self.assertGreater(summary.defective_points, 0)
        self.assertEqual(sum(summary.counts), summary.sequences)
        self.assertAlmostEqual(sum(summary.percentages), 100.0)
        predictions = pd.read_csv(os.path.join(out, "predictions.csv"))
        self.assertEqual(len(predictions), summary.sequences)
        for name in ("field_report.md", "figures/prediction_map.svg", "tables/field_predictions.csv"):
            self.assertTrue(os.path.exists(os.path.join(out, name)), name)

    def test_unusable_model(self):
        """T10.1.11 - A missing model file fails the field run at model loading"""
        with self.assertRaises(StageException) as cm:
            run_field(self.config, self.path("slabs", "slab_01", "readings.csv"), self.path("missing.json"),
                      os.path.join(self.tmp, "nomodel"))
        self.assertEqual(cm.exception.stage, "field-model")


class FieldDeckTestCase(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.mkdtemp()
        model = {"layer1_units": 16, "layer2_units": 8, "dense_units": 8, "epochs": 30, "learning_rate": 0.01,
                 "dropout_rates": (0.0, 0.0, 0.0)}
        cls.config = small_lab_config(os.path.join(cls.tmp, "lab"), slabs=4, model=model)
        run_lab(cls.config)

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.tmp, ignore_errors=True)

    def test_dominant_shallow_delamination_is_the_modal_class(self):
        """T10.5.1 - A deck mostly covered by shallow delaminations reports them as the modal class"""
        spec = field_deck_spec(96.0, 40.0, [DefectRect(8.0, 12.0, 24.0, 16.0, DefectClass.SHALLOW_DELAM),
                                            DefectRect(44.0, 12.0, 24.0, 16.0, DefectClass.SHALLOW_DELAM),
                                            DefectRect(80.0, 16.0, 8.0, 8.0, DefectClass.VOID)], seed=3)
        waveforms, _ = synth_slab(spec)
        readings_csv = os.path.join(self.tmp, "readings.csv")
        write_readings_csv(analyze(waveforms), readings_csv)
        out = os.path.join(self.tmp, "deck")
        summary = run_field(self.config, readings_csv, os.path.join(self.config.out_dir, "model", "model.json"), out)
        self.assertEqual(summary.modal_class(), DefectClass.SHALLOW_DELAM, msg=str(summary.counts))
        with open(os.path.join(out, "field_report.md")) as f:
            self.assertIn("Modal class: Shallow Delamination", f.read())


class ZeroDefectRunTestCase(unittest.TestCase):

    def test_intact_slabs_skip_the_classifier(self):
        """T10.2.1 - Intact slabs produce an empty corpus, no model and a report saying so"""
        with tempfile.TemporaryDirectory() as tmp:
            config = small_lab_config(tmp, zero_defects=True, slabs=1)
            report = run_lab(config)
            with open(report) as f:
                text = f.read()
            self.assertIn("The classifier stage did not run.", text)
            self.assertFalse(os.path.exists(os.path.join(tmp, "model", "model.json")))
            self.assertEqual(len(read_jsonl(os.path.join(tmp, "dataset", "sequences.jsonl"))), 0)
            with open(os.path.join(tmp, "warnings", "train.json")) as f:
                self.assertTrue(any("skipped" in w for w in json.load(f)))

    def test_failing_stage_is_named(self):
        """T10.2.2 - A stage whose inputs are missing fails with its own name"""
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(StageException) as cm:
                run_lab(small_lab_config(tmp), ["analyze"])
            self.assertEqual(cm.exception.stage, "analyze")
            self.assertIsInstance(cm.exception.cause, OSError)


class FileCommandTestCase(unittest.TestCase):

    def test_single_slab_commands(self):
        """T10.3.1 - analyze, map, cluster and overlay chain through files"""
        config = small_lab_config("unused")
        spec = config.slab_spec(0)
        waveforms, _ = synth_slab(spec)
        with tempfile.TemporaryDirectory() as tmp:
            waveforms_csv, spec_json = os.path.join(tmp, "waveforms.csv"), os.path.join(tmp, "spec.json")
            write_waveforms_csv(waveforms, waveforms_csv)
            write_spec_json(spec, spec_json)
            readings_csv = os.path.join(tmp, "readings", "readings.csv")
            readings = analyze_file(waveforms_csv, readings_csv, config)
            self.assertEqual(len(readings), spec.n_points)
            f = map_file(readings_csv, os.path.join(tmp, "map"), config, spec_json)
            self.assertEqual(f.values.shape, (40, 120))
            detections = cluster_file(readings_csv, os.path.join(tmp, "cluster"), config)
            self.assertEqual([d.zone.defect_class for d in detections], list(DefectClass))
            metrics = overlay_file(os.path.join(tmp, "cluster", "detections.csv"), spec_json,
                                   os.path.join(tmp, "overlay"), config, readings_csv)
            self.assertEqual(set(metrics), {c.name for c in DefectClass})
            for name in ("map/field.json", "map/heatmap.svg", "cluster/centroids.json", "overlay/overlay.json",
                         "overlay/valid.csv", "overlay/overlay.svg"):
                self.assertTrue(os.path.exists(os.path.join(tmp, name)), name)


class HelperTestCase(unittest.TestCase):

    def test_global_scope_splits_one_clustering(self):
        """T10.4.1 - Global clustering shares one result across the zone views"""
        readings = grid_readings(2, 8, 120.0, 10.0, lambda x, y: 4.0 if 45 < x < 60 else 10.0)
        config = small_lab_config("unused")
        detections, warnings = cluster_readings(readings, 120.0, config, 0, "global")
        self.assertEqual(warnings, [])
        self.assertEqual(len(detections), 4)
        self.assertEqual([len(d.defective) for d in detections], [0, 2, 0, 0])
        self.assertTrue(all(d.result is detections[0].result for d in detections))

    def test_small_zones_become_warnings(self):
        """T10.4.2 - Zones without two usable readings are skipped with a warning"""
        readings = [reading(10.0, 1.0, 9.0), reading(20.0, 1.0, 4.0), reading(40.0, 1.0, 9.0)]
        detections, warnings = cluster_readings(readings, 120.0, small_lab_config("unused"), 0, "zone")
        self.assertEqual([d.zone.name for d in detections], ["SHALLOW_DELAM"])
        self.assertEqual(len(warnings), 3)
        _, warnings = cluster_readings(readings[:1], 120.0, small_lab_config("unused"), 0, "global")
        self.assertEqual(len(warnings), 1)

    def test_connected_components(self):
        """T10.4.3 - Diagonal neighbours join a component, separated groups do not"""
        xs = ys = np.arange(6.0)
        points = [reading(0.0, 0.0, 4.0), reading(1.0, 1.0, 4.0), reading(4.0, 4.0, 4.0), reading(5.0, 4.0, 4.0)]
        components = defect_components(points, xs, ys)
        self.assertEqual([len(c) for c in components], [2, 2])
        self.assertEqual(components[1][0].x_in, 4.0)
        self.assertEqual(defect_components([], xs, ys), [])


if __name__ == '__main__':
    unittest.main()
