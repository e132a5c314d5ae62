import os
import tempfile
import unittest

import numpy as np

from echomap.DefectClass import DefectClass
from echomap.EchoMapException import ShapeMismatchException
from echomap.EvalReport import (DatasetSummary, FieldSummary, ReportBundle, class_metrics, confusion,
                                emit_field_report, emit_report, markdown_table, metric_table, slab_iou_stats)
from echomap.GroundTruth import OverlayMetrics
from echomap.Training import TrainHistory


def overlays() -> dict:
    return {(0, DefectClass.SHALLOW_DELAM): OverlayMetrics(9, 1.0, 0.8, 1.0, 1.0, 1.0, 9),
            (0, DefectClass.HONEYCOMB): OverlayMetrics(6, 0.75, 0.6, 0.75, 0.5, 0.6, 8),
            (1, DefectClass.SHALLOW_DELAM): OverlayMetrics(9, 1.0, 0.7, 1.0, 1.0, 1.0, 9)}


class ConfusionTestCase(unittest.TestCase):

    def test_counts_and_metrics(self):
        """T8.1.1 - Per-class precision, recall and F1 follow from the confusion matrix"""
        cm = confusion([0, 0, 1, 1, 2, 3], [0, 1, 1, 1, 2, 2])
        self.assertEqual(cm.total, 6)
        self.assertEqual(cm.counts[0, 1], 1)
        m = class_metrics(cm)
        np.testing.assert_allclose(m.precision, [1.0, 2 / 3, 0.5, 0.0])
        np.testing.assert_allclose(m.recall, [0.5, 1.0, 1.0, 0.0])
        np.testing.assert_allclose(m.f1, [2 / 3, 0.8, 2 / 3, 0.0])
        self.assertEqual(m.support, [2, 2, 1, 1])
        self.assertAlmostEqual(m.accuracy, 4 / 6)
        self.assertEqual(m.undefined, ["precision D4"])

    def test_empty_and_mismatched(self):
        """T8.1.2 - Empty matrices report zeros and mismatched label lists are rejected"""
        m = class_metrics(confusion([], []))
        self.assertEqual(m.accuracy, 0.0)
        self.assertIn("accuracy", m.undefined)
        with self.assertRaises(ShapeMismatchException):
            confusion([0, 1], [0])

    def test_metrics_frame_has_overall_row(self):
        """T8.1.3 - The class table ends with the overall accuracy"""
        df = class_metrics(confusion([0, 1, 2, 3], [0, 1, 2, 3])).to_frame()
        self.assertEqual(len(df), 5)
        self.assertEqual(df.iloc[-1]["Per-Class Accuracy"], 1.0)
        self.assertEqual(df.iloc[0]["Class"], "D1 Shallow Delamination")


class TableTestCase(unittest.TestCase):

    def test_metric_table_layout(self):
        """T8.2.1 - One row per slab and an Avg row, missing zones left empty"""
        df = metric_table(overlays(), "iou")
        self.assertEqual(list(df["Slab"]), ["Slab 0", "Slab 1", "Avg"])
        self.assertEqual(list(df.columns), ["Slab", "D1", "D2", "D3", "D4", "Mean"])
        self.assertAlmostEqual(df.loc[0, "Mean"], 0.7)
        self.assertTrue(np.isnan(df.loc[1, "D2"]))
        self.assertAlmostEqual(df.loc[2, "D1"], 0.75)

    def test_slab_iou_stats(self):
        """T8.2.2 - IoU statistics are taken over per-slab means"""
        mean, std = slab_iou_stats(overlays())
        self.assertAlmostEqual(mean, 0.7)
        self.assertAlmostEqual(std, 0.0)
        self.assertEqual(slab_iou_stats({}), (0.0, 0.0))

    def test_markdown(self):
        """T8.2.3 - Tables render as pipe tables with four decimals and blanks for NaN"""
        md = markdown_table(metric_table(overlays(), "iou"))
        lines = md.splitlines()
        self.assertEqual(lines[0], "| Slab | D1 | D2 | D3 | D4 | Mean |")
        self.assertEqual(lines[2], "| Slab 0 | 0.8000 | 0.6000 |  |  | 0.7000 |")


class ReportTestCase(unittest.TestCase):

    def test_full_report(self):
        """T8.3.1 - The report carries overlay, dataset, classification and training sections"""
        history = TrainHistory([1.386, 1.0], [0.25, 0.6], [0.25, 0.5])
        bundle = ReportBundle(overlays=overlays(), centroids={(0, DefectClass.SHALLOW_DELAM): [4.2, 9.1]},
                              confusion=confusion([0, 1, 2, 3], [0, 1, 2, 2]), history=history,
                              dataset=DatasetSummary([8, 8, 8, 8], [2, 2, 2, 2], 1, 0.6, 0.1, 40),
                              warnings=["[cluster] slab 1 zone VOID: too small"])
        with tempfile.TemporaryDirectory() as tmp:
            written = emit_report(bundle, tmp)
            names = {os.path.relpath(p, tmp) for p in written}
            with open(os.path.join(tmp, "report.md")) as f:
                report = f.read()
        for name in ("report.md", "tables/iou.csv", "tables/f1.csv", "tables/overlap.csv", "tables/centroids.csv",
                     "tables/dataset.csv", "tables/classification.csv", "tables/classification_confusion.csv",
                     "tables/history.csv", "figures/training_history.svg"):
            self.assertIn(os.path.normpath(name), names)
        self.assertIn("Mean IoU across slabs: 0.7000", report)
        self.assertIn("Sequences: 40 (32 train / 8 test), 1 padded", report)
        self.assertIn("- Accuracy: 0.7500", report)
        self.assertIn("- [cluster] slab 1 zone VOID: too small", report)

    def test_empty_report(self):
        """T8.3.2 - A run without overlays or a classifier says so"""
        with tempfile.TemporaryDirectory() as tmp:
            emit_report(ReportBundle(), tmp)
            with open(os.path.join(tmp, "report.md")) as f:
                report = f.read()
        self.assertIn("No overlay metrics were produced.", report)
        self.assertIn("The classifier stage did not run.", report)
        self.assertTrue(report.rstrip().endswith("None."))

    def test_report_is_deterministic(self):
        """T8.3.3 - The same bundle gives byte-identical reports"""
        bundle = ReportBundle(overlays=overlays(), confusion=confusion([0, 1], [0, 0]))
        contents = []
        for _ in range(2):
            with tempfile.TemporaryDirectory() as tmp:
                emit_report(bundle, tmp)
                with open(os.path.join(tmp, "report.md")) as f:
                    contents.append(f.read())
        self.assertEqual(contents[0], contents[1])


class FieldReportTestCase(unittest.TestCase):

    def test_percentages_and_modal_class(self):
        """T8.4.1 - Field predictions are summarised as class shares"""
        summary = FieldSummary([1, 6, 3, 0], 40, 10)
        self.assertEqual(summary.percentages, [10.0, 60.0, 30.0, 0.0])
        self.assertEqual(summary.modal_class(), DefectClass.HONEYCOMB)
        self.assertIsNone(FieldSummary([0, 0, 0, 0], 0, 0).modal_class())

    def test_field_report(self):
        """T8.4.2 - The field report lists the class shares, or says nothing was classified"""
        with tempfile.TemporaryDirectory() as tmp:
            emit_field_report(FieldSummary([1, 6, 3, 0], 40, 10), tmp, os.path.join(tmp, "figures", "map.svg"))
            with open(os.path.join(tmp, "field_report.md")) as f:
                report = f.read()
            self.assertTrue(os.path.exists(os.path.join(tmp, "tables", "field_predictions.csv")))
        self.assertIn("Modal class: Honeycombing", report)
        self.assertIn("](figures/map.svg)", report)
        with tempfile.TemporaryDirectory() as tmp:
            emit_field_report(FieldSummary([0, 0, 0, 0], 0, 0, ["no defective points"]), tmp)
            with open(os.path.join(tmp, "field_report.md")) as f:
                self.assertIn("nothing was classified", f.read())


if __name__ == '__main__':
    unittest.main()
