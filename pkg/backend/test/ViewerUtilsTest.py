import json
import os
import tempfile
import unittest
from pathlib import Path

import numpy as np
import pandas as pd

from components.utils import (list_runs, list_slabs, load_field, load_overlays, load_points, load_table,
                              read_report)
from echomap.Mapping import Field, write_field_json


class ViewerUtilsTestCase(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)
        self.run = self.root / "lab-7"
        slab = self.run / "slabs" / "slab_01"
        os.makedirs(slab)
        os.makedirs(self.run / "slabs" / "slab_02")
        os.makedirs(self.run / "tables")
        (self.run / "config.json").write_text("{}\n")
        values = np.array([[5.0, 6.0, np.nan], [7.0, 8.0, 9.0]])
        write_field_json(Field(values, 1.0, 3.0, 2.0), str(slab / "field.json"))
        with open(slab / "overlay.json", "w") as f:
            json.dump({"VOID": {"iou": 0.5, "precision": 0.75, "recall": 0.6, "f1": 0.6667}}, f)
        pd.DataFrame({"Slab": [1], "IoU": [0.5]}).to_csv(self.run / "tables" / "iou.csv", index=False)

    def tearDown(self):
        self.tmp.cleanup()

    def test_list_runs(self):
        """T11.1 - Runs are the directories holding a config.json"""
        self.assertEqual(list_runs(self.root), [self.run])
        self.assertEqual(list_runs(self.root / "missing"), [])

    def test_list_slabs(self):
        """T11.2 - Slab ids come from the slab directory names"""
        self.assertEqual(list_slabs(self.run), [1, 2])

    def test_load_field_drops_empty_cells(self):
        """T11.3 - The field is read in long form without its NaN cells"""
        df = load_field(self.run, 1)
        self.assertEqual(list(df.columns), ["y_in", "x_in", "f_peak_khz"])
        self.assertEqual(len(df), 5)
        first = df.iloc[0]
        self.assertEqual((first["y_in"], first["x_in"], first["f_peak_khz"]), (0.5, 0.5, 5.0))

    def test_missing_files(self):
        """T11.4 - Missing tables, points and reports have fallbacks"""
        self.assertIsNone(load_table(self.run, "f1"))
        self.assertEqual(len(load_table(self.run, "iou")), 1)
        points = load_points(self.run, 2, "valid.csv")
        self.assertTrue(points.empty)
        self.assertIn("f_peak_khz", points.columns)
        self.assertIn("No report", read_report(self.run))

    def test_load_overlays(self):
        """T11.5 - Overlay metrics are gathered per slab and zone"""
        df = load_overlays(self.run)
        self.assertEqual(list(df.columns), ["Slab", "Zone", "IoU", "Precision", "Recall", "F1"])
        self.assertEqual(len(df), 1)
        self.assertEqual(df.iloc[0]["Zone"], "Void")
        self.assertAlmostEqual(df.iloc[0]["Precision"], 0.75)
