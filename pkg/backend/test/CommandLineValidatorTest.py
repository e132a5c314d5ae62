import json
import os
import shutil
import tempfile
import unittest
from argparse import ArgumentTypeError

from echomap.CommandLineValidator import post_validate, validator


def validate(args) -> bool:
    try:
        args = validator.parse_args(args)
        post_validate(args)
    except SystemExit as e:
        return e.code == 0
    except ArgumentTypeError:
        return False
    except TypeError:
        return False

    return True


class CommandLineValidatorTest(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.mkdtemp()
        self.out = os.path.join(self.tmp, "out")
        self.csv = os.path.join(self.tmp, "readings.csv")
        with open(self.csv, "w") as f:
            f.write("point_id,x_in,y_in,f_peak_khz,qa\n")
        self.run_dir = os.path.join(self.tmp, "run")
        os.makedirs(self.run_dir)
        with open(os.path.join(self.run_dir, "config.json"), "w") as f:
            json.dump({}, f)

    def tearDown(self):
        shutil.rmtree(self.tmp, ignore_errors=True)

    def test_command_line_requires_a_command(self):
        self.assertFalse(validate([]))
        self.assertFalse(validate(["simulate"]))

    def test_command_line_accepts_synth(self):
        self.assertTrue(validate(["synth", "-n", "2", "-o", self.out]))

    def test_slabs_must_be_positive_int(self):
        self.assertFalse(validate(["synth", "-n", "0"]))
        self.assertFalse(validate(["synth", "-n", "2.5"]))
        self.assertFalse(validate(["synth", "-n", "x"]))

    def test_seed_may_be_zero_but_not_negative(self):
        self.assertTrue(validate(["synth", "--seed", "0", "-o", self.out]))
        self.assertFalse(validate(["synth", "--seed", "-1"]))

    def test_defect_size_must_be_positive(self):
        self.assertFalse(validate(["synth", "--defect-size", "0"]))
        self.assertTrue(validate(["synth", "--defect-size", "8.5", "-o", self.out]))

    def test_analyze_requires_existing_waveforms(self):
        self.assertFalse(validate(["analyze", os.path.join(self.tmp, "missing.csv"), "readings.csv"]))
        self.assertTrue(validate(["analyze", self.csv, os.path.join(self.tmp, "r.csv")]))
        self.assertFalse(validate(["analyze", self.csv]))

    def test_map_method_and_format_choices(self):
        self.assertTrue(validate(["map", self.csv, "-m", "bicubic", "-f", "ppm", "-o", self.out]))
        self.assertFalse(validate(["map", self.csv, "-m", "nearest"]))
        self.assertFalse(validate(["map", self.csv, "-f", "png"]))
        self.assertFalse(validate(["map", self.csv, "-r", "0"]))

    def test_cluster_scope_choices(self):
        self.assertTrue(validate(["cluster", self.csv, "-s", "global", "-o", self.out]))
        self.assertFalse(validate(["cluster", self.csv, "-s", "slab"]))
        self.assertFalse(validate(["cluster", self.csv, "--restarts", "0"]))

    def test_dropout_takes_three_rates_below_one(self):
        self.assertTrue(validate(["run-lab", "--dropout", "0.3", "0.3", "0.2", "-o", self.out]))
        self.assertFalse(validate(["run-lab", "--dropout", "0.3", "0.3"]))
        self.assertFalse(validate(["run-lab", "--dropout", "0.3", "0.3", "1.0"]))

    def test_split_ratio_lies_strictly_between_zero_and_one(self):
        self.assertFalse(validate(["run-lab", "--split-ratio", "1"]))
        self.assertFalse(validate(["run-lab", "--split-ratio", "0"]))
        self.assertTrue(validate(["run-lab", "--split-ratio", "0.75", "-o", self.out]))

    def test_model_flags_are_not_accepted_by_synth(self):
        self.assertFalse(validate(["synth", "-e", "5"]))

    def test_missing_config_file_is_rejected(self):
        self.assertFalse(validate(["synth", "--config", os.path.join(self.tmp, "missing.json")]))

    def test_report_needs_a_run_directory(self):
        self.assertFalse(validate(["report"]))
        self.assertFalse(validate(["report", self.tmp]))
        self.assertTrue(validate(["report", self.run_dir]))
        self.assertTrue(validate(["report", "-o", self.run_dir]))

    def test_run_field_needs_readings_and_model(self):
        self.assertFalse(validate(["run-field", self.csv]))
        self.assertFalse(validate(["run-field", self.csv, os.path.join(self.tmp, "model.json")]))
        self.assertTrue(validate(["run-field", self.csv, self.csv, "-o", self.out]))

    def test_run_field_defaults_to_global_scope(self):
        args = validator.parse_args(["run-field", self.csv, self.csv])
        post_validate(args)
        self.assertEqual(args.scope, "global")


if __name__ == '__main__':
    unittest.main()
