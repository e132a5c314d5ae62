import os
from argparse import ArgumentParser, ArgumentTypeError
from sys import stderr

from echomap.PipelineConfig import CLUSTER_SCOPES, IMAGE_FORMATS, MAP_METHODS, SEQUENCE_SOURCES

command_choices = ["synth", "analyze", "map", "cluster", "overlay", "train", "predict", "report", "run-lab",
                   "run-field"]

# Exit codes shared with the runner.
EXIT_ARGUMENTS = 2
EXIT_INPUT = 3
EXIT_STAGE = 4


# Utility methods used to check validity of command-line args.
def check_positive_int(val):
    """
    Returns the parsed positive integer, or raises ArgumentTypeError if the input is
    invalid.
    """
    try:
        ival = int(val)
        if ival <= 0:
            raise ArgumentTypeError(f"{val} is an invalid positive int value")
    except ValueError:
        raise ArgumentTypeError(f"{val} is an invalid positive int value")

    return ival


def check_nonnegative_int(val):
    try:
        ival = int(val)
        if ival < 0:
            raise ArgumentTypeError(f"{val} is an invalid non-negative int value")
    except ValueError:
        raise ArgumentTypeError(f"{val} is an invalid non-negative int value")

    return ival


def check_float(val):
    try:
        fval = float(val)
    except ValueError:
        raise ArgumentTypeError(f"{val} is not a number")

    return fval


def check_predicate(val, pred):
    """
    Checks whether a floating-point value satisfies a given predicate.
    """
    fval = check_float(val)
    if not pred(fval):
        raise ArgumentTypeError(str(val))
    return fval


# Helper predicates

def check_greater_than_zero(x):
    return check_predicate(x, lambda x: x > 0)


def check_unit_interval(x):
    return check_predicate(x, lambda x: 0 < x < 1)


def check_dropout(x):
    return check_predicate(x, lambda x: 0 <= x < 1)


def file_path(s: str):
    if not os.path.isfile(s):
        raise ArgumentTypeError(f"Not an existing file: {s}")
    return s


def dir_path(s: str):
    try:
        os.makedirs(s, exist_ok=True)
        return s
    except OSError:
        raise ArgumentTypeError(f"Not a valid target directory: {s}")


# Flags accepted by every subcommand.
common = ArgumentParser(add_help=False)
common.add_argument("--seed", help="Master seed. Every stage derives its own stream from it.",
                    type=check_nonnegative_int)
common.add_argument("--config", help="A JSON pipeline configuration. Command-line flags override it.",
                    metavar="JSON")
common.add_argument("-o", "--out", help="The output directory (run directory for lab commands).",
                    type=dir_path, metavar="DIR")
common.add_argument("-v", "--verbose", help="Logs progress at INFO level.", action="store_true")
common.add_argument("--log-file", help="Also writes the log to this file.", metavar="PATH", dest="log_file")

validator = ArgumentParser(prog="python EchoMapRunner.py",
                           description="Impact-echo defect pipeline: synthesizes or reads scans, maps peak "
                                       "frequencies, segments and validates defects, and classifies defect "
                                       "types with an LSTM.")
subcommands = validator.add_subparsers(dest="command", required=True, metavar="command")

# Lab slab settings
slab_parent = ArgumentParser(add_help=False)
slab_group = slab_parent.add_argument_group("Slabs", "Synthetic lab slab settings.")
slab_group.add_argument("-n", "--slabs", help="Number of lab slabs. Default is 8.", type=check_positive_int)
slab_group.add_argument("--defect-size", help="Side of the square seeded defects, in inches. Default is 12.",
                        type=check_greater_than_zero, metavar="inches", dest="defect_size_in")
slab_group.add_argument("--stress-bands", help="Uses widened, overlapping class frequency bands.",
                        action="store_true", dest="stress_bands")
slab_group.add_argument("--zero-defects", help="Synthesizes intact slabs without seeded defects.",
                        action="store_true", dest="zero_defects")

# Spectral settings
spectral_parent = ArgumentParser(add_help=False)
spectral_group = spectral_parent.add_argument_group("Spectral", "Peak frequency extraction.")
spectral_group.add_argument("--min-khz", help="Spectrum bins below this frequency are ignored. Default is 0.3.",
                            type=check_greater_than_zero, dest="min_khz")
spectral_group.add_argument("--hann", help="Applies a Hann window before the transform.", action="store_true",
                            default=None)
spectral_group.add_argument("--qa-radius", help="Neighbourhood radius of the consistency check, in inches. "
                                                "Default is 6.5.",
                            type=check_greater_than_zero, dest="qa_radius_in", metavar="inches")

# Mapping settings
map_parent = ArgumentParser(add_help=False)
map_group = map_parent.add_argument_group("Mapping", "Interpolation and heatmaps.")
map_group.add_argument("-m", "--method", help="Interpolation method. Default is bilinear.", choices=MAP_METHODS,
                       dest="map_method")
map_group.add_argument("-r", "--resolution-in", help="Field cell size in inches. Default is 1.",
                       type=check_greater_than_zero, dest="map_resolution_in", metavar="inches")
map_group.add_argument("-f", "--format", help="Heatmap image format. Default is svg.", choices=IMAGE_FORMATS,
                       dest="image_format")

# Clustering settings
cluster_parent = ArgumentParser(add_help=False)
cluster_group = cluster_parent.add_argument_group("Clustering", "Two-means defect segmentation.")
cluster_group.add_argument("-s", "--scope", help="Clusters each 30-inch zone or the whole slab.",
                           choices=CLUSTER_SCOPES)
cluster_group.add_argument("--restarts", help="Seeded k-means restarts. Default is 5.", type=check_positive_int)

# Model settings
model_parent = ArgumentParser(add_help=False)
model_group = model_parent.add_argument_group("Model", "LSTM classifier training.")
model_group.add_argument("-e", "--epochs", help="Training epochs. Default is 50.", type=check_positive_int)
model_group.add_argument("-b", "--batch-size", help="Mini-batch size. Default is 64.", type=check_positive_int,
                         dest="batch_size")
model_group.add_argument("--lr", help="Adam learning rate. Default is 0.001.", type=check_greater_than_zero)
model_group.add_argument("--dropout", help="Dropout after the first LSTM layer, the second LSTM layer and the "
                                           "dense layer. Default is 0.3 0.3 0.2.",
                         nargs=3, type=check_dropout, metavar=("r1", "r2", "r3"))
model_group.add_argument("--class-weighted", help="Weights the loss by inverse class frequency.",
                         action="store_true", default=None, dest="class_weighted")
model_group.add_argument("--float32", help="Trains in single precision.", action="store_true")

# Sequence settings
sequence_parent = ArgumentParser(add_help=False)
sequence_group = sequence_parent.add_argument_group("Sequences", "Labelled sequence construction.")
sequence_group.add_argument("-L", "--seq-length", help="Window length. Default is 20.", type=check_positive_int,
                            dest="seq_length")
sequence_group.add_argument("--stride", help="Window stride. Default is 1.", type=check_positive_int)
sequence_group.add_argument("--multiplicity", help="Times each point repeats in the stream. Default is 1.",
                            type=check_positive_int)
sequence_group.add_argument("--split-ratio", help="Train share of the sequences. Default is 0.8.",
                            type=check_unit_interval, dest="split_ratio")
sequence_group.add_argument("--unstratified", help="Splits without stratifying by class.", action="store_true")
sequence_group.add_argument("--sequence-source", help="Builds sequences from the scan grid or from the "
                                                      "interpolated field. Default is field.",
                            choices=SEQUENCE_SOURCES, dest="sequence_source")

synth = subcommands.add_parser("synth", parents=[common, slab_parent],
                               help="Synthesizes lab slabs (spec and waveforms) into the run directory.")

analyze = subcommands.add_parser("analyze", parents=[common, spectral_parent],
                                 help="Waveform CSV to peak-reading CSV.")
analyze.add_argument("waveforms", help="Waveform CSV.", type=file_path)
analyze.add_argument("readings", help="Output peak-reading CSV.")

map_command = subcommands.add_parser("map", parents=[common, map_parent],
                                     help="Peak-reading CSV to field JSON and heatmap.")
map_command.add_argument("readings", help="Peak-reading CSV.", type=file_path)
map_command.add_argument("--spec", help="Slab spec JSON fixing the grid shape and extent.", type=file_path)

cluster = subcommands.add_parser("cluster", parents=[common, cluster_parent],
                                 help="Peak-reading CSV to per-zone defective points and centroids.")
cluster.add_argument("readings", help="Peak-reading CSV.", type=file_path)
cluster.add_argument("--width", help="Slab width in inches. Inferred from the grid by default.",
                     type=check_greater_than_zero, dest="width_in", metavar="inches")

overlay = subcommands.add_parser("overlay", parents=[common, slab_parent],
                                 help="Defective points and defect rectangles to overlay metrics and figure.")
overlay.add_argument("defective", help="Defective-point CSV written by the cluster command.", type=file_path)
overlay.add_argument("rects", help="Defect rectangles JSON.", type=file_path)
overlay.add_argument("--readings", help="Every scan reading, used for recall. Defaults to the defective points.",
                     type=file_path)

train_command = subcommands.add_parser("train", parents=[common, model_parent, sequence_parent],
                                       help="Sequence JSONL to a trained model.")
train_command.add_argument("dataset", help="Sequence JSONL (raw kHz values).", type=file_path)

predict_command = subcommands.add_parser("predict", parents=[common],
                                         help="Model and sequence JSONL to a predictions CSV.")
predict_command.add_argument("model", help="Model JSON.", type=file_path)
predict_command.add_argument("dataset", help="Sequence JSONL (raw kHz values).", type=file_path)
predict_command.add_argument("predictions", help="Output predictions CSV.")

report = subcommands.add_parser("report", parents=[common],
                                help="Rebuilds report.md, tables and figures of a lab run directory.")
report.add_argument("run_dir", help="Lab run directory. Defaults to --out.", nargs="?")

run_lab = subcommands.add_parser("run-lab", parents=[common, slab_parent, spectral_parent, map_parent,
                                                     cluster_parent, sequence_parent, model_parent],
                                 help="Runs the whole lab pipeline into the run directory.")
run_lab.add_argument("--no-figures", help="Skips the per-slab zone and overlay figures.", action="store_true",
                     dest="no_figures")

run_field = subcommands.add_parser("run-field", parents=[common, map_parent, cluster_parent],
                                   help="Classifies the defects of a field deck with a trained model.")
run_field.add_argument("readings", help="Peak-reading CSV of the deck.", type=file_path)
run_field.add_argument("model", help="Model JSON.", type=file_path)


def post_validate(args):
    """
    Does a post-validation check on arguments argparse cannot relate to each other.
    """
    if args.config and not os.path.isfile(args.config):
        print(f"Configuration file not found: {args.config}", file=stderr)
        exit(EXIT_INPUT)
    if args.command == "report" and not (args.run_dir or args.out):
        print("The report command needs a run directory.", file=stderr)
        exit(EXIT_ARGUMENTS)
    if args.command == "report":
        run_dir = args.run_dir or args.out
        if not os.path.isfile(os.path.join(run_dir, "config.json")):
            print(f"Not a lab run directory (no config.json): {run_dir}", file=stderr)
            exit(EXIT_INPUT)
    if args.command == "run-field" and getattr(args, "scope", None) is None:
        args.scope = "global"
