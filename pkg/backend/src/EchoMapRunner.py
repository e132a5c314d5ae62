import logging
import os
import sys

from echomap.CommandLineParser import LOG_FORMAT, CommandLineParser
from echomap.CommandLineValidator import EXIT_INPUT, EXIT_STAGE, post_validate, validator
from echomap.EchoMapException import EchoMapException, FingerprintMismatchException, StageException
from echomap.Pipeline import (RunLayout, analyze_file, cluster_file, make_stage, map_file, overlay_file,
                              predict_file, report_from_dir, run_field, run_lab, run_stage, train_file)
from echomap.PipelineConfig import PipelineConfig

logger = logging.getLogger("echomap")

# Failures caused by the inputs rather than by a stage itself.
INPUT_ERRORS = (ValueError, OSError, KeyError, FingerprintMismatchException)


def configure_logging(level: int, log_file: str | None = None):
    handlers = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(level=level, format=LOG_FORMAT, handlers=handlers, force=True)


def dispatch(command: str, config: PipelineConfig, inputs: dict):
    out = config.out_dir
    match command:
        case "synth":
            os.makedirs(out, exist_ok=True)
            config.write_json(os.path.join(out, "config.json"))
            make_stage("synth", config, RunLayout(out)).run()
        case "analyze":
            run_stage("analyze", analyze_file, inputs["waveforms"], inputs["readings"], config)
        case "map":
            run_stage("map", map_file, inputs["readings"], out, config, inputs.get("spec"))
        case "cluster":
            run_stage("cluster", cluster_file, inputs["readings"], out, config, inputs.get("width_in"))
        case "overlay":
            run_stage("overlay", overlay_file, inputs["defective"], inputs["rects"], out, config,
                      inputs.get("readings"))
        case "train":
            run_stage("train", train_file, inputs["dataset"], out, config)
        case "predict":
            run_stage("predict", predict_file, inputs["model"], inputs["dataset"], inputs["predictions"])
        case "report":
            run_stage("report", report_from_dir, inputs.get("run_dir", out))
        case "run-lab":
            print(run_lab(config))
        case "run-field":
            summary = run_field(config, inputs["readings"], inputs["model"], out, config.cluster_scope)
            for name, pct in zip(("D1", "D2", "D3", "D4"), summary.percentages):
                print(f"{name}: {pct:.2f}%")


def main(argv: list[str]) -> int:
    # Verifier does most of the validation.
    args = validator.parse_args(argv)
    # And we also post-validate our args.
    post_validate(args)
    parser = CommandLineParser(args)
    configure_logging(parser.parse_log_level(), parser.parse_log_file())

    try:
        config = parser.parse_config()
    except (EchoMapException, ValueError, OSError) as e:
        print(f"echomap: [config] {e}", file=sys.stderr)
        return EXIT_INPUT

    try:
        dispatch(parser.parse_command(), config, parser.parse_inputs())
    except StageException as e:
        print(f"echomap: {e}", file=sys.stderr)
        logger.debug("stage failure", exc_info=e.cause)
        return EXIT_INPUT if isinstance(e.cause, INPUT_ERRORS) else EXIT_STAGE
    return 0


if __name__ == '__main__':
    exit(main(sys.argv[1:]))
