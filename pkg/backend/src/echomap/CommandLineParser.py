import logging

from echomap.PipelineConfig import PipelineConfig

# Command-line destinations that map one-to-one onto PipelineConfig fields.
CONFIG_FLAGS = ["seed", "out", "slabs", "defect_size_in", "min_khz", "hann", "qa_radius_in", "map_method",
                "map_resolution_in", "image_format", "scope", "restarts", "seq_length", "stride", "multiplicity",
                "split_ratio", "sequence_source"]
MODEL_FLAGS = ["epochs", "batch_size", "lr", "class_weighted"]
RENAMED = {"out": "out_dir", "scope": "cluster_scope", "lr": "learning_rate"}

LOG_FORMAT = "[%(asctime)s][%(levelname)s] %(name)s: %(message)s"


class CommandLineParser:

    def __init__(self, args):
        """
        Constructor with user input from command-line args.
        """
        # A namespace of command-line arguments; most flags exist only on some
        # subcommands.
        self.args = args

    def _get(self, name, default=None):
        return getattr(self.args, name, default)

    def parse_command(self) -> str:
        return self.args.command

    def parse_config(self) -> PipelineConfig:
        """
        Builds the pipeline configuration: defaults, then the JSON file given with
        ``--config``, then the command-line flags.

        :raises InvalidSpecException: if the JSON or a flag violates the configuration's
            invariants.
        """
        config = PipelineConfig.from_json(self.args.config) if self.args.config else PipelineConfig()
        overrides = {RENAMED.get(name, name): self._get(name) for name in CONFIG_FLAGS}
        for flag in ("stress_bands", "zero_defects"):
            if self._get(flag):
                overrides[flag] = True
        if self._get("unstratified"):
            overrides["stratified"] = False
        if self._get("no_figures"):
            overrides["figures"] = False
        overrides["model"] = self.parse_model_overrides()
        return config.with_overrides(**overrides)

    def parse_model_overrides(self) -> dict:
        model = {RENAMED.get(name, name): self._get(name) for name in MODEL_FLAGS if self._get(name) is not None}
        if dropout := self._get("dropout"):
            model["dropout_rates"] = tuple(dropout)
        if self._get("float32"):
            model["precision"] = "float32"
        return model

    def parse_inputs(self) -> dict:
        """
        The positional file arguments of the subcommand.
        """
        names = ["waveforms", "readings", "spec", "width_in", "defective", "rects", "dataset", "model", "predictions",
                 "run_dir"]
        return {name: self._get(name) for name in names if self._get(name) is not None}

    def parse_log_level(self) -> int:
        return logging.INFO if self.args.verbose else logging.WARNING

    def parse_log_file(self) -> str | None:
        return self.args.log_file
