import dataclasses
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from echomap.EchoMapException import InvalidSpecException
from echomap.Neural import ModelConfig
from echomap.SynthLab import DEFAULT_DEFECT_SIZE_IN, SlabSpec, default_gtm_layout, stress_band_table

logger = logging.getLogger(__name__)

# Stage indices mixed into derived seeds.
SEED_STREAMS = {"synth": 1, "cluster": 2, "split": 3, "train": 4}
MAP_METHODS = ("bilinear", "bicubic")
IMAGE_FORMATS = ("svg", "ppm")
CLUSTER_SCOPES = ("zone", "global")
SEQUENCE_SOURCES = ("field", "grid")


@dataclass
class PipelineConfig:
    """
    Settings for a pipeline run. ``slab`` holds overrides for every lab slab's
    :class:`SlabSpec` (its seed is always derived from ``seed``); ``model`` is the
    classifier configuration, whose seed is likewise derived.
    """
    out_dir: str = "runs/lab"
    slabs: int = 8
    seed: int = 7
    slab: dict = field(default_factory=dict)
    defect_size_in: float = DEFAULT_DEFECT_SIZE_IN
    zero_defects: bool = False
    stress_bands: bool = False
    min_khz: float = 0.3
    hann: bool = False
    qa_radius_in: float = 6.5
    map_method: str = "bilinear"
    map_resolution_in: float = 1.0
    image_format: str = "svg"
    shared_color_scale: bool = True
    cluster_scope: str = "zone"
    restarts: int = 5
    seq_length: int = 20
    stride: int = 1
    multiplicity: int = 1
    split_ratio: float = 0.8
    stratified: bool = True
    sequence_source: str = "field"
    field_resolution_in: float = 1.0
    figures: bool = True
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = ModelConfig.from_dict(self.model)
        if self.slabs < 1:
            raise InvalidSpecException(f"slabs must be at least 1, got {self.slabs}")
        for name, value, choices in (("map_method", self.map_method, MAP_METHODS),
                                     ("image_format", self.image_format, IMAGE_FORMATS),
                                     ("cluster_scope", self.cluster_scope, CLUSTER_SCOPES),
                                     ("sequence_source", self.sequence_source, SEQUENCE_SOURCES)):
            if value not in choices:
                raise InvalidSpecException(f"{name} must be one of {choices}, got {value}")
        if not 0 < self.split_ratio < 1:
            raise InvalidSpecException(f"split_ratio must lie in (0, 1), got {self.split_ratio}")
        for name in ("seq_length", "stride", "multiplicity", "restarts"):
            if getattr(self, name) < 1:
                raise InvalidSpecException(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("map_resolution_in", "field_resolution_in", "qa_radius_in", "defect_size_in"):
            if getattr(self, name) <= 0:
                raise InvalidSpecException(f"{name} must be positive, got {getattr(self, name)}")
        allowed = {f.name for f in dataclasses.fields(SlabSpec)} - {"seed"}
        unknown = set(self.slab) - allowed
        if unknown:
            raise InvalidSpecException(f"Unknown slab keys: {sorted(unknown)}")
        # Builds one spec so that a bad override fails here rather than mid-run.
        self.slab_spec(0)

    def derive_seed(self, stage: str, index: int = 0) -> int:
        """
        An independent, reproducible seed for a stage and an item within it.
        """
        sequence = np.random.SeedSequence([self.seed, SEED_STREAMS[stage], index])
        return int(sequence.generate_state(1)[0])

    def slab_spec(self, index: int) -> SlabSpec:
        overrides = dict(self.slab)
        width = float(overrides.get("width_in", 120.0))
        height = float(overrides.get("height_in", 40.0))
        overrides.setdefault("defects", [] if self.zero_defects else default_gtm_layout(width, height,
                                                                                      self.defect_size_in))
        if self.stress_bands:
            overrides.setdefault("band_table", stress_band_table())
        overrides["seed"] = self.derive_seed("synth", index)
        return SlabSpec.from_dict(overrides)

    def model_config(self) -> ModelConfig:
        return dataclasses.replace(self.model, seq_len=self.seq_length, seed=self.derive_seed("train"))

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name not in ("slab", "model")}
        d["slab"] = _jsonable(self.slab)
        d["model"] = self.model.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise InvalidSpecException(f"Unknown config keys: {sorted(unknown)}")
        kwargs = dict(d)
        if "model" in kwargs:
            kwargs["model"] = ModelConfig.from_dict(kwargs["model"])
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path: str) -> "PipelineConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def write_json(self, path: str):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")

    def with_overrides(self, **overrides) -> "PipelineConfig":
        """
        Returns a copy with the non-None overrides applied; ``model`` overrides are
        merged into the model configuration.
        """
        overrides = {k: v for k, v in overrides.items() if v is not None}
        model = overrides.pop("model", None)
        config = dataclasses.replace(self, **overrides)
        if model:
            config = dataclasses.replace(config, model=dataclasses.replace(config.model, **model))
        return config


def _jsonable(value):
    if isinstance(value, dict):
        return {str(getattr(k, "name", k)): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, "to_dict"):
        return value.to_dict()
    return value
