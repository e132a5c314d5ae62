import json
import logging
import os
from abc import ABC, abstractmethod
from dataclasses import dataclass

from echomap.EchoMapException import StageException
from echomap.PipelineConfig import PipelineConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunLayout:
    """
    Path convention of a run directory. Each stage reads only files written by the
    stages before it.
    """
    out_dir: str

    def path(self, *parts: str) -> str:
        return os.path.join(self.out_dir, *parts)

    def slab_dir(self, slab_id: int) -> str:
        return self.path("slabs", f"slab_{slab_id:02d}")

    def slab_file(self, slab_id: int, name: str) -> str:
        return os.path.join(self.slab_dir(slab_id), name)

    def slab_figure(self, slab_id: int, name: str) -> str:
        return os.path.join(self.slab_dir(slab_id), "figures", name)

    def warnings_file(self, stage: str) -> str:
        return self.path("warnings", f"{stage}.json")

    def collect_warnings(self, stages: list[str]) -> list[str]:
        warnings = []
        for stage in stages:
            path = self.warnings_file(stage)
            if os.path.exists(path):
                with open(path) as f:
                    warnings += [f"[{stage}] {w}" for w in json.load(f)]
        return warnings


class Stage(ABC):
    """
    One step of the pipeline. Subclasses implement :meth:`execute`; :meth:`run` adds
    the stage name to any failure and persists the stage's warnings.
    """

    def __init__(self, config: PipelineConfig, layout: RunLayout):
        self.config = config
        self.layout = layout
        self.warnings: list[str] = []

    @abstractmethod
    def execute(self):
        pass

    @abstractmethod
    def name(self) -> str:
        pass

    def warn(self, message: str):
        logger.warning("%s: %s", self.name(), message)
        self.warnings.append(message)

    def run(self):
        logger.info("Running stage %s", self.name())
        self.warnings = []
        try:
            self.execute()
            path = self.layout.warnings_file(self.name())
            os.makedirs(os.path.dirname(path), exist_ok=True)
            with open(path, "w") as f:
                json.dump(self.warnings, f, indent=2)
                f.write("\n")
        except StageException:
            raise
        except Exception as e:
            raise StageException(self.name(), e) from e
