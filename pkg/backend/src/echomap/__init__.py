__all__ = ["EchoMapException", "DefectClass", "DefectRect", "Figures", "SynthLab", "Spectral", "Mapping",
           "Clustering", "GroundTruth", "SequenceData", "Adam", "Neural", "Training", "EvalReport",
           "PipelineConfig", "Stage", "Pipeline", "CommandLineParser", "CommandLineValidator"]

# Import the submodules
from . import (EchoMapException, DefectClass, DefectRect, Figures, SynthLab, Spectral, Mapping,
               Clustering, GroundTruth, SequenceData, Adam, Neural, Training, EvalReport,
               PipelineConfig, Stage, Pipeline, CommandLineParser, CommandLineValidator)
