"""Heart and breathing rate from FMCW radar I/Q captures."""
from .errors import (
    ConfigError,
    ConvergenceError,
    CubeFormatError,
    DegenerateFitError,
    EstimationError,
    NoTargetError,
    PipelineError,
    VitalsError,
)
from .evaluation import EvalSummary, evaluate
from .ingest import DataCube, EstimateRecord, Layout, Method, RadarConfig, read_iq_cube, write_iq_cube
from .pipeline import PipelineOptions, WindowSpec, run_pipeline, stream_windows
from .simulate import ChestModel, Scene, synthesize_cube

__version__ = "0.1.0"

__all__ = [
    "ChestModel",
    "ConfigError",
    "ConvergenceError",
    "CubeFormatError",
    "DataCube",
    "DegenerateFitError",
    "EstimateRecord",
    "EstimationError",
    "EvalSummary",
    "Layout",
    "Method",
    "NoTargetError",
    "PipelineError",
    "PipelineOptions",
    "RadarConfig",
    "Scene",
    "VitalsError",
    "WindowSpec",
    "evaluate",
    "read_iq_cube",
    "run_pipeline",
    "stream_windows",
    "synthesize_cube",
    "write_iq_cube",
]
