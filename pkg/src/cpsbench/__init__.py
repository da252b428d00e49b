"""Energy benchmarking harness for a simulated robotic sorting cell."""

from .control import ControllerConfig, RunLog, execute, generate, run_params
from .program import ExperimentParams, InstructionProgram

__version__ = "0.1.0"

__all__ = ["ControllerConfig", "ExperimentParams", "InstructionProgram", "RunLog",
           "execute", "generate", "run_params", "__version__"]
