"""Early warning of regime shifts from windowed conditional entropy.

Pipeline: per-window AR residuals and covariate projections (``linproj``),
forest-weighted conditional densities and their entropy (``forest``,
``entropy``), weighted Shiryaev-Roberts monitoring (``detector``), with
synthetic designs and replication metrics in ``simlab``.
"""

from .core import ConfigError, DetectorConfig, InputError, SeriesFrame, \
    WindowPlan, make_windows, read_frame
from .detector import run_sr, score_detection
from .entropy import EntropySeries, ForestParams, conditional_entropy
from .pipeline import PipelineConfig, detect, entropy_stream
from .simlab import DGPSpec, generate, run_replications

__all__ = [
    "ConfigError", "DetectorConfig", "DGPSpec", "EntropySeries",
    "ForestParams", "InputError", "PipelineConfig", "SeriesFrame",
    "WindowPlan", "conditional_entropy", "detect", "entropy_stream",
    "generate", "make_windows", "read_frame", "run_replications", "run_sr",
    "score_detection",
]
__version__ = "0.1.0"
