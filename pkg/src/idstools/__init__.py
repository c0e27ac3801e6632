"""Integrated densities of states for random combinatorial and metric-graph operators on Z^d."""

__version__ = "0.1.0"

from .errors import ConfigError, IdsError, NumericalError, ResourceCapError  # noqa: E402
from .stepfn import Jump, StepFunction  # noqa: E402

__all__ = ["ConfigError", "IdsError", "Jump", "NumericalError", "ResourceCapError", "StepFunction", "__version__"]
