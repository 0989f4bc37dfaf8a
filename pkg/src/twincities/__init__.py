"""Twin-city processes on the flat torus and shortest-path functionals."""
from .torus import Metric, TorusPoint
from .process import ProcessSpec, Stage

__version__ = "0.1.0"

__all__ = ["Metric", "TorusPoint", "ProcessSpec", "Stage", "__version__"]
