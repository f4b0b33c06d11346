"""Almost-global tracking control for mechanical systems on embedded manifolds and SO(3)."""

from .controller import AgatController, Gains, ReferenceSample, agat_control
from .errormap import LissajousErrorMap, SphereErrorMap
from .errors import AgatError
from .integrator import EmbeddedClosedLoop, TrajectoryLog, simulate
from .manifold import Lissajous, Sphere
from .navigation import lissajous_height, sphere_height
from .scenarios import ScenarioConfig, prepare, preset

__version__ = "0.1.0"

__all__ = [
    "AgatController", "Gains", "ReferenceSample", "agat_control", "LissajousErrorMap",
    "SphereErrorMap", "AgatError", "EmbeddedClosedLoop", "TrajectoryLog", "simulate",
    "Lissajous", "Sphere", "lissajous_height", "sphere_height", "ScenarioConfig", "prepare",
    "preset",
]
