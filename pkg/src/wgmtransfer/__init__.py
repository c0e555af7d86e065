"""Whispering-gallery-mode resonances, emitter coupling and cavity-mediated
photon transfer budgets for dielectric microspheres."""

from .numerics import BesselRangeError, BracketError, ConvergenceError
from .wgm_modes import AmbiguityError, Mode, ModeId, Peak, PeakList, Sphere

__all__ = ["AmbiguityError", "BesselRangeError", "BracketError", "ConvergenceError",
           "Mode", "ModeId", "Peak", "PeakList", "Sphere"]
__version__ = "0.1.0"
