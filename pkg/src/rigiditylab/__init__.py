"""Finite-scale experiments on rigidity, Kazhdan and nullpotent integer sequences."""

__version__ = "0.1.0"

from .circle import UnitPoint, RationalAngle, FixedAngle, power, chord_distance, dist_to_integers
from .sequences import SequenceSpec, IntegerSequence, RandomModel, generate, bourgain_sample
from .measures import CircleMeasure, ZMeasure

__all__ = [
    "UnitPoint", "RationalAngle", "FixedAngle", "power", "chord_distance", "dist_to_integers",
    "SequenceSpec", "IntegerSequence", "RandomModel", "generate", "bourgain_sample",
    "CircleMeasure", "ZMeasure", "__version__",
]
