"""Simulation and verification toolkit for delay equations with fading memory
driven by symmetric pure-jump Levy noise."""
from .errors import BlowUpError, ConfigError, ConsistencyError, DivergenceError, LevySDDEError, QuadratureError
from .levy import AtomsLevy, CompoundPoissonLevy, RadialLevy, mass_above, small_jump_second_moment
from .memory import Atom, DelayMeasure, Exponential, HistorySegment, delay_integral, exp_moment, fading_norm
from .dynamics import DriftSpec, integrate_deterministic, integrate_full, integrate_truncated

__version__ = "0.1.0"

__all__ = [
    "Atom", "AtomsLevy", "BlowUpError", "CompoundPoissonLevy", "ConfigError", "ConsistencyError", "DelayMeasure",
    "DivergenceError", "DriftSpec", "Exponential", "HistorySegment", "LevySDDEError", "QuadratureError",
    "RadialLevy", "delay_integral", "exp_moment", "fading_norm", "integrate_deterministic", "integrate_full",
    "integrate_truncated", "mass_above", "small_jump_second_moment",
]
