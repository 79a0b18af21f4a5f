"""Centralized enums for branches, spectrum kinds, fit models and magnetic levels."""

from enum import Enum


class Branch(str, Enum):
    """Dressed branch of the sideband ladder."""

    PLUS = "+"
    MINUS = "-"


class SpectrumKind(str, Enum):
    """What a spectrum's axis is swept over."""

    PLE = "PLE"
    ODMR = "ODMR"


class PeakModel(str, Enum):
    """Single-peak lineshape used by the peak fitter."""

    GAUSSIAN = "gaussian"
    LORENTZIAN = "lorentzian"
    VOIGT = "voigt"


class MagneticLevel(str, Enum):
    """Excited-state level reached by the magnetic drive in ODMR."""

    E1 = "E1"
    E2 = "E2"
    A1 = "A1"


class TableSchema(str, Enum):
    """Column layout of an input table."""

    ANTENNA = "antenna"
    SPECTRUM = "spectrum"
    SPLITTING = "splitting"
    AMPLITUDES = "amplitudes"
