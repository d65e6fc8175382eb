"""Multiline TRL calibration with linear and Monte Carlo uncertainty propagation."""

from .errors import CalibrationError, MtrlError
from .rfcore import FrequencyGrid, TwoPortNetwork, s_to_t, t_to_s
from .solver import (
    CalibrationResult,
    CalibrationSet,
    LineStandard,
    ReflectStandard,
    Status,
    apply_calibration,
    calibrate,
)
from .touchstone import read_touchstone, write_touchstone

__version__ = "0.1.0"
