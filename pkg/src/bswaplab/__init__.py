"""Two-photon bSWAP gates between coupled transmons: model, effective theory, dynamics and tomography."""

from .errors import (
    BswapLabError,
    CalibrationError,
    ConfigError,
    DegeneracyError,
    EstimationError,
    NoOscillationError,
    SingularityError,
)
from .hilbert import FockSpace
from .model import DeviceParams, DriveParams, TransmonParams, reference_device

__all__ = [
    "BswapLabError",
    "CalibrationError",
    "ConfigError",
    "DegeneracyError",
    "DeviceParams",
    "DriveParams",
    "EstimationError",
    "FockSpace",
    "NoOscillationError",
    "SingularityError",
    "TransmonParams",
    "reference_device",
]
