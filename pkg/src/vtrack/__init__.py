"""Secure GPS vehicle tracking over a simulated low-rate radio network."""

__version__ = "0.1.0"

from .errors import (AuthenticationError, CapacityError, FormatError, IncompleteError,
                     IntegrityError, NoRouteError, RangeError, ReplayError, SizeError,
                     UnknownFrameTypeError, UsageError, VtrackError)
from .geo import GeoFix, Track, TrackPoint

__all__ = [
    "AuthenticationError", "CapacityError", "FormatError", "IncompleteError", "IntegrityError",
    "NoRouteError", "RangeError", "ReplayError", "SizeError", "UnknownFrameTypeError",
    "UsageError", "VtrackError", "GeoFix", "Track", "TrackPoint", "__version__",
]
