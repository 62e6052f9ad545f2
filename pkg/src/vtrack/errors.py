"""Exception hierarchy shared by every vtrack module."""


class VtrackError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(VtrackError, ValueError):
    """Input text or bytes are malformed."""


class IntegrityError(VtrackError):
    """A checksum did not match the data it protects."""


class RangeError(VtrackError, ValueError):
    """A value lies outside its permitted range."""


class SizeError(VtrackError, ValueError):
    """A payload or frame exceeds its size budget."""


class UsageError(VtrackError):
    """An operation was called with arguments that violate its contract."""


class CapacityError(VtrackError):
    """A bounded container is full."""


class IncompleteError(VtrackError):
    """More input is needed before a frame can be decoded."""


class UnknownFrameTypeError(VtrackError):
    """A well-formed API frame carries a frame type we do not decode."""

    def __init__(self, frame_type, raw):
        super().__init__(f"unknown frame type 0x{frame_type:02x}")
        self.frame_type = frame_type
        self.raw = bytes(raw)


class AuthenticationError(VtrackError):
    """Message integrity code did not verify."""


class ReplayError(VtrackError):
    """Frame counter was not newer than the last accepted one."""


class NoRouteError(VtrackError):
    """No path exists between two nodes under the radio constraints."""
