"""Exception taxonomy shared across the pipeline.

Errors are split by which layer detected them so callers can decide
between retrying (transport, staleness), skipping a frame (detection,
visibility) and aborting (contract violations are programming errors).
"""


class GraspVisError(Exception):
    """Base class for all errors raised by this package."""


class ContractViolation(GraspVisError, ValueError):
    """A documented precondition or invariant was violated by the caller."""


class CodecError(GraspVisError):
    """Image encode/decode failure; `stage` identifies which half of the pair."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


class TransportError(GraspVisError):
    """Socket-level failure: endpoint unreachable, connection lost, short read."""


class StaleFrameError(TransportError):
    """Request timed out; the channel was reset and the frame abandoned."""


class RemoteError(TransportError):
    """The remote side replied with an error status instead of a payload."""


class ProtocolError(GraspVisError):
    """Well-formed transport, malformed payload (bad magic, RLE mismatch, ...)."""


class ObjectNotVisible(GraspVisError):
    """Masked, depth-valid, in-range pixel set was empty; no cloud produced."""


class TargetNotFound(GraspVisError):
    """No detection of a target class in the frame; caller retries next frame."""


class NoValidGrasp(GraspVisError):
    """Grasp candidate slab came up empty."""


class GripperApertureExceeded(NoValidGrasp):
    """Object extent perpendicular to the grasp axis exceeds the gripper opening."""
