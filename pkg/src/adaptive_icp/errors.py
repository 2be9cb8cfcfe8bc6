"""Exception types raised by the odometry engine."""


class OdometryError(Exception):
    """Base class for all engine errors."""


class EmptyCloudError(OdometryError):
    """An operation required a non-empty point cloud."""


class NonPositiveRadiusError(OdometryError, ValueError):
    """A search radius must be strictly positive."""


class NonPositiveVoxelError(OdometryError, ValueError):
    """A voxel edge length must be strictly positive."""


class NonPositiveDtError(OdometryError, ValueError):
    """A frame time interval must be strictly positive."""


class TooFewPointsError(OdometryError):
    """The cloud has fewer points than the requested neighborhood size."""


class MissingCovariancesError(OdometryError):
    """Registration requires per-point covariances on both clouds."""


class NoCorrespondencesError(OdometryError):
    """No source/target pair survived the correspondence gates."""


class DivergedTransformError(OdometryError):
    """The iterated transform drifted beyond the configured translation bound."""


class AngleNearPiError(OdometryError):
    """Rotation angle too close to pi; the rotation axis is ambiguous."""


class SingularSystemError(OdometryError):
    """The damped normal equations are numerically singular."""


class EmptyMapError(OdometryError):
    """The local map holds no points yet."""


class MalformedScanError(OdometryError):
    """Scan file size is not a whole number of packed points."""


class MalformedPoseLineError(OdometryError):
    """A trajectory file line does not parse as a pose."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class UnsupportedFormatError(OdometryError, ValueError):
    """Unknown trajectory serialization format."""


class LengthMismatchError(OdometryError, ValueError):
    """Paired trajectories must have equal length."""


class DegenerateGeometryError(OdometryError):
    """Trajectory translations are coincident or collinear; alignment is ill-posed."""


class ConfigError(OdometryError):
    """A configuration file entry is unknown or unparseable."""
