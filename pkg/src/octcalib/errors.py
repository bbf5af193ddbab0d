"""Exception hierarchy shared by all octcalib modules."""


class OctCalibError(Exception):
    """Base class for all octcalib errors."""


# --- geometry ---------------------------------------------------------------

class DegenerateGeometry(OctCalibError):
    """Point set is collinear/coincident; a rigid fit is not identifiable."""


class LengthMismatch(OctCalibError):
    """Corresponding point lists have different lengths."""


class GimbalLock(OctCalibError):
    """Pitch within tolerance of +/-90 deg; roll/yaw are not separable."""


# --- board ------------------------------------------------------------------

class UnknownMarker(OctCalibError):
    """Marker id not present in the board dictionary."""


class DictionaryGenerationFailed(OctCalibError):
    """Could not generate enough codes at the requested Hamming distance."""


# --- volume -----------------------------------------------------------------

class VolumeTooSmall(OctCalibError):
    """Volume has fewer than 3 voxels along some axis."""


class OutOfBounds(OctCalibError):
    """Pixel coordinate outside the image."""


# --- detect -----------------------------------------------------------------

class RejectBorder(OctCalibError):
    """Candidate quad has no all-black border ring."""


class RejectNoMatch(OctCalibError):
    """Payload bits match no dictionary entry exactly."""


class BoardNotFound(OctCalibError):
    """Fewer than 80% of the interior checker corners were recovered."""


# --- solve ------------------------------------------------------------------

class DegenerateConfiguration(OctCalibError):
    """PnP input is degenerate (too few or collinear points)."""


class NonConvergence(OctCalibError):
    """Iterative refinement failed to converge."""


class InsufficientMotion(OctCalibError):
    """Relative motions do not constrain the hand-eye transform."""


# --- sim --------------------------------------------------------------------

class UnreachableTarget(OctCalibError):
    """No robot pose satisfies the field-of-view constraints."""


class BoardOutOfView(OctCalibError):
    """Board not (fully) visible in the camera frustum."""


class PlaneOutOfFov(OctCalibError):
    """Board plane does not intersect the OCT depth range."""


class SphereOutOfFov(OctCalibError):
    """Sphere surface does not intersect the OCT field of view."""


# --- eval -------------------------------------------------------------------

class NoCommonMarkers(OctCalibError):
    """No marker observed by both the camera and the OCT branches."""


class NoHeldOutMarkers(OctCalibError):
    """Distance study requires observations away from the center marker."""


# --- scan -------------------------------------------------------------------

class DegenerateCloud(OctCalibError):
    """Point cloud is coplanar/collinear; the sphere is unobservable."""


class EmptySection(OctCalibError):
    """Cross-section plane does not intersect the cloud."""


class EmptyCloud(OctCalibError):
    """Scan produced no surface points."""


class MalformedRun(OctCalibError):
    """Run directory is incomplete or mixes incompatible scenarios."""
