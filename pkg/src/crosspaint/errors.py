"""Exception types raised across the package."""


class CrosspaintError(Exception):
    """Base class for all package-specific errors."""


# -- robot descriptions -------------------------------------------------------

class MalformedDescription(CrosspaintError):
    """Robot description document is syntactically invalid or incomplete."""


class BranchingChain(MalformedDescription):
    """Robot description contains a non-serial kinematic tree."""


class MissingLimit(MalformedDescription):
    """A non-fixed joint lacks position limits."""


class ConfigLengthMismatch(CrosspaintError):
    """Joint configuration length does not match the robot model."""


# -- images / masks ------------------------------------------------------------

class DimensionMismatch(CrosspaintError):
    """Two images or masks that must share dimensions do not."""


class LengthMismatch(CrosspaintError):
    """Two frame sequences that must share length do not."""


class BadKernel(CrosspaintError):
    """Morphology kernel size is not an odd positive integer."""


class EmptySequence(CrosspaintError):
    """A frame sequence that must be non-empty is empty."""


class FractionOutOfRange(CrosspaintError):
    """Gripper open fraction is outside [0, 1]."""


# -- meshes / rendering --------------------------------------------------------

class MeshLoadFailure(CrosspaintError):
    """A referenced mesh file could not be loaded."""


# -- external tools ------------------------------------------------------------

class ToolLaunchFailure(CrosspaintError):
    """External inpainting tool could not be launched."""


class ProtocolViolation(CrosspaintError):
    """External inpainting tool violated the directory protocol."""


# -- datasets ------------------------------------------------------------------

class EmptyDataset(CrosspaintError):
    """Dataset root contains no valid trajectory containers."""


class ContainerError(CrosspaintError):
    """Trajectory container is malformed on disk."""
