"""Exception hierarchy shared across the workbench."""


class ShapeServoError(Exception):
    """Base class for all workbench errors."""


class InvalidInputError(ShapeServoError):
    """An operation received arguments violating its preconditions."""


class DegenerateRotationError(ShapeServoError):
    """A 6D rotation block could not be orthonormalized."""


class DegenerateGeometryError(ShapeServoError):
    """Geometry too degenerate to define the requested primitive (plane, frame, ...)."""


class MeshingError(ShapeServoError):
    """Primitive meshing failed, e.g. resolution too coarse for the geometry."""


class GraspMissError(ShapeServoError):
    """No attachable node within the grasp radius."""


class SimulationDivergedError(ShapeServoError):
    """The implicit solver failed to converge or produced non-finite state."""


class EmptyViewError(ShapeServoError):
    """The rendered view contains no object pixels."""


class ConfigurationError(ShapeServoError):
    """Shapes/settings inconsistent with a model or run configuration."""


class TrainingDivergedError(ShapeServoError):
    """Training produced a non-finite loss."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class InvalidCandidateError(ShapeServoError):
    """Classifier candidate does not lie on the current cloud."""


class InvalidCurveError(ShapeServoError):
    """A goal curve cannot be swept without self-intersection."""


class GenerationError(ShapeServoError):
    """Trajectory generation failed repeatedly for one object configuration."""
