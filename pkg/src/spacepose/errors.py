"""Exception hierarchy shared across the package."""


class SpacePoseError(Exception):
    """Base class for all package errors."""


class InvalidInputError(SpacePoseError, ValueError):
    pass


class BehindCameraError(SpacePoseError, ValueError):
    pass


class DegenerateGroundTruthError(SpacePoseError, ValueError):
    pass


class InvalidEdgeError(SpacePoseError, ValueError):
    pass


class ShapeError(SpacePoseError, ValueError):
    pass


class SpecError(SpacePoseError, ValueError):
    """Dataset spec is malformed or physically infeasible."""


class ConfigError(SpacePoseError, ValueError):
    pass


class InsufficientPointsError(SpacePoseError, ValueError):
    pass


class DegenerateConfigurationError(SpacePoseError, ValueError):
    pass


class NumericalFailureError(SpacePoseError, ArithmeticError):
    """Solver produced non-finite values. ``last_pose`` holds the last valid iterate."""

    def __init__(self, message, last_pose=None):
        super().__init__(message)
        self.last_pose = last_pose


class NoConsensusError(SpacePoseError, ValueError):
    pass


class TrainingDivergedError(SpacePoseError, ArithmeticError):
    def __init__(self, message, last_checkpoint=None):
        super().__init__(message)
        self.last_checkpoint = last_checkpoint


class EmptySplitError(SpacePoseError, ValueError):
    pass
