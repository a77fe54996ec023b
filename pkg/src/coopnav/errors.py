"""Exception types shared across the package."""


class CoopNavError(Exception):
    """Base class for package-specific failures."""


class InvalidPoseError(CoopNavError, ValueError):
    """A pose sits on a wall / obstacle where a free cell is required."""


class InvalidEditError(CoopNavError, ValueError):
    """An edit mask violates the add-on-free / remove-on-wall rule."""


class TrainingDivergedError(CoopNavError, RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, batch: int, loss: float):
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
        super().__init__(
            f"non-finite training loss {loss!r} at epoch {epoch}, batch {batch}"
        )


class PlanningError(CoopNavError, RuntimeError):
    """The planner has no legal action to return."""


class SeedPlacementError(CoopNavError, RuntimeError):
    """Could not place the requested number of Voronoi seeds."""


class ProtocolError(CoopNavError, ValueError):
    """A malformed or out-of-order wire-protocol message."""

    def __init__(self, code: str, msg: str):
        self.code = code
        super().__init__(msg)
