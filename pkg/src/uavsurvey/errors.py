class ScenarioError(ValueError):
    """Invalid scenario geometry or configuration."""


class PlanningError(RuntimeError):
    pass


class NoFreeSpace(PlanningError):
    pass


class MilestoneUnreachable(PlanningError):
    def __init__(self, milestone: int, message: str | None = None):
        self.milestone = milestone
        super().__init__(message or f"milestone {milestone} unreachable from current roadmap position")


class ClimbInfeasible(PlanningError):
    pass


class DodgeInfeasible(PlanningError):
    pass


class DynamicDodgeFailed(DodgeInfeasible):
    pass


class NoExternalTangent(ValueError):
    pass


class SimulationError(RuntimeError):
    """A mission failed after its initial plan was made."""
