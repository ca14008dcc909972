"""Group-based off-policy surrogate objectives on toy tabular policies."""

from .core_group import (
    Trajectory,
    TrajectoryGroup,
    intra_sequence_dispersion,
    normalize_advantages,
    sequence_ratio,
    token_ratios,
)
from .errors import InvalidBatchError, InvalidGroupError, NumericError, ValidationError
from .gates import GateConfig
from .objectives import ObjectiveKind, SurrogateResult, evaluate
from .policy import PolicyParams
from .tasks import TaskSpec

__all__ = [
    "GateConfig",
    "InvalidBatchError",
    "InvalidGroupError",
    "NumericError",
    "ObjectiveKind",
    "PolicyParams",
    "SurrogateResult",
    "TaskSpec",
    "Trajectory",
    "TrajectoryGroup",
    "ValidationError",
    "evaluate",
    "intra_sequence_dispersion",
    "normalize_advantages",
    "sequence_ratio",
    "token_ratios",
]
