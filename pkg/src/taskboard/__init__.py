"""Task board trial protocol, device simulator, aggregation server and analytics."""

from taskboard.protocol import (
    BoardState,
    CircuitEvent,
    EventKind,
    TaskId,
    TrialPhase,
    TrialRecord,
)

__all__ = [
    "BoardState",
    "CircuitEvent",
    "EventKind",
    "TaskId",
    "TrialPhase",
    "TrialRecord",
]

__version__ = "0.1.0"
