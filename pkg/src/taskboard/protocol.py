"""Trial protocol state machine for the task board.

The board's microcontroller runs one trial at a time through the phases
IDLE -> ARMED -> RUNNING -> COMPLETED/EXPIRED.  All transitions here are
pure functions: they take a TrialRecord and return a new one, never
mutating the input.  Time is an unsigned millisecond counter on the
device's monotonic clock; wall-clock time only appears as the reporting
epoch stamped when a trial starts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Mapping, Optional, Sequence, TypeVar

TRIAL_EXPIRY_MS = 600_000  # 10-minute trial timer


class TaskId(Enum):
    """The six protocol steps, in canonical column order.

    FIND_BOARD through BATT2 are the five manipulation tasks; STOP is the
    trial-ending stop button press.
    """

    FIND_BOARD = "find_board"
    KEY_SWITCH = "key_switch"
    PLUG = "plug"
    BATT1 = "batt1"
    BATT2 = "batt2"
    STOP = "stop"


MANIPULATION_TASKS = (
    TaskId.FIND_BOARD,
    TaskId.KEY_SWITCH,
    TaskId.PLUG,
    TaskId.BATT1,
    TaskId.BATT2,
)


class EventKind(Enum):
    """Digital-input transitions from the monitored component circuits."""

    BLUE_BUTTON_PRESSED = "BLUE_BUTTON_PRESSED"
    KEY_SWITCH_ACTIVATED = "KEY_SWITCH_ACTIVATED"
    PLUG_SEATED_TARGET = "PLUG_SEATED_TARGET"
    BATT1_DROPPED = "BATT1_DROPPED"
    BATT2_DROPPED = "BATT2_DROPPED"
    RED_BUTTON_PRESSED = "RED_BUTTON_PRESSED"


EVENT_TASK: dict[EventKind, TaskId] = {
    EventKind.BLUE_BUTTON_PRESSED: TaskId.FIND_BOARD,
    EventKind.KEY_SWITCH_ACTIVATED: TaskId.KEY_SWITCH,
    EventKind.PLUG_SEATED_TARGET: TaskId.PLUG,
    EventKind.BATT1_DROPPED: TaskId.BATT1,
    EventKind.BATT2_DROPPED: TaskId.BATT2,
    EventKind.RED_BUTTON_PRESSED: TaskId.STOP,
}


class TrialPhase(Enum):
    IDLE = "IDLE"
    ARMED = "ARMED"
    RUNNING = "RUNNING"
    COMPLETED = "COMPLETED"
    EXPIRED = "EXPIRED"


#: The only transitions the machine may take.
LEGAL_TRANSITIONS = frozenset(
    {
        (TrialPhase.IDLE, TrialPhase.ARMED),
        (TrialPhase.ARMED, TrialPhase.RUNNING),
        (TrialPhase.RUNNING, TrialPhase.COMPLETED),
        (TrialPhase.RUNNING, TrialPhase.EXPIRED),
        (TrialPhase.ARMED, TrialPhase.IDLE),
    }
)


class ProtocolError(Exception):
    """Base class for trial protocol violations."""


class WrongPhase(ProtocolError):
    def __init__(self, operation: str, phase: TrialPhase, expected: str):
        super().__init__(f"{operation}: trial is {phase.value}, expected {expected}")
        self.operation = operation
        self.phase = phase
        self.expected = expected


class NotStartReady(ProtocolError):
    """Arming refused; ``missing`` names the components not in start position."""

    def __init__(self, missing: Sequence[str]):
        super().__init__("board not in start position, restore: " + ", ".join(missing))
        self.missing = list(missing)


class TrialNotFinished(ProtocolError):
    def __init__(self, phase: TrialPhase):
        super().__init__(f"trial still {phase.value}; durations need a finished trial")
        self.phase = phase


@dataclass(frozen=True)
class CircuitEvent:
    """One monitored-circuit transition, stamped with the device clock."""

    kind: EventKind
    t_device_ms: int

    def __post_init__(self):
        if self.t_device_ms < 0:
            raise ValueError("t_device_ms must be non-negative")


@dataclass(frozen=True)
class BoardState:
    """Positions of the physical components checked before arming."""

    key_in_holster: bool = True
    plug_in_source_port: bool = True
    lid_closed: bool = True
    batt1_seated: bool = True
    batt2_seated: bool = True
    blue_button_released: bool = True
    red_button_released: bool = True

    def is_start_ready(self) -> bool:
        return not self.missing_components()

    def missing_components(self) -> list[str]:
        """Names of fields not in their starting position, declaration order."""
        return [name for name, ok in self.__dict__.items() if not ok]


def _empty_timestamps() -> dict[TaskId, Optional[int]]:
    return {task: None for task in TaskId}


@dataclass(frozen=True)
class TrialRecord:
    """One trial's state as the microcontroller reports it.

    ``timestamps`` always carries all six tasks; None means not completed.
    ``start_device_ms`` anchors the trial clock on the device counter,
    ``start_epoch_ms`` is the wall-clock start used only for reporting.
    """

    trial_id: int
    phase: TrialPhase = TrialPhase.IDLE
    start_device_ms: int = 0
    start_epoch_ms: int = 0
    timestamps: Mapping[TaskId, Optional[int]] = field(default_factory=_empty_timestamps)
    points: int = 0
    accel_sum: float = 0.0
    expiry_ms: int = TRIAL_EXPIRY_MS

    def completed_tasks(self) -> list[TaskId]:
        return [t for t in TaskId if self.timestamps[t] is not None]

    def last_completion_ms(self) -> int:
        done = [ts for ts in self.timestamps.values() if ts is not None]
        return max(done) if done else 0


def new_trial(trial_id: int) -> TrialRecord:
    return TrialRecord(trial_id=trial_id)


def reset_board(state: BoardState) -> BoardState:
    """Restore every component to its starting position (idempotent)."""
    return BoardState()


def arm(state: BoardState, trial: TrialRecord) -> TrialRecord:
    """Enable the start button once every component is in start position."""
    if trial.phase is not TrialPhase.IDLE:
        raise WrongPhase("arm", trial.phase, "IDLE")
    missing = state.missing_components()
    if missing:
        raise NotStartReady(missing)
    return replace(trial, phase=TrialPhase.ARMED)


def disarm(trial: TrialRecord) -> TrialRecord:
    """Drop back to IDLE when the board is disturbed before the start press."""
    if trial.phase is not TrialPhase.ARMED:
        raise WrongPhase("disarm", trial.phase, "ARMED")
    return replace(trial, phase=TrialPhase.IDLE)


def start(trial: TrialRecord, t_device_ms: int, start_epoch_ms: int = 0) -> TrialRecord:
    """Start button press: zero the trial clock and clear all progress."""
    if trial.phase is not TrialPhase.ARMED:
        raise WrongPhase("start", trial.phase, "ARMED")
    return replace(
        trial,
        phase=TrialPhase.RUNNING,
        start_device_ms=t_device_ms,
        start_epoch_ms=start_epoch_ms,
        timestamps=_empty_timestamps(),
        points=0,
        accel_sum=0.0,
    )


def on_event(trial: TrialRecord, event: CircuitEvent) -> TrialRecord:
    """Apply one circuit event to a running trial.

    First completion of a task records its timestamp and scores a point;
    repeats are ignored.  The stop button only ends the trial once all five
    manipulation tasks are done (accidental presses are ignored).  Events
    at or after expiry are ignored.
    """
    if trial.phase is not TrialPhase.RUNNING:
        raise WrongPhase("on_event", trial.phase, "RUNNING")
    if event.t_device_ms < trial.start_device_ms:
        raise ValueError("event predates trial start")
    elapsed = event.t_device_ms - trial.start_device_ms
    if elapsed >= trial.expiry_ms:
        return trial
    task = EVENT_TASK[event.kind]
    if trial.timestamps[task] is not None:
        return trial
    if task is TaskId.STOP:
        if any(trial.timestamps[t] is None for t in MANIPULATION_TASKS):
            return trial
        stamped = dict(trial.timestamps)
        stamped[TaskId.STOP] = elapsed
        return replace(
            trial,
            timestamps=stamped,
            points=trial.points + 1,
            phase=TrialPhase.COMPLETED,
        )
    stamped = dict(trial.timestamps)
    stamped[task] = elapsed
    return replace(trial, timestamps=stamped, points=trial.points + 1)


def tick(trial: TrialRecord, t_device_ms: int) -> TrialRecord:
    """Advance the trial timer; a running trial expires at 600000 ms elapsed."""
    if trial.phase is not TrialPhase.RUNNING:
        return trial
    if t_device_ms - trial.start_device_ms >= trial.expiry_ms:
        return replace(trial, phase=TrialPhase.EXPIRED)
    return trial


def accumulate_accel(
    trial: TrialRecord, sample_g: Sequence[float], dt_s: float
) -> TrialRecord:
    """Integrate how far the acceleration magnitude deviates from 1 g rest.

    The sum estimates how much the board was handled during the trial
    (unit: g-seconds).  Samples outside RUNNING are discarded.
    """
    if dt_s <= 0:
        raise ValueError("dt_s must be positive")
    if trial.phase is not TrialPhase.RUNNING:
        return trial
    magnitude = math.sqrt(sum(a * a for a in sample_g))
    return replace(trial, accel_sum=trial.accel_sum + abs(magnitude - 1.0) * dt_s)


K = TypeVar("K")


def successive_durations(timestamps: Mapping[K, Optional[int]]) -> dict[K, int]:
    """Per-task durations as differences between successive completions.

    Completion order is chronological (teams may work in any order): the
    first completed task's duration is its own timestamp, every later task
    takes the gap since the previous completion.  The durations therefore
    always sum to the last completion timestamp.
    """
    done = sorted(
        ((ts, key) for key, ts in timestamps.items() if ts is not None),
        key=lambda pair: pair[0],
    )
    durations: dict[K, int] = {}
    previous = 0
    for ts, key in done:
        durations[key] = ts - previous
        previous = ts
    return durations


def task_durations(trial: TrialRecord) -> dict[TaskId, int]:
    """Successive-difference durations of a finished (completed/expired) trial."""
    if trial.phase not in (TrialPhase.COMPLETED, TrialPhase.EXPIRED):
        raise TrialNotFinished(trial.phase)
    return successive_durations(trial.timestamps)
