"""Checked-in competition fixtures.

Six subjects from the published Robothon Grand Challenge 2021 results: the
five finalist robot teams plus the human operator baseline.  Each subject
carries the officially reported per-task times (here in milliseconds) and,
where the official trial total was reported from a different run than the
per-task times, that total as `reference_total_s`.

The trace files in this directory are reconstructions: a trial whose
successive-difference task durations equal the published per-task times.
`generate.py` rebuilds them from this table; a test pins file bytes to it.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

from taskboard.protocol import TaskId


@dataclass(frozen=True)
class Subject:
    endpoint_id: str
    label: str
    durations_ms: dict[TaskId, int]
    # official trial total (seconds, as printed) when it disagrees with the
    # sum of the per-task times; None means the columns are self-consistent
    reference_total_s: Optional[str] = None
    is_robot: bool = True


def _durations(find, key, plug, batt1, batt2, stop) -> dict[TaskId, int]:
    return {
        TaskId.FIND_BOARD: find,
        TaskId.KEY_SWITCH: key,
        TaskId.PLUG: plug,
        TaskId.BATT1: batt1,
        TaskId.BATT2: batt2,
        TaskId.STOP: stop,
    }


SUBJECTS = (
    Subject("robothix", "RoboTHIx", _durations(78_650, 5_790, 5_100, 19_140, 150, 1_900)),
    Subject(
        "robopig",
        "RoboPig",
        _durations(52_400, 17_190, 18_020, 47_980, 27_820, 15_030),
        reference_total_s="178.02",
    ),
    Subject("benchmark", "Benchmark", _durations(62_780, 31_420, 28_720, 57_780, 33_020, 13_670)),
    Subject("ewas", "Ewas", _durations(47_660, 53_460, 59_900, 136_420, 71_750, 2_450)),
    Subject(
        "rand-e",
        "RAND-E",
        _durations(57_680, 70_300, 54_860, 140_680, 108_840, 59_740),
        reference_total_s="437.05",
    ),
    Subject(
        "human",
        "Human",
        _durations(550, 1_610, 1_360, 2_430, 1_690, 350),
        reference_total_s="8.57",
        is_robot=False,
    ),
)

BY_LABEL = {subject.label: subject for subject in SUBJECTS}
ROBOTS = tuple(s for s in SUBJECTS if s.is_robot)
HUMAN = BY_LABEL["Human"]


def cumulative_timestamps(subject: Subject) -> dict[TaskId, int]:
    """Completion timestamps of a trial with the subject's task durations.

    Tasks are laid out in canonical order back to back, so the successive
    differences recover durations exactly.
    """
    stamps: dict[TaskId, int] = {}
    t = 0
    for task in TaskId:
        t += subject.durations_ms[task]
        stamps[task] = t
    return stamps


_EVENT_FOR_TASK = {
    TaskId.FIND_BOARD: "BLUE_BUTTON_PRESSED",
    TaskId.KEY_SWITCH: "KEY_SWITCH_ACTIVATED",
    TaskId.PLUG: "PLUG_SEATED_TARGET",
    TaskId.BATT1: "BATT1_DROPPED",
    TaskId.BATT2: "BATT2_DROPPED",
    TaskId.STOP: "RED_BUTTON_PRESSED",
}


def trace_text(subject: Subject) -> str:
    """Render the subject's reconstructed trial as a trace file."""
    stamps = cumulative_timestamps(subject)
    total_s = stamps[TaskId.STOP] / 1000
    per_task = " ".join(f"{subject.durations_ms[t] / 1000:.2f}" for t in TaskId)
    lines = [
        f"# {subject.label} best trial, Robothon Grand Challenge 2021 official results",
        f"# per-task times (s): {per_task}; reconstructed trial total {total_s:.2f}",
    ]
    if subject.reference_total_s is not None:
        lines.append(
            f"# officially reported trial total: {subject.reference_total_s} s"
            " (reported from a different run than the per-task times)"
        )
    lines.append("0 ARM")
    lines.append("0 START")
    for task in TaskId:
        lines.append(f"{stamps[task]} {_EVENT_FOR_TASK[task]}")
    return "\n".join(lines) + "\n"


def trace_path(subject: Subject) -> Path:
    with resources.as_file(
        resources.files(__package__).joinpath(f"{subject.endpoint_id}.trace")
    ) as path:
        return path


def reference_totals() -> dict[str, str]:
    """Officially reported totals, by subject label, where they were reported
    separately from the per-task times."""
    return {
        s.label: s.reference_total_s for s in SUBJECTS if s.reference_total_s is not None
    }
