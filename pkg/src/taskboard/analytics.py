"""Competition analytics over final trial records.

Produces the three result artifacts: the ranked leaderboard, the per-task
share of trial time, and the summary rows (robot averages and deltas
against the human reference).

All duration arithmetic is integer milliseconds converted to Decimal
seconds; rounding to 2 decimals (half to even) happens only at
presentation, never inside a computation.

Official trial totals sometimes come from a different run than the
official per-task times, so a subject may carry a reference total that
differs from the sum of its task durations.  Effective totals (reference
when present, otherwise the computed sum) drive ranking and the summary
rows; task columns always stay the computed values.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from decimal import ROUND_HALF_EVEN, Decimal
from typing import Iterable, Mapping, Optional, Sequence

from taskboard.protocol import (
    TaskId,
    TrialPhase,
    TrialRecord,
    successive_durations,
)

MS_PER_S = Decimal(1000)

SUMMARY_AVG = "Avg. Robot"
SUMMARY_AVG_MINUS_HUMAN = "Avg. Robot - Human"
SUMMARY_FASTEST_MINUS_HUMAN = "Fastest Robot - Human"


class IncompleteTrial(Exception):
    def __init__(self, label: str):
        super().__init__(f"{label}: breakdown needs a completed trial")
        self.label = label


def round2(value: Decimal) -> Decimal:
    return value.quantize(Decimal("0.01"), rounding=ROUND_HALF_EVEN)


@dataclass(frozen=True)
class LeaderboardRow:
    label: str
    durations_ms: Mapping[TaskId, Optional[int]]
    total_ms: int
    completed: bool
    points: int
    trial_id: int
    reference_total_s: Optional[Decimal] = None
    best: frozenset[str] = frozenset()  # task names plus "total", column minima

    def duration_s(self, task: TaskId) -> Optional[Decimal]:
        ms = self.durations_ms[task]
        return None if ms is None else Decimal(ms) / MS_PER_S

    def computed_total_s(self) -> Decimal:
        return Decimal(self.total_ms) / MS_PER_S

    def effective_total_s(self) -> Decimal:
        if self.reference_total_s is not None:
            return self.reference_total_s
        return self.computed_total_s()


@dataclass(frozen=True)
class BreakdownRow:
    label: str
    fractions: Mapping[TaskId, float]


@dataclass(frozen=True)
class SummaryRow:
    label: str
    per_task_s: Mapping[TaskId, Decimal]
    total_s: Decimal

    def rounded(self) -> "SummaryRow":
        return SummaryRow(
            self.label,
            {task: round2(value) for task, value in self.per_task_s.items()},
            round2(self.total_s),
        )


def _as_decimal(value) -> Decimal:
    return value if isinstance(value, Decimal) else Decimal(str(value))


def _row_from_trial(
    label: str, trial: TrialRecord, reference: Optional[Decimal]
) -> LeaderboardRow:
    durations = successive_durations(trial.timestamps)
    full = {task: durations.get(task) for task in TaskId}
    return LeaderboardRow(
        label=label,
        durations_ms=full,
        total_ms=sum(durations.values()),
        completed=trial.phase is TrialPhase.COMPLETED,
        points=trial.points,
        trial_id=trial.trial_id,
        reference_total_s=reference,
    )


def _batt2_ts(trial: TrialRecord) -> int:
    ts = trial.timestamps[TaskId.BATT2]
    return ts if ts is not None else 2**63


def leaderboard(
    trials: Iterable[tuple[str, TrialRecord]],
    reference_total_s: Optional[Mapping[str, object]] = None,
) -> list[LeaderboardRow]:
    """Rank subjects by their best completed trial.

    Each subject contributes its lowest-total completed trial (ties: earlier
    BATT2 completion, then lower trial id).  Subjects with no completed
    trial follow the completed ones, ordered by points descending then
    elapsed-to-last-completion ascending.  Column minima over the completed
    rows are flagged in ``best``.
    """
    references = {
        label: _as_decimal(value) for label, value in (reference_total_s or {}).items()
    }
    by_label: dict[str, list[TrialRecord]] = {}
    for label, trial in trials:
        by_label.setdefault(label, []).append(trial)

    completed_rows: list[LeaderboardRow] = []
    incomplete_rows: list[LeaderboardRow] = []
    for label, candidates in by_label.items():
        reference = references.get(label)
        done = [t for t in candidates if t.phase is TrialPhase.COMPLETED]
        if done:
            best = min(
                done,
                key=lambda t: (t.timestamps[TaskId.STOP], _batt2_ts(t), t.trial_id),
            )
            completed_rows.append(_row_from_trial(label, best, reference))
        else:
            best = min(
                candidates,
                key=lambda t: (-t.points, t.last_completion_ms(), t.trial_id),
            )
            incomplete_rows.append(_row_from_trial(label, best, reference))

    completed_rows.sort(key=lambda r: (r.effective_total_s(), r.label))
    incomplete_rows.sort(key=lambda r: (-r.points, r.total_ms, r.label))

    if completed_rows:
        flags: dict[str, set[str]] = {row.label: set() for row in completed_rows}
        for task in TaskId:
            minimum = min(row.durations_ms[task] for row in completed_rows)
            for row in completed_rows:
                if row.durations_ms[task] == minimum:
                    flags[row.label].add(task.value)
        best_total = min(row.effective_total_s() for row in completed_rows)
        for row in completed_rows:
            if row.effective_total_s() == best_total:
                flags[row.label].add("total")
        completed_rows = [
            replace(row, best=frozenset(flags[row.label])) for row in completed_rows
        ]
    return completed_rows + incomplete_rows


def percentage_breakdown(row: LeaderboardRow) -> BreakdownRow:
    """Share of the trial each task took, against the row's own duration sum."""
    if not row.completed:
        raise IncompleteTrial(row.label)
    total = row.total_ms
    return BreakdownRow(
        label=row.label,
        fractions={task: row.durations_ms[task] / total for task in TaskId},
    )


def averages_and_deltas(
    robot_rows: Sequence[LeaderboardRow], human_row: LeaderboardRow
) -> list[SummaryRow]:
    """Robot column means, mean minus human, and column minimum minus human.

    Values are exact Decimals; call .rounded() on a row for the 2-decimal
    presentation form.
    """
    robots = [row for row in robot_rows if row.completed]
    if not robots:
        raise ValueError("averages need at least one completed robot row")
    if not human_row.completed:
        raise IncompleteTrial(human_row.label)

    n = len(robots)
    avg = {
        task: Decimal(sum(row.durations_ms[task] for row in robots)) / (n * MS_PER_S)
        for task in TaskId
    }
    avg_total = sum(row.effective_total_s() for row in robots) / n
    fastest = {
        task: min(row.durations_ms[task] for row in robots) / MS_PER_S for task in TaskId
    }
    fastest_total = min(row.effective_total_s() for row in robots)

    human = {task: human_row.duration_s(task) for task in TaskId}
    human_total = human_row.effective_total_s()

    return [
        SummaryRow(SUMMARY_AVG, avg, avg_total),
        SummaryRow(
            SUMMARY_AVG_MINUS_HUMAN,
            {task: avg[task] - human[task] for task in TaskId},
            avg_total - human_total,
        ),
        SummaryRow(
            SUMMARY_FASTEST_MINUS_HUMAN,
            {task: fastest[task] - human[task] for task in TaskId},
            fastest_total - human_total,
        ),
    ]


# -- report rendering ----------------------------------------------------------

_COLUMNS = [task.value for task in TaskId]


def _leaderboard_cells(rank_text: str, row: LeaderboardRow, marks: bool) -> list[str]:
    cells = [rank_text, row.label]
    for task in TaskId:
        value = row.duration_s(task)
        text = "-" if value is None else f"{value:.2f}"
        if marks and task.value in row.best:
            text = "*" + text
        cells.append(text)
    total = f"{round2(row.effective_total_s()):.2f}" if row.total_ms or row.completed else "-"
    if marks and "total" in row.best:
        total = "*" + total
    cells.append(total)
    cells.append(str(row.points))
    cells.append("COMPLETED" if row.completed else "INCOMPLETE")
    return cells


def render_leaderboard_text(
    rows: Sequence[LeaderboardRow], reference: Sequence[LeaderboardRow] = ()
) -> str:
    """Plain-text leaderboard; column minima are marked with a *.

    ``reference`` rows (a non-competing baseline such as the human
    operator) print below the ranked rows, unranked and never starred.
    """
    header = ["rank", "subject", *_COLUMNS, "total", "points", "status"]
    table = [header]
    for rank, row in enumerate(rows, start=1):
        table.append(_leaderboard_cells(str(rank), row, marks=True))
    for row in reference:
        table.append(_leaderboard_cells("-", row, marks=False))
    return _align(table)


def render_breakdown_text(rows: Sequence[BreakdownRow]) -> str:
    header = ["subject", *(f"{c}%" for c in _COLUMNS)]
    table = [header]
    for row in rows:
        table.append(
            [row.label, *(f"{row.fractions[task] * 100:.2f}" for task in TaskId)]
        )
    return _align(table)


def render_summary_text(rows: Sequence[SummaryRow]) -> str:
    header = ["row", *_COLUMNS, "total"]
    table = [header]
    for row in rows:
        rounded = row.rounded()
        table.append(
            [
                row.label,
                *(f"{rounded.per_task_s[task]:.2f}" for task in TaskId),
                f"{rounded.total_s:.2f}",
            ]
        )
    return _align(table)


def _csv_leaderboard_cells(section: str, row: LeaderboardRow) -> list[str]:
    cells = [section, row.label]
    for task in TaskId:
        value = row.duration_s(task)
        cells.append("" if value is None else f"{value:.2f}")
    cells.append(f"{round2(row.effective_total_s()):.2f}" if row.total_ms or row.completed else "")
    cells.append(str(row.points))
    cells.append("COMPLETED" if row.completed else "INCOMPLETE")
    return cells


def render_report_csv(
    rows: Sequence[LeaderboardRow],
    breakdowns: Sequence[BreakdownRow],
    summaries: Sequence[SummaryRow],
    reference: Sequence[LeaderboardRow] = (),
) -> str:
    """The same report as one CSV table, sectioned by the first column."""
    out = ["section,label," + ",".join(_COLUMNS) + ",total,points,status"]
    for row in rows:
        out.append(",".join(_csv_leaderboard_cells("leaderboard", row)))
    for row in reference:
        out.append(",".join(_csv_leaderboard_cells("reference", row)))
    for brow in breakdowns:
        fractions = [f"{brow.fractions[task]:.4f}" for task in TaskId]
        out.append(",".join(["breakdown", brow.label, *fractions, "1.0000", "", ""]))
    for srow in summaries:
        rounded = srow.rounded()
        cells = [
            "summary",
            srow.label,
            *(f"{rounded.per_task_s[task]:.2f}" for task in TaskId),
            f"{rounded.total_s:.2f}",
            "",
            "",
        ]
        out.append(",".join(cells))
    return "\n".join(out) + "\n"


def _align(table: list[list[str]]) -> str:
    widths = [max(len(row[i]) for row in table) for i in range(len(table[0]))]
    lines = []
    for row in table:
        lines.append("  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"
