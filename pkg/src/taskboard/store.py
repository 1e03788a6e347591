"""Aggregation store: append-only log plus in-memory board ledgers.

Durability model: every accepted line (and every validation action) is
appended to a single log file before any ledger mutation, each entry
prefixed with its receive timestamp:

    <recv_epoch_ms> <raw wire line>
    <recv_epoch_ms> !validate <json>

Ledgers are pure projections of that log; replaying it reconstructs the
exact live state, which is the crash-recovery story and also what the
idempotence tests lean on.  Malformed input never reaches the log; it goes
to a quarantine file next to it.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import threading
import time
from dataclasses import dataclass, field, replace
from decimal import ROUND_HALF_EVEN, Decimal
from enum import Enum
from pathlib import Path
from typing import Optional

from taskboard.protocol import TaskId, successive_durations
from taskboard.wire import (
    TelemetryRecord,
    WireError,
    decode_record,
    format_accel,
)

log = logging.getLogger(__name__)

VALIDATE_PREFIX = "!validate "

CSV_HEADER = (
    "endpoint_id,trial_id,phase,find_board_s,key_switch_s,plug_s,"
    "batt1_s,batt2_s,stop_s,total_s,points,accel_sum,validated"
)


class IngestOutcome(Enum):
    APPLIED = "applied"
    DUPLICATE_DROPPED = "duplicate_dropped"
    MALFORMED = "malformed"


class StoreError(Exception):
    pass


class UnknownBoard(StoreError):
    def __init__(self, endpoint_id: str):
        super().__init__(f"no such board: {endpoint_id}")
        self.endpoint_id = endpoint_id


class UnknownTrial(StoreError):
    def __init__(self, endpoint_id: str, trial_id: int):
        super().__init__(f"no trial {trial_id} for board {endpoint_id}")
        self.endpoint_id = endpoint_id
        self.trial_id = trial_id


@dataclass(frozen=True)
class Validation:
    validated: bool
    judge: str
    note: str = ""


@dataclass
class BoardLedger:
    """Projection of one board's stream: latest snapshot plus final
    (highest-seq) record per trial.  Records at or below last_seq are
    never applied."""

    endpoint_id: str
    last_seq: int
    latest: TelemetryRecord
    latest_recv_ms: int
    trials: dict[int, TelemetryRecord] = field(default_factory=dict)
    validations: dict[int, Validation] = field(default_factory=dict)

    def snapshot(self) -> "BoardLedger":
        return replace(self, trials=dict(self.trials), validations=dict(self.validations))


@dataclass(frozen=True)
class TrialView:
    record: TelemetryRecord
    validation: Optional[Validation]


class Store:
    """Thread-safe ledger store over one append-only log file.

    All mutation goes through one lock, so log appends are totally ordered
    and queries see consistent snapshots.
    """

    def __init__(self, log_path: str | Path, quarantine_path: str | Path | None = None):
        self.log_path = Path(log_path)
        self.quarantine_path = (
            Path(quarantine_path)
            if quarantine_path is not None
            else self.log_path.with_name(self.log_path.name + ".quarantine")
        )
        self._lock = threading.RLock()
        self._boards: dict[str, BoardLedger] = {}
        self.log_path.parent.mkdir(parents=True, exist_ok=True)
        self._log_file = open(self.log_path, "ab")

    def close(self) -> None:
        with self._lock:
            if not self._log_file.closed:
                self._log_file.flush()
                self._log_file.close()

    def __enter__(self) -> "Store":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- ingest -------------------------------------------------------------

    def ingest_line(self, raw: bytes, recv_epoch_ms: Optional[int] = None) -> IngestOutcome:
        """Decode, append to the log, then apply if the seq gate passes."""
        recv = recv_epoch_ms if recv_epoch_ms is not None else _now_ms()
        if not raw.endswith(b"\n"):
            raw = raw + b"\n"
        try:
            rec = decode_record(raw)
        except WireError as exc:
            self._quarantine(recv, raw, exc)
            return IngestOutcome.MALFORMED
        with self._lock:
            self._append(f"{recv} ".encode("ascii") + raw)
            return self._apply(rec, recv)

    def _apply(self, rec: TelemetryRecord, recv_ms: int) -> IngestOutcome:
        board = self._boards.get(rec.endpoint_id)
        if board is None:
            self._boards[rec.endpoint_id] = BoardLedger(
                endpoint_id=rec.endpoint_id,
                last_seq=rec.seq,
                latest=rec,
                latest_recv_ms=recv_ms,
                trials={rec.trial_id: rec},
            )
            return IngestOutcome.APPLIED
        if rec.seq <= board.last_seq:
            return IngestOutcome.DUPLICATE_DROPPED
        board.last_seq = rec.seq
        board.latest = rec
        board.latest_recv_ms = recv_ms
        board.trials[rec.trial_id] = rec
        return IngestOutcome.APPLIED

    def _quarantine(self, recv_ms: int, raw: bytes, exc: Exception) -> None:
        log.warning("quarantining malformed record: %s", exc)
        with self._lock:
            with open(self.quarantine_path, "ab") as fh:
                fh.write(f"{recv_ms} ".encode("ascii") + raw)

    def _append(self, entry: bytes) -> None:
        self._log_file.write(entry)
        self._log_file.flush()

    # -- validation ----------------------------------------------------------

    def validate_trial(
        self, endpoint_id: str, trial_id: int, judge: str, validated: bool, note: str = ""
    ) -> Validation:
        """Record a jury decision; the latest decision wins."""
        with self._lock:
            board = self._boards.get(endpoint_id)
            if board is None:
                raise UnknownBoard(endpoint_id)
            if trial_id not in board.trials:
                raise UnknownTrial(endpoint_id, trial_id)
            action = Validation(validated=validated, judge=judge, note=note)
            payload = json.dumps(
                {
                    "endpoint_id": endpoint_id,
                    "judge": judge,
                    "note": note,
                    "trial_id": trial_id,
                    "validated": validated,
                },
                sort_keys=True,
                separators=(",", ":"),
                ensure_ascii=False,
            )
            self._append(f"{_now_ms()} {VALIDATE_PREFIX}{payload}\n".encode("utf-8"))
            board.validations[trial_id] = action
            return action

    # -- queries --------------------------------------------------------------

    def boards(self) -> list[BoardLedger]:
        with self._lock:
            return [
                self._boards[endpoint_id].snapshot()
                for endpoint_id in sorted(self._boards)
            ]

    def query_latest(self, endpoint_id: str) -> tuple[TelemetryRecord, int]:
        """Latest record for a board plus its receive timestamp."""
        with self._lock:
            board = self._boards.get(endpoint_id)
            if board is None:
                raise UnknownBoard(endpoint_id)
            return board.latest, board.latest_recv_ms

    def query_trials(self, endpoint_id: str) -> list[TrialView]:
        with self._lock:
            board = self._boards.get(endpoint_id)
            if board is None:
                raise UnknownBoard(endpoint_id)
            return [
                TrialView(board.trials[tid], board.validations.get(tid))
                for tid in sorted(board.trials)
            ]

    # -- recovery --------------------------------------------------------------

    @classmethod
    def recover_from_log(
        cls, log_path: str | Path, quarantine_path: str | Path | None = None
    ) -> "Store":
        """Rebuild ledgers by replaying the log, then reopen it for append.

        Corrupt entries (a truncated tail after a crash, mostly) are skipped
        with a warning; everything that was applied live is applied again in
        the same order, so the result equals the pre-crash state.
        """
        path = Path(log_path)
        entries: list[bytes] = []
        if path.exists():
            entries = path.read_bytes().splitlines(keepends=True)
        store = cls(path, quarantine_path)
        for line_no, entry in enumerate(entries, start=1):
            if not entry.endswith(b"\n"):
                log.warning("log %s line %d: truncated tail, skipped", path, line_no)
                continue
            try:
                prefix, rest = entry.split(b" ", 1)
                recv_ms = int(prefix)
            except ValueError:
                log.warning("log %s line %d: bad entry prefix, skipped", path, line_no)
                continue
            if rest.startswith(VALIDATE_PREFIX.encode("ascii")):
                store._replay_validation(rest[len(VALIDATE_PREFIX):], line_no)
                continue
            try:
                rec = decode_record(rest)
            except WireError as exc:
                log.warning("log %s line %d: %s, skipped", path, line_no, exc)
                continue
            with store._lock:
                store._apply(rec, recv_ms)
        return store

    def _replay_validation(self, payload: bytes, line_no: int) -> None:
        try:
            obj = json.loads(payload)
            endpoint_id = obj["endpoint_id"]
            trial_id = obj["trial_id"]
            action = Validation(
                validated=bool(obj["validated"]),
                judge=str(obj["judge"]),
                note=str(obj.get("note", "")),
            )
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            log.warning("log line %d: bad validation entry (%s), skipped", line_no, exc)
            return
        with self._lock:
            board = self._boards.get(endpoint_id)
            if board is None or trial_id not in board.trials:
                log.warning("log line %d: validation for unknown trial, skipped", line_no)
                return
            board.validations[trial_id] = action

    # -- export ------------------------------------------------------------------

    def export_csv(self, scope: Optional[str] = None) -> bytes:
        """One row per final trial record, ordered by (endpoint_id, trial_id).

        Durations are successive differences in seconds at 2 decimals; tasks
        never completed leave empty cells, and total_s is the time of the
        last completion (empty when nothing was completed).
        """
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(CSV_HEADER.split(","))
        with self._lock:
            if scope is not None and scope not in self._boards:
                raise UnknownBoard(scope)
            ids = [scope] if scope is not None else sorted(self._boards)
            for endpoint_id in ids:
                board = self._boards[endpoint_id]
                for trial_id in sorted(board.trials):
                    writer.writerow(_csv_row(board, board.trials[trial_id]))
        return out.getvalue().encode("utf-8")


def _csv_row(board: BoardLedger, rec: TelemetryRecord) -> list[str]:
    durations = successive_durations(rec.timestamps)
    cells = [board.endpoint_id, str(rec.trial_id), rec.phase.value]
    for task in TaskId:
        cells.append(_seconds(durations[task]) if task in durations else "")
    done = [ts for ts in rec.timestamps.values() if ts is not None]
    cells.append(_seconds(max(done)) if done else "")
    cells.append(str(rec.points))
    cells.append(format_accel(rec.accel_sum))
    validation = board.validations.get(rec.trial_id)
    cells.append("" if validation is None else str(validation.validated).lower())
    return cells


def _seconds(ms: int) -> str:
    return format((Decimal(ms) / 1000).quantize(Decimal("0.01"), ROUND_HALF_EVEN), "f")


def _now_ms() -> int:
    return int(time.time() * 1000)
