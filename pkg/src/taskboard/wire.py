"""Telemetry wire format.

One record per line: UTF-8 JSON with keys sorted alphabetically at every
level and a fixed numeric form (integers in decimal, accel_sum with exactly
3 fractional digits, round half to even).  Byte equality of encoded lines
therefore equals semantic equality of records, which is what the server's
append-only log and the golden-file tests rely on.

Encoding is hand-assembled so the byte layout is pinned here and nowhere
else; decoding goes through json.loads and validates against the same
contract, so the two directions cross-check each other.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from typing import Any, Mapping, Optional

from taskboard.protocol import TaskId, TrialPhase, TrialRecord

WIRE_VERSION = 1

ACCEL_GRID = Decimal("0.001")

# alphabetical, the canonical order inside the timestamps object
_TASKS_WIRE_ORDER = sorted(TaskId, key=lambda task: task.value)

_TOP_KEYS = (
    "accel_sum",
    "endpoint_id",
    "phase",
    "points",
    "sent_epoch_ms",
    "seq",
    "timestamps",
    "trial_id",
    "v",
)


class WireError(Exception):
    """Base class for telemetry wire failures."""


class MalformedRecord(WireError):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class UnsupportedVersion(WireError):
    def __init__(self, v: Any):
        super().__init__(f"unsupported wire version: {v!r}")
        self.v = v


def _empty_timestamps() -> dict[TaskId, Optional[int]]:
    return {task: None for task in TaskId}


@dataclass(frozen=True, eq=True)
class TelemetryRecord:
    """One periodic snapshot of a board's trial state.

    seq increases strictly per endpoint over the device's lifetime; the
    record is a full snapshot, not a delta, so any single record describes
    the trial completely.
    """

    endpoint_id: str
    seq: int
    sent_epoch_ms: int
    trial_id: int
    phase: TrialPhase
    timestamps: Mapping[TaskId, Optional[int]] = field(default_factory=_empty_timestamps)
    points: int = 0
    accel_sum: float = 0.0
    v: int = WIRE_VERSION


def quantize_accel(value: float) -> float:
    """Snap an accel sum onto the wire's 3-fractional-digit grid."""
    return float(Decimal(value).quantize(ACCEL_GRID, rounding=ROUND_HALF_EVEN))


def format_accel(value: float) -> str:
    """The wire's fixed 3-fractional-digit decimal form of an accel sum."""
    quantized = Decimal(value).quantize(ACCEL_GRID, rounding=ROUND_HALF_EVEN)
    return format(quantized, "f")


def encode_record(rec: TelemetryRecord) -> bytes:
    """Render the canonical newline-terminated line for a record.

    Equal records encode to identical bytes; see the module docstring for
    the byte-layout rules.
    """
    ts = rec.timestamps
    ts_body = ",".join(
        f'"{task.value}":{ts[task] if ts[task] is not None else "null"}'
        for task in _TASKS_WIRE_ORDER
    )
    line = (
        "{"
        f'"accel_sum":{format_accel(rec.accel_sum)},'
        f'"endpoint_id":{json.dumps(rec.endpoint_id, ensure_ascii=False)},'
        f'"phase":"{rec.phase.value}",'
        f'"points":{rec.points},'
        f'"sent_epoch_ms":{rec.sent_epoch_ms},'
        f'"seq":{rec.seq},'
        f'"timestamps":{{{ts_body}}},'
        f'"trial_id":{rec.trial_id},'
        f'"v":{rec.v}'
        "}\n"
    )
    return line.encode("utf-8")


def _require_uint(obj: Mapping[str, Any], key: str) -> int:
    value = obj[key]
    # bool is an int subclass; a true/false here is a malformed record
    if not isinstance(value, int) or isinstance(value, bool):
        raise MalformedRecord(f"{key} must be an integer")
    if value < 0:
        raise MalformedRecord(f"{key} must be non-negative")
    return value


def decode_record(data: bytes | str) -> TelemetryRecord:
    """Parse one wire line; unknown extra keys are ignored.

    Raises MalformedRecord for anything structurally wrong and
    UnsupportedVersion for well-formed lines from a future protocol.
    """
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedRecord(f"not UTF-8: {exc}") from exc
    else:
        text = data
    if "\n" in text.rstrip("\n"):
        raise MalformedRecord("record spans multiple lines")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(f"invalid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise MalformedRecord("record is not an object")

    if "v" not in obj:
        raise MalformedRecord("missing key: v")
    v = obj["v"]
    if not isinstance(v, int) or isinstance(v, bool):
        raise MalformedRecord("v must be an integer")
    if v != WIRE_VERSION:
        raise UnsupportedVersion(v)

    for key in _TOP_KEYS:
        if key not in obj:
            raise MalformedRecord(f"missing key: {key}")

    endpoint_id = obj["endpoint_id"]
    if not isinstance(endpoint_id, str) or not endpoint_id:
        raise MalformedRecord("endpoint_id must be a non-empty string")

    seq = _require_uint(obj, "seq")
    sent_epoch_ms = _require_uint(obj, "sent_epoch_ms")
    trial_id = _require_uint(obj, "trial_id")
    points = _require_uint(obj, "points")

    phase_name = obj["phase"]
    if not isinstance(phase_name, str):
        raise MalformedRecord("phase must be a string")
    try:
        phase = TrialPhase(phase_name)
    except ValueError:
        raise MalformedRecord(f"unknown phase: {phase_name!r}") from None

    raw_ts = obj["timestamps"]
    if not isinstance(raw_ts, dict):
        raise MalformedRecord("timestamps must be an object")
    timestamps: dict[TaskId, Optional[int]] = {}
    for task in TaskId:
        if task.value not in raw_ts:
            raise MalformedRecord(f"timestamps missing key: {task.value}")
        value = raw_ts[task.value]
        if value is None:
            timestamps[task] = None
            continue
        if not isinstance(value, int) or isinstance(value, bool) or value < 0:
            raise MalformedRecord(f"timestamps.{task.value} must be null or a non-negative integer")
        timestamps[task] = value

    accel = obj["accel_sum"]
    if isinstance(accel, bool) or not isinstance(accel, (int, float)):
        raise MalformedRecord("accel_sum must be a number")
    if accel < 0:
        raise MalformedRecord("accel_sum must be non-negative")

    return TelemetryRecord(
        endpoint_id=endpoint_id,
        seq=seq,
        sent_epoch_ms=sent_epoch_ms,
        trial_id=trial_id,
        phase=phase,
        timestamps=timestamps,
        points=points,
        accel_sum=float(accel),
        v=v,
    )


def record_from_trial(
    trial: TrialRecord, endpoint_id: str, seq: int, sent_epoch_ms: int
) -> TelemetryRecord:
    """Snapshot a trial for publishing; accel lands on the wire grid here."""
    return TelemetryRecord(
        endpoint_id=endpoint_id,
        seq=seq,
        sent_epoch_ms=sent_epoch_ms,
        trial_id=trial.trial_id,
        phase=trial.phase,
        timestamps=dict(trial.timestamps),
        points=trial.points,
        accel_sum=quantize_accel(trial.accel_sum),
    )


def trial_from_record(rec: TelemetryRecord) -> TrialRecord:
    """Rebuild the trial-state view a record carries (reporting fields only)."""
    return TrialRecord(
        trial_id=rec.trial_id,
        phase=rec.phase,
        timestamps=dict(rec.timestamps),
        points=rec.points,
        accel_sum=rec.accel_sum,
    )
