"""Task-board device simulator.

Drives the trial state machine from scripted traces: circuit events, a
noisy 100 Hz accelerometer, 1 Hz protocol ticks and periodic telemetry.
Time is virtual (milliseconds, runs as fast as you step it); an optional
real-time pacer throttles it for live demos.

Determinism contract: the same DeviceConfig and trace produce a
byte-identical telemetry stream.  Everything that feeds the stream is
derived from the virtual clock and the seeded RNG, including the
sent_epoch_ms stamp (epoch base + virtual time, never the wall clock).
"""

from __future__ import annotations

import random
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

from taskboard import protocol
from taskboard.protocol import (
    BoardState,
    CircuitEvent,
    EventKind,
    ProtocolError,
    TrialPhase,
    TrialRecord,
)
from taskboard.wire import encode_record, record_from_trial

# arbitrary but fixed: keeps offline runs byte-identical across machines
DEFAULT_EPOCH_BASE_MS = 1_623_322_800_000

_CONTROL_OPS = ("ARM", "START", "ACCEL_BURST")


class TraceError(Exception):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class ParseError(TraceError):
    pass


class UnsortedTrace(TraceError):
    def __init__(self, line_no: int):
        super().__init__(line_no, "timestamps must be non-decreasing")


class DuplicateEndpoint(ValueError):
    def __init__(self, endpoint_id: str):
        super().__init__(f"endpoint_id already active in this process: {endpoint_id}")
        self.endpoint_id = endpoint_id


@dataclass(frozen=True)
class DeviceConfig:
    endpoint_id: str
    accel_rate_hz: int = 100
    telemetry_period_ms: int = 5000
    rng_seed: int = 0

    def __post_init__(self):
        if not self.endpoint_id:
            raise ValueError("endpoint_id must be non-empty")
        if self.accel_rate_hz <= 0 or 1000 % self.accel_rate_hz != 0:
            raise ValueError("accel_rate_hz must divide 1000 evenly")
        if self.telemetry_period_ms <= 0:
            raise ValueError("telemetry_period_ms must be positive")
        if self.rng_seed < 0:
            raise ValueError("rng_seed must be non-negative")


@dataclass(frozen=True)
class TraceEntry:
    """One trace line: a control op or a circuit event kind by name."""

    t_ms: int
    op: str
    peak_g: float = 0.0
    dur_ms: int = 0


@dataclass(frozen=True)
class DisplayState:
    lines: tuple[str, ...]

    def text(self) -> str:
        return "\n".join(self.lines)


def parse_trace(text: str) -> list[TraceEntry]:
    entries: list[TraceEntry] = []
    last_t = 0
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        try:
            t_ms = int(tokens[0])
        except ValueError:
            raise ParseError(line_no, f"bad timestamp: {tokens[0]!r}") from None
        if t_ms < 0:
            raise ParseError(line_no, "timestamp must be non-negative")
        if t_ms < last_t:
            raise UnsortedTrace(line_no)
        last_t = t_ms
        if len(tokens) < 2:
            raise ParseError(line_no, "missing op")
        op = tokens[1]
        if op == "ACCEL_BURST":
            if len(tokens) != 4:
                raise ParseError(line_no, "ACCEL_BURST takes <peak_g> <dur_ms>")
            try:
                peak_g = float(tokens[2])
                dur_ms = int(tokens[3])
            except ValueError:
                raise ParseError(line_no, "bad ACCEL_BURST arguments") from None
            if peak_g <= 0 or dur_ms <= 0:
                raise ParseError(line_no, "ACCEL_BURST arguments must be positive")
            entries.append(TraceEntry(t_ms, op, peak_g, dur_ms))
            continue
        if len(tokens) != 2:
            raise ParseError(line_no, f"unexpected tokens after {op}")
        if op not in _CONTROL_OPS and op not in EventKind.__members__:
            raise ParseError(line_no, f"unknown op: {op}")
        entries.append(TraceEntry(t_ms, op))
    return entries


def load_trace(path: str | Path) -> list[TraceEntry]:
    return parse_trace(Path(path).read_text(encoding="utf-8"))


# endpoint ids active in this process; a second sim with the same id is a bug
_active_endpoints: set[str] = set()
_endpoints_lock = threading.Lock()


class BoardSim:
    """One simulated task board.

    Single-threaded: the owner calls step()/inject_event().  Published
    records always accumulate in ``sent`` (bytes, one wire line each); an
    optional sink callable additionally receives each line as it is
    emitted, which is how the CLI streams to a server socket.
    """

    def __init__(
        self,
        config: DeviceConfig,
        trace: Optional[list[TraceEntry]] = None,
        sink: Optional[Callable[[bytes], None]] = None,
        epoch_base_ms: int = DEFAULT_EPOCH_BASE_MS,
    ):
        with _endpoints_lock:
            if config.endpoint_id in _active_endpoints:
                raise DuplicateEndpoint(config.endpoint_id)
            _active_endpoints.add(config.endpoint_id)
        self.config = config
        self.trace = list(trace or [])
        self.sink = sink
        self.epoch_base_ms = epoch_base_ms
        self.board = BoardState()
        self.trial: TrialRecord = protocol.new_trial(1)
        self.now_ms = 0
        self.sent: list[bytes] = []
        self.log: list[str] = []
        self._rng = random.Random(config.rng_seed)
        self._cursor = 0
        self._seq = 0
        self._accel_dt_ms = 1000 // config.accel_rate_hz
        self._next_accel = self._accel_dt_ms
        self._next_tick = 1000
        self._next_telem = config.telemetry_period_ms
        self._expiry_at: Optional[int] = None
        self._bursts: list[tuple[int, int, float]] = []  # (t0, t_end, peak_g)
        self._closed = False

    def close(self):
        if not self._closed:
            self._closed = True
            with _endpoints_lock:
                _active_endpoints.discard(self.config.endpoint_id)

    def __enter__(self) -> "BoardSim":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- stepping ---------------------------------------------------------

    def step(self, to_t_ms: int) -> None:
        """Advance virtual time, delivering everything due on the way."""
        if to_t_ms < self.now_ms:
            raise ValueError("cannot step backwards")
        while True:
            due = self._next_due(to_t_ms)
            if due is None:
                break
            t, _, handler = due
            self.now_ms = max(self.now_ms, t)
            handler()
        self.now_ms = to_t_ms

    def _next_due(self, limit: int):
        # equal-time order: trace event, expiry/tick, accel sample, telemetry
        candidates = []
        if self._cursor < len(self.trace) and self.trace[self._cursor].t_ms <= limit:
            candidates.append((self.trace[self._cursor].t_ms, 0, self._handle_trace))
        if self._expiry_at is not None and self._expiry_at <= limit:
            candidates.append((self._expiry_at, 1, self._handle_expiry))
        if self._next_tick <= limit:
            candidates.append((self._next_tick, 2, self._handle_tick))
        if self._next_accel <= limit:
            candidates.append((self._next_accel, 3, self._handle_accel))
        if self._next_telem <= limit:
            candidates.append((self._next_telem, 4, self._handle_telemetry))
        if not candidates:
            return None
        return min(candidates, key=lambda c: (c[0], c[1]))

    def _handle_trace(self):
        entry = self.trace[self._cursor]
        self._cursor += 1
        if entry.op == "ARM":
            self._op_arm()
        elif entry.op == "START":
            self._op_start()
        elif entry.op == "ACCEL_BURST":
            self._bursts.append((entry.t_ms, entry.t_ms + entry.dur_ms, entry.peak_g))
        else:
            self._deliver(EventKind[entry.op])

    def _op_arm(self):
        if self.trial.phase in (TrialPhase.COMPLETED, TrialPhase.EXPIRED):
            # board reset between trials; next trial id is assigned here
            self.board = protocol.reset_board(self.board)
            self.trial = protocol.new_trial(self.trial.trial_id + 1)
        try:
            self.trial = protocol.arm(self.board, self.trial)
        except ProtocolError as exc:
            self._reject("ARM", exc)

    def _op_start(self):
        try:
            self.trial = protocol.start(
                self.trial, self.now_ms, self.epoch_base_ms + self.now_ms
            )
        except ProtocolError as exc:
            self._reject("START", exc)
            return
        self._expiry_at = self.now_ms + self.trial.expiry_ms

    def _deliver(self, kind: EventKind):
        try:
            after = protocol.on_event(self.trial, CircuitEvent(kind, self.now_ms))
        except ProtocolError as exc:
            self._reject(kind.value, exc)
            return
        finished = after.phase is TrialPhase.COMPLETED and self.trial.phase is not after.phase
        self.trial = after
        if finished:
            self._expiry_at = None
            self._flush()

    def _handle_expiry(self):
        self._expiry_at = None
        before = self.trial.phase
        self.trial = protocol.tick(self.trial, self.now_ms)
        if before is not self.trial.phase:
            self._flush()

    def _handle_tick(self):
        self._next_tick += 1000
        before = self.trial.phase
        self.trial = protocol.tick(self.trial, self.now_ms)
        if before is not self.trial.phase and self.trial.phase is TrialPhase.EXPIRED:
            self._expiry_at = None
            self._flush()

    def _handle_accel(self):
        self._next_accel += self._accel_dt_ms
        base = 1.0
        self._bursts = [b for b in self._bursts if b[1] > self.now_ms]
        for t0, t_end, peak_g in self._bursts:
            if t0 <= self.now_ms < t_end:
                base = max(base, peak_g)
        noise = self._rng.uniform(-0.01, 0.01)
        sample = (0.0, 0.0, base + noise)
        self.trial = protocol.accumulate_accel(
            self.trial, sample, self._accel_dt_ms / 1000.0
        )

    def _handle_telemetry(self):
        self._next_telem += self.config.telemetry_period_ms
        self._emit()

    def _flush(self):
        """End-of-trial record, published at the transition instant."""
        if self._next_telem == self.now_ms:
            # the periodic record due right now is superseded by the flush
            self._next_telem += self.config.telemetry_period_ms
        self._emit()

    def _emit(self):
        self._seq += 1
        rec = record_from_trial(
            self.trial,
            self.config.endpoint_id,
            self._seq,
            self.epoch_base_ms + self.now_ms,
        )
        data = encode_record(rec)
        self.sent.append(data)
        if self.sink is not None:
            self.sink(data)

    # -- interactive injection --------------------------------------------

    def inject_event(self, kind: EventKind) -> None:
        """Route an event at the current simulated time (interactive mode)."""
        self._deliver(kind)

    def _reject(self, op: str, exc: Exception) -> None:
        self.log.append(f"{self.now_ms} ms: {op} rejected: {exc}")


def run_to_end(sim: BoardSim) -> TrialRecord:
    """Play the whole trace, then run any open trial out to its expiry."""
    if sim.trace:
        sim.step(max(sim.trace[-1].t_ms, sim.now_ms))
    if sim.trial.phase in (TrialPhase.ARMED, TrialPhase.RUNNING):
        deadline = (
            sim.trial.start_device_ms + sim.trial.expiry_ms
            if sim.trial.phase is TrialPhase.RUNNING
            else sim.now_ms + sim.trial.expiry_ms
        )
        sim.step(deadline)
    return sim.trial


def run_realtime(sim: BoardSim, until_ms: int, chunk_ms: int = 100) -> None:
    """Step the sim in wall-clock lockstep (1 ms virtual = 1 ms real)."""
    wall_start = time.monotonic()
    virtual_start = sim.now_ms
    while sim.now_ms < until_ms:
        target = min(sim.now_ms + chunk_ms, until_ms)
        sim.step(target)
        ahead = (target - virtual_start) / 1000.0 - (time.monotonic() - wall_start)
        if ahead > 0:
            time.sleep(ahead)


def render_display(trial: TrialRecord, now_ms: int, endpoint_id: str) -> DisplayState:
    """Text the board's LED screen would show; pure, mutates nothing."""
    if trial.phase is TrialPhase.RUNNING:
        elapsed = min(now_ms - trial.start_device_ms, trial.expiry_ms)
    elif trial.phase is TrialPhase.COMPLETED:
        elapsed = trial.last_completion_ms()
    elif trial.phase is TrialPhase.EXPIRED:
        elapsed = trial.expiry_ms
    else:
        elapsed = 0
    lines = [
        f"{endpoint_id}  trial {trial.trial_id}  {trial.phase.value}",
        f"elapsed {elapsed / 1000:.1f}s  points {trial.points}  accel {trial.accel_sum:.3f}",
    ]
    for task in protocol.TaskId:
        ts = trial.timestamps[task]
        mark = f"{ts / 1000:8.2f}s" if ts is not None else "      --"
        lines.append(f"  {task.value:<10} {mark}")
    return DisplayState(tuple(lines))
