import math
import random

import pytest
from hypothesis import given, strategies as st

from taskboard import protocol
from taskboard.protocol import (
    BoardState,
    CircuitEvent,
    EventKind,
    NotStartReady,
    TaskId,
    TrialNotFinished,
    TrialPhase,
    WrongPhase,
)


def running_trial(start_ms=0):
    trial = protocol.new_trial(1)
    trial = protocol.arm(BoardState(), trial)
    return protocol.start(trial, start_ms)


def test_new_trial_is_idle_with_empty_slate():
    trial = protocol.new_trial(7)
    assert trial.phase is TrialPhase.IDLE
    assert trial.points == 0
    assert trial.accel_sum == 0.0
    assert set(trial.timestamps) == set(TaskId)
    assert all(ts is None for ts in trial.timestamps.values())


def test_arm_requires_start_ready_board():
    trial = protocol.new_trial(1)
    state = BoardState(key_in_holster=False, lid_closed=False)
    with pytest.raises(NotStartReady) as exc:
        protocol.arm(state, trial)
    assert exc.value.missing == ["key_in_holster", "lid_closed"]
    # untouched by the failed arm
    assert trial.phase is TrialPhase.IDLE


def test_reset_board_restores_everything():
    state = BoardState(plug_in_source_port=False, batt2_seated=False)
    assert not state.is_start_ready()
    assert protocol.reset_board(state).is_start_ready()


def test_disarm_returns_to_idle():
    trial = protocol.arm(BoardState(), protocol.new_trial(1))
    trial = protocol.disarm(trial)
    assert trial.phase is TrialPhase.IDLE
    # and the board can be re-armed
    assert protocol.arm(BoardState(), trial).phase is TrialPhase.ARMED


def test_start_zeroes_the_trial_clock():
    trial = protocol.arm(BoardState(), protocol.new_trial(1))
    trial = protocol.start(trial, 5_000, start_epoch_ms=1_600_000_000_000)
    assert trial.phase is TrialPhase.RUNNING
    assert trial.start_device_ms == 5_000
    assert trial.start_epoch_ms == 1_600_000_000_000
    event = CircuitEvent(EventKind.BLUE_BUTTON_PRESSED, 5_000 + 78_650)
    trial = protocol.on_event(trial, event)
    # timestamps are elapsed-from-start, not raw device time
    assert trial.timestamps[TaskId.FIND_BOARD] == 78_650


def test_first_completion_scores_one_point_each():
    trial = running_trial()
    trial = protocol.on_event(trial, CircuitEvent(EventKind.BLUE_BUTTON_PRESSED, 100))
    assert trial.points == 1
    trial = protocol.on_event(trial, CircuitEvent(EventKind.BLUE_BUTTON_PRESSED, 200))
    assert trial.points == 1  # repeat press ignored
    assert trial.timestamps[TaskId.FIND_BOARD] == 100
    trial = protocol.on_event(trial, CircuitEvent(EventKind.BATT1_DROPPED, 300))
    assert trial.points == 2


def test_stop_before_all_manipulation_tasks_is_ignored():
    trial = running_trial()
    trial = protocol.on_event(trial, CircuitEvent(EventKind.RED_BUTTON_PRESSED, 50))
    assert trial.phase is TrialPhase.RUNNING
    assert trial.timestamps[TaskId.STOP] is None
    assert trial.points == 0


COMPLETION_110730 = [
    (EventKind.BLUE_BUTTON_PRESSED, 78_650),
    (EventKind.KEY_SWITCH_ACTIVATED, 84_440),
    (EventKind.PLUG_SEATED_TARGET, 89_540),
    (EventKind.BATT1_DROPPED, 108_680),
    (EventKind.BATT2_DROPPED, 108_830),
    (EventKind.RED_BUTTON_PRESSED, 110_730),
]


def test_full_completion_run():
    trial = running_trial()
    for kind, t in COMPLETION_110730:
        trial = protocol.on_event(trial, CircuitEvent(kind, t))
    assert trial.phase is TrialPhase.COMPLETED
    assert trial.points == 6
    durations = protocol.task_durations(trial)
    assert durations == {
        TaskId.FIND_BOARD: 78_650,
        TaskId.KEY_SWITCH: 5_790,
        TaskId.PLUG: 5_100,
        TaskId.BATT1: 19_140,
        TaskId.BATT2: 150,
        TaskId.STOP: 1_900,
    }
    assert sum(durations.values()) == 110_730 == trial.last_completion_ms()


def test_out_of_order_completion_durations_follow_chronology():
    # plug seated before key switch: durations pair with completion order
    trial = running_trial()
    trial = protocol.on_event(trial, CircuitEvent(EventKind.BLUE_BUTTON_PRESSED, 1_000))
    trial = protocol.on_event(trial, CircuitEvent(EventKind.PLUG_SEATED_TARGET, 4_000))
    trial = protocol.on_event(trial, CircuitEvent(EventKind.KEY_SWITCH_ACTIVATED, 9_000))
    trial = protocol.on_event(trial, CircuitEvent(EventKind.BATT1_DROPPED, 9_500))
    trial = protocol.on_event(trial, CircuitEvent(EventKind.BATT2_DROPPED, 12_000))
    trial = protocol.on_event(trial, CircuitEvent(EventKind.RED_BUTTON_PRESSED, 12_100))
    durations = protocol.task_durations(trial)
    assert durations[TaskId.PLUG] == 3_000
    assert durations[TaskId.KEY_SWITCH] == 5_000
    assert sum(durations.values()) == 12_100


def test_task_durations_requires_finished_trial():
    trial = running_trial()
    with pytest.raises(TrialNotFinished):
        protocol.task_durations(trial)


def test_expiry_boundary():
    trial = running_trial(start_ms=0)
    trial = protocol.on_event(trial, CircuitEvent(EventKind.BLUE_BUTTON_PRESSED, 10))
    assert protocol.tick(trial, 599_999).phase is TrialPhase.RUNNING
    expired = protocol.tick(trial, 600_000)
    assert expired.phase is TrialPhase.EXPIRED
    # partial progress survives expiry
    assert expired.timestamps[TaskId.FIND_BOARD] == 10
    assert expired.points == 1
    assert protocol.task_durations(expired) == {TaskId.FIND_BOARD: 10}


def test_events_at_or_past_expiry_are_ignored():
    trial = running_trial(start_ms=0)
    same = protocol.on_event(trial, CircuitEvent(EventKind.BLUE_BUTTON_PRESSED, 600_000))
    assert same.timestamps[TaskId.FIND_BOARD] is None
    assert same.points == 0
    late = protocol.on_event(trial, CircuitEvent(EventKind.BLUE_BUTTON_PRESSED, 599_999))
    assert late.timestamps[TaskId.FIND_BOARD] == 599_999


def test_tick_outside_running_is_a_no_op():
    trial = protocol.new_trial(1)
    assert protocol.tick(trial, 10**9) is trial
    finished = running_trial()
    for kind, t in COMPLETION_110730:
        finished = protocol.on_event(finished, CircuitEvent(kind, t))
    assert protocol.tick(finished, 10**9).phase is TrialPhase.COMPLETED


def test_wrong_phase_operations_raise():
    idle = protocol.new_trial(1)
    with pytest.raises(WrongPhase):
        protocol.start(idle, 0)
    with pytest.raises(WrongPhase):
        protocol.disarm(idle)
    with pytest.raises(WrongPhase):
        protocol.on_event(idle, CircuitEvent(EventKind.BLUE_BUTTON_PRESSED, 0))
    armed = protocol.arm(BoardState(), idle)
    with pytest.raises(WrongPhase):
        protocol.arm(BoardState(), armed)


def test_accel_sum_closed_form():
    # constant 2 g for 100 samples at 5 ms each: sum = |2-1| * 0.5 s
    trial = running_trial()
    for _ in range(100):
        trial = protocol.accumulate_accel(trial, (0.0, 0.0, 2.0), 0.005)
    assert trial.accel_sum == pytest.approx(0.5)


def test_accel_magnitude_is_euclidean():
    trial = running_trial()
    trial = protocol.accumulate_accel(trial, (3.0, 4.0, 0.0), 1.0)
    assert trial.accel_sum == pytest.approx(4.0)  # |5 - 1| * 1 s


def test_accel_outside_running_is_discarded():
    trial = protocol.new_trial(1)
    assert protocol.accumulate_accel(trial, (0.0, 0.0, 9.0), 1.0).accel_sum == 0.0


def test_restart_after_disarm_clears_nothing_it_should_not():
    # a fresh start wipes timestamps, points and accel from any earlier run
    trial = running_trial()
    trial = protocol.on_event(trial, CircuitEvent(EventKind.BLUE_BUTTON_PRESSED, 5))
    trial = protocol.accumulate_accel(trial, (0.0, 0.0, 2.0), 1.0)
    for kind, t in COMPLETION_110730:
        trial = protocol.on_event(trial, CircuitEvent(kind, t))
    fresh = protocol.new_trial(trial.trial_id + 1)
    fresh = protocol.start(protocol.arm(BoardState(), fresh), 200_000)
    assert fresh.points == 0
    assert fresh.accel_sum == 0.0
    assert all(ts is None for ts in fresh.timestamps.values())


@given(st.lists(st.sampled_from(list(EventKind)), min_size=0, max_size=40), st.integers(0, 2**31))
def test_event_streams_never_reach_illegal_phases(kinds, seed):
    rng = random.Random(seed)
    trial = running_trial()
    t = 0
    seen = [trial.phase]
    for kind in kinds:
        t += rng.randrange(0, 20_000)
        trial = protocol.tick(trial, t)
        if trial.phase is not TrialPhase.RUNNING:
            break
        trial = protocol.on_event(trial, CircuitEvent(kind, t))
        seen.append(trial.phase)
    # phases only ever move forward along legal edges
    for before, after in zip(seen, seen[1:]):
        assert before == after or (before, after) in protocol.LEGAL_TRANSITIONS
    # points always equals the number of recorded timestamps
    assert trial.points == sum(ts is not None for ts in trial.timestamps.values())
    # STOP never recorded while a manipulation task is missing
    if trial.timestamps[TaskId.STOP] is not None:
        assert all(trial.timestamps[task] is not None for task in protocol.MANIPULATION_TASKS)


@given(
    st.dictionaries(
        st.sampled_from(list(TaskId)),
        st.one_of(st.none(), st.integers(0, 600_000)),
        min_size=6,
        max_size=6,
    )
)
def test_successive_durations_sum_to_last_timestamp(stamps):
    full = {task: stamps.get(task) for task in TaskId}
    durations = protocol.successive_durations(full)
    done = [ts for ts in full.values() if ts is not None]
    assert sum(durations.values()) == (max(done) if done else 0)
    assert set(durations) == {task for task, ts in full.items() if ts is not None}


def test_successive_durations_brute_force_cross_check():
    rng = random.Random(20210610)
    for _ in range(500):
        values = rng.sample(range(600_000), 6)
        stamps = {
            task: (values[i] if rng.random() < 0.8 else None)
            for i, task in enumerate(TaskId)
        }
        durations = protocol.successive_durations(stamps)
        # oracle: walk the sorted completion times directly
        expected = {}
        last = 0
        for ts, task in sorted((ts, task) for task, ts in stamps.items() if ts is not None):
            expected[task] = ts - last
            last = ts
        assert durations == expected
