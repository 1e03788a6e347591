// View-model layer: pure functions and one small stateful tracker, no DOM
// and no fetch, so the unit tests can pin behaviour with plain data.

import { BoardSummary, Phase, TaskName, TASK_ORDER, WireRecord } from "./api.js";

// boards report every 5 s; a tile is stale once two reports in a row are missing
export const TELEMETRY_PERIOD_MS = 5_000;
export const STALE_AFTER_MS = 2 * TELEMETRY_PERIOD_MS;

export const TASK_LABELS: Record<TaskName, string> = {
  find_board: "Find board",
  key_switch: "Key switch",
  plug: "Plug",
  batt1: "Batt 1",
  batt2: "Batt 2",
  stop: "Stop",
};

export interface TaskCell {
  task: TaskName;
  label: string;
  /** Completion time in seconds from trial start, null while outstanding. */
  seconds: string | null;
}

export interface BoardTile {
  endpointId: string;
  trialId: number;
  phase: Phase;
  points: number;
  accelSum: string;
  cells: TaskCell[];
  elapsedText: string;
  stale: boolean;
  ageSeconds: number;
}

/** Milliseconds rendered as seconds, always two fractional digits. */
export function formatSeconds(ms: number): string {
  return (ms / 1000).toFixed(2);
}

/** True once the last report is older than two telemetry periods. */
export function isStale(recvEpochMs: number, nowMs: number): boolean {
  return nowMs - recvEpochMs > STALE_AFTER_MS;
}

function latestTimestampMs(record: WireRecord): number {
  let latest = 0;
  for (const task of TASK_ORDER) {
    const stamp = record.timestamps[task];
    if (stamp !== null && stamp > latest) {
      latest = stamp;
    }
  }
  return latest;
}

/**
 * Display estimate of a running trial's elapsed time.
 *
 * Wire snapshots carry no absolute start time, so the exact elapsed value
 * is only known at the moments a task completes.  Between those anchors the
 * tracker advances its last estimate by the local clock, and it never runs
 * backwards within one trial.  This is presentation smoothing only; nothing
 * computed here feeds scoring.
 */
export class ElapsedTracker {
  private estimates = new Map<string, { trialId: number; elapsedMs: number; wallMs: number }>();

  update(record: WireRecord, wallMs: number): number | null {
    const key = record.endpoint_id;
    if (record.phase !== "RUNNING") {
      this.estimates.delete(key);
      return null;
    }
    const anchor = latestTimestampMs(record);
    const prior = this.estimates.get(key);
    let elapsed = anchor;
    if (prior !== undefined && prior.trialId === record.trial_id) {
      elapsed = Math.max(anchor, prior.elapsedMs + Math.max(0, wallMs - prior.wallMs));
    }
    this.estimates.set(key, { trialId: record.trial_id, elapsedMs: elapsed, wallMs });
    return elapsed;
  }
}

function elapsedText(record: WireRecord, runningElapsedMs: number | null): string {
  switch (record.phase) {
    case "RUNNING":
      return runningElapsedMs === null ? "running" : `${formatSeconds(runningElapsedMs)} s`;
    case "COMPLETED": {
      const stop = record.timestamps.stop;
      return stop === null ? "done" : `${formatSeconds(stop)} s`;
    }
    case "EXPIRED":
      return "time limit";
    default:
      return "-";
  }
}

export function buildTile(
  summary: BoardSummary,
  nowMs: number,
  runningElapsedMs: number | null,
): BoardTile {
  const record = summary.latest;
  const cells: TaskCell[] = TASK_ORDER.map((task) => {
    const stamp = record.timestamps[task];
    return {
      task,
      label: TASK_LABELS[task],
      seconds: stamp === null ? null : formatSeconds(stamp),
    };
  });
  return {
    endpointId: summary.endpoint_id,
    trialId: record.trial_id,
    phase: record.phase,
    points: record.points,
    accelSum: record.accel_sum.toFixed(3),
    cells,
    elapsedText: elapsedText(record, runningElapsedMs),
    stale: isStale(summary.recv_epoch_ms, nowMs),
    ageSeconds: Math.max(0, Math.round((nowMs - summary.recv_epoch_ms) / 1000)),
  };
}
