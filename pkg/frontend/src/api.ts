// Typed client for the aggregation server's HTTP API.
//
// Every number the dashboard shows comes out of these payloads as-is.  The
// UI formats values for display but never recomputes durations, totals or
// rankings; the server is the single source of truth for scoring.

export type Phase = "IDLE" | "ARMED" | "RUNNING" | "COMPLETED" | "EXPIRED";

export type TaskName = "find_board" | "key_switch" | "plug" | "batt1" | "batt2" | "stop";

// board order: five manipulation tasks, then the stop button
export const TASK_ORDER: TaskName[] = [
  "find_board",
  "key_switch",
  "plug",
  "batt1",
  "batt2",
  "stop",
];

/** One full trial snapshot, exactly as the board put it on the wire. */
export interface WireRecord {
  accel_sum: number;
  endpoint_id: string;
  phase: Phase;
  points: number;
  sent_epoch_ms: number;
  seq: number;
  timestamps: Record<TaskName, number | null>;
  trial_id: number;
  v: number;
}

export interface BoardSummary {
  endpoint_id: string;
  last_seq: number;
  trial_count: number;
  recv_epoch_ms: number;
  latest: WireRecord;
}

export interface LatestView {
  record: WireRecord;
  recv_epoch_ms: number;
}

export interface Validation {
  validated: boolean;
  judge: string;
  note: string;
}

export interface TrialView {
  record: WireRecord;
  validation: Validation | null;
}

/** A ranked row from GET /leaderboard; seconds arrive pre-formatted. */
export interface LeaderboardRow {
  label: string;
  trial_id: number;
  completed: boolean;
  points: number;
  durations_s: Record<TaskName, string | null>;
  total_s: string;
  best: TaskName[];
}

export interface ValidationRequest {
  judge: string;
  validated: boolean;
  note: string;
}

/** A non-2xx answer from the server, message taken from its error payload. */
export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function errorMessage(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { error?: unknown };
    if (typeof body.error === "string") {
      return body.error;
    }
  } catch {
    // not JSON; fall through to the status line
  }
  return `${response.status} ${response.statusText}`;
}

async function requestJson<T>(url: string, init?: RequestInit): Promise<T> {
  const response = await fetch(url, init);
  if (!response.ok) {
    throw new ApiError(await errorMessage(response), response.status);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  readonly baseUrl: string;

  constructor(baseUrl: string) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  async fetchBoards(): Promise<BoardSummary[]> {
    const payload = await requestJson<{ boards: BoardSummary[] }>(`${this.baseUrl}/boards`);
    return payload.boards;
  }

  async fetchLatest(endpointId: string): Promise<LatestView> {
    return requestJson<LatestView>(
      `${this.baseUrl}/boards/${encodeURIComponent(endpointId)}/latest`,
    );
  }

  async fetchTrials(endpointId: string): Promise<TrialView[]> {
    const payload = await requestJson<{ trials: TrialView[] }>(
      `${this.baseUrl}/boards/${encodeURIComponent(endpointId)}/trials`,
    );
    return payload.trials;
  }

  async fetchLeaderboard(): Promise<LeaderboardRow[]> {
    const payload = await requestJson<{ rows: LeaderboardRow[] }>(`${this.baseUrl}/leaderboard`);
    return payload.rows;
  }

  /** Address of the CSV export, optionally scoped to one board. */
  exportCsvUrl(board?: string): string {
    if (board === undefined) {
      return `${this.baseUrl}/export.csv`;
    }
    return `${this.baseUrl}/export.csv?board=${encodeURIComponent(board)}`;
  }

  async validate(
    endpointId: string,
    trialId: number,
    body: ValidationRequest,
  ): Promise<Validation> {
    const url =
      `${this.baseUrl}/boards/${encodeURIComponent(endpointId)}` +
      `/trials/${trialId}/validate`;
    return requestJson<Validation>(url, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }
}
