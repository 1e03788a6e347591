import { describe, expect, it } from "vitest";

import { BoardSummary, LeaderboardRow, TrialView, WireRecord } from "../src/api.js";
import { buildTile } from "../src/model.js";
import {
  escapeHtml,
  renderHistory,
  renderLeaderboard,
  renderTiles,
} from "../src/render.js";

// Fixed mocked payloads; every test in here must be deterministic.
const NOW = 1_623_322_920_000;

function record(overrides: Partial<WireRecord> = {}): WireRecord {
  return {
    accel_sum: 4.201,
    endpoint_id: "alpha",
    phase: "COMPLETED",
    points: 6,
    sent_epoch_ms: NOW - 4_000,
    seq: 23,
    timestamps: {
      find_board: 78_650,
      key_switch: 84_440,
      plug: 89_540,
      batt1: 108_680,
      batt2: 108_830,
      stop: 110_730,
    },
    trial_id: 1,
    v: 1,
    ...overrides,
  };
}

function summary(rec: WireRecord, recvEpochMs: number): BoardSummary {
  return {
    endpoint_id: rec.endpoint_id,
    last_seq: rec.seq,
    trial_count: 1,
    recv_epoch_ms: recvEpochMs,
    latest: rec,
  };
}

const MOCK_BOARDS: BoardSummary[] = [
  summary(record(), NOW - 4_000),
  summary(
    record({
      endpoint_id: "beta",
      phase: "RUNNING",
      points: 2,
      accel_sum: 0.905,
      timestamps: {
        find_board: 5_100,
        key_switch: 12_840,
        plug: null,
        batt1: null,
        batt2: null,
        stop: null,
      },
    }),
    NOW - 1_000,
  ),
  summary(
    record({
      endpoint_id: "gamma",
      phase: "EXPIRED",
      points: 1,
      accel_sum: 33.333,
      timestamps: {
        find_board: 90_000,
        key_switch: null,
        plug: null,
        batt1: null,
        batt2: null,
        stop: null,
      },
    }),
    NOW - 27_000,
  ),
];

const MOCK_ROWS: LeaderboardRow[] = [
  {
    label: "alpha",
    trial_id: 1,
    completed: true,
    points: 6,
    durations_s: {
      find_board: "78.65",
      key_switch: "5.79",
      plug: "5.10",
      batt1: "19.14",
      batt2: "0.15",
      stop: "1.90",
    },
    total_s: "110.73",
    best: ["batt2", "key_switch", "plug", "stop"],
  },
  {
    label: "beta",
    trial_id: 1,
    completed: false,
    points: 2,
    durations_s: {
      find_board: "5.10",
      key_switch: "7.74",
      plug: null,
      batt1: null,
      batt2: null,
      stop: null,
    },
    total_s: "12.84",
    best: ["find_board"],
  },
];

const MOCK_TRIALS: TrialView[] = [
  { record: record(), validation: { validated: true, judge: "pauline", note: "clean" } },
  {
    record: record({ trial_id: 2, phase: "EXPIRED", points: 3 }),
    validation: { validated: false, judge: "marco", note: "" },
  },
  { record: record({ trial_id: 3 }), validation: null },
];

function tiles() {
  return MOCK_BOARDS.map((board) => buildTile(board, NOW, null));
}

describe("renderTiles", () => {
  it("is snapshot-stable for a fixed set of boards", () => {
    const html = renderTiles(tiles());
    expect(html).toBe(renderTiles(tiles()));
    expect(html).toMatchSnapshot();
  });

  it("badges phases and staleness", () => {
    const html = renderTiles(tiles());
    expect(html).toContain(`class="badge phase phase-completed"`);
    expect(html).toContain(`class="badge phase phase-running"`);
    expect(html).toContain(`class="badge stale">stale 27s</span>`);
    expect(html).not.toContain(`stale 4s`);
  });

  it("shows an empty state when no board has reported", () => {
    expect(renderTiles([])).toContain("No boards have reported yet");
  });

  it("escapes hostile endpoint ids", () => {
    const evil = summary(record({ endpoint_id: `<img src=x>` }), NOW);
    const html = renderTiles([buildTile(evil, NOW, null)]);
    expect(html).not.toContain("<img");
    expect(html).toContain("&lt;img src=x&gt;");
  });
});

describe("renderLeaderboard", () => {
  it("is snapshot-stable for fixed rows", () => {
    const html = renderLeaderboard(MOCK_ROWS);
    expect(html).toBe(renderLeaderboard(MOCK_ROWS));
    expect(html).toMatchSnapshot();
  });

  it("ranks in payload order and marks column-best cells", () => {
    const html = renderLeaderboard(MOCK_ROWS);
    expect(html.indexOf("alpha")).toBeLessThan(html.indexOf("beta"));
    expect(html.match(/class="best"/g)).toHaveLength(5);
    expect(html).toContain("<td>110.73</td>");
    expect(html).toContain("completed");
    expect(html).toContain("partial");
  });

  it("shows an empty state without rows", () => {
    expect(renderLeaderboard([])).toContain("No trials to rank yet");
  });
});

describe("renderHistory", () => {
  const csv = "http://127.0.0.1:9445/export.csv?board=alpha";

  it("is snapshot-stable for fixed trials", () => {
    const html = renderHistory("alpha", MOCK_TRIALS, csv);
    expect(html).toBe(renderHistory("alpha", MOCK_TRIALS, csv));
    expect(html).toMatchSnapshot();
  });

  it("renders one badge per review state", () => {
    const html = renderHistory("alpha", MOCK_TRIALS, csv);
    expect(html).toContain("validated &middot; pauline");
    expect(html).toContain("rejected &middot; marco");
    expect(html).toContain("unreviewed");
  });

  it("wires the validate buttons with trial coordinates", () => {
    const html = renderHistory("alpha", MOCK_TRIALS, csv);
    expect(html).toContain(`data-endpoint="alpha" data-trial="3" data-verdict="true"`);
    expect(html).toContain(`data-endpoint="alpha" data-trial="3" data-verdict="false"`);
  });

  it("surfaces inline errors next to the review badge", () => {
    const html = renderHistory("alpha", MOCK_TRIALS, csv, { 3: "no trial 3 for alpha" });
    expect(html).toContain(`<span class="inline-error">no trial 3 for alpha</span>`);
  });

  it("keeps the export link even when the board is empty", () => {
    const html = renderHistory("alpha", [], csv);
    expect(html).toContain("No trials recorded for alpha yet");
    expect(html).toContain(`href="${csv}"`);
  });
});

describe("escapeHtml", () => {
  it("neutralises markup metacharacters", () => {
    expect(escapeHtml(`<a href="x">&`)).toBe("&lt;a href=&quot;x&quot;&gt;&amp;");
  });
});
