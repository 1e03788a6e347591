// Entry point: polls the server, keeps the three panes current, and routes
// validation clicks.  Mutable state lives here; everything it renders goes
// through the pure helpers in model.ts and render.ts.

import {
  ApiClient,
  ApiError,
  BoardSummary,
  LeaderboardRow,
  TrialView,
} from "./api.js";
import { buildTile, ElapsedTracker, TELEMETRY_PERIOD_MS } from "./model.js";
import { renderHistory, renderLeaderboard, renderTiles } from "./render.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

// the server to watch; ?server=http://host:port overrides the default
const params = new URLSearchParams(window.location.search);
const serverBase = params.get("server") ?? `http://${window.location.hostname}:9445`;
const api = new ApiClient(serverBase);

const tilesPane = el<HTMLElement>("tiles");
const leaderboardPane = el<HTMLElement>("leaderboard");
const historyPane = el<HTMLElement>("history");
const historySelect = el<HTMLSelectElement>("history-select");
const statusNode = el<HTMLElement>("status");
const judgeInput = el<HTMLInputElement>("judge");
const noteInput = el<HTMLInputElement>("note");
const toastNode = el<HTMLElement>("toast");

el<HTMLElement>("server-url").textContent = api.baseUrl;

const tracker = new ElapsedTracker();
let lastBoards: BoardSummary[] = [];
let lastRows: LeaderboardRow[] = [];
let connected = false;
let pollGeneration = 0;

let historyEndpoint: string | null = null;
let historyTrials: TrialView[] = [];
let historyErrors: Record<number, string> = {};
const historyGeneration = new Map<string, number>();
const historyInFlight = new Map<string, Promise<void>>();

let toastTimer: number | undefined;

function toast(message: string): void {
  toastNode.textContent = message;
  toastNode.classList.add("show");
  window.clearTimeout(toastTimer);
  toastTimer = window.setTimeout(() => toastNode.classList.remove("show"), 4000);
}

function setStatus(ok: boolean): void {
  statusNode.textContent = ok ? "connected" : "server unreachable, retrying";
  statusNode.className = ok ? "status ok" : "status down";
}

function drawTiles(): void {
  const now = Date.now();
  const tiles = lastBoards.map((board) => {
    const elapsed = tracker.update(board.latest, now);
    const tile = buildTile(board, now, elapsed);
    // while the server is unreachable nothing on screen is current
    return connected ? tile : { ...tile, stale: true };
  });
  tilesPane.innerHTML = renderTiles(tiles);
}

function drawHistory(): void {
  if (historyEndpoint === null) {
    historyPane.innerHTML = `<p class="empty">Pick a board to see its trials.</p>`;
    return;
  }
  historyPane.innerHTML = renderHistory(
    historyEndpoint,
    historyTrials,
    api.exportCsvUrl(historyEndpoint),
    historyErrors,
  );
}

function syncHistoryOptions(boards: BoardSummary[]): void {
  const ids = boards.map((board) => board.endpoint_id).sort();
  const current = Array.from(historySelect.options).map((option) => option.value);
  if (ids.join("\n") !== current.join("\n")) {
    historySelect.innerHTML = ids
      .map((id) => `<option value="${id}">${id}</option>`)
      .join("");
  }
  if (historyEndpoint !== null && ids.includes(historyEndpoint)) {
    historySelect.value = historyEndpoint;
  } else if (ids.length > 0) {
    historyEndpoint = ids[0];
    historySelect.value = ids[0];
    void refreshHistory(ids[0]);
  }
}

// One trials request per endpoint at a time; answers that arrive after the
// pane moved on (newer generation, or a different board selected) are dropped.
function refreshHistory(endpointId: string): Promise<void> {
  const pending = historyInFlight.get(endpointId);
  if (pending !== undefined) {
    return pending;
  }
  const generation = (historyGeneration.get(endpointId) ?? 0) + 1;
  historyGeneration.set(endpointId, generation);
  const run = (async () => {
    try {
      const trials = await api.fetchTrials(endpointId);
      if (historyGeneration.get(endpointId) !== generation || historyEndpoint !== endpointId) {
        return;
      }
      historyTrials = trials;
      drawHistory();
    } catch {
      // next poll or click retries; the pane keeps its last good content
    }
  })().finally(() => historyInFlight.delete(endpointId));
  historyInFlight.set(endpointId, run);
  return run;
}

async function pollLive(): Promise<void> {
  const generation = ++pollGeneration;
  try {
    const [boards, rows] = await Promise.all([api.fetchBoards(), api.fetchLeaderboard()]);
    if (generation !== pollGeneration) {
      return; // a newer poll is already in flight; this answer is stale
    }
    lastBoards = boards;
    lastRows = rows;
    connected = true;
    setStatus(true);
    drawTiles();
    leaderboardPane.innerHTML = renderLeaderboard(lastRows);
    syncHistoryOptions(boards);
  } catch {
    if (generation !== pollGeneration) {
      return;
    }
    connected = false;
    setStatus(false);
    drawTiles();
  }
}

async function submitValidation(
  endpointId: string,
  trialId: number,
  verdict: boolean,
): Promise<void> {
  const judge = judgeInput.value.trim();
  if (judge === "") {
    judgeInput.focus();
    toast("Enter a judge name before validating.");
    return;
  }
  try {
    await api.validate(endpointId, trialId, {
      judge,
      validated: verdict,
      note: noteInput.value,
    });
    delete historyErrors[trialId];
  } catch (err) {
    if (err instanceof ApiError) {
      historyErrors[trialId] = err.message; // e.g. the trial is unknown
      drawHistory();
    } else {
      // the badge keeps showing whatever the server last confirmed
      toast("Validation not sent: server unreachable.");
    }
    return;
  }
  // never show our own intent; refetch so the badge is the server's state
  const pending = historyInFlight.get(endpointId);
  if (pending !== undefined) {
    await pending;
  }
  await refreshHistory(endpointId);
}

historyPane.addEventListener("click", (event) => {
  const target = event.target as HTMLElement;
  const button = target.closest("button[data-trial]");
  if (!(button instanceof HTMLButtonElement)) {
    return;
  }
  const endpointId = button.dataset.endpoint ?? "";
  const trialId = Number(button.dataset.trial);
  void submitValidation(endpointId, trialId, button.dataset.verdict === "true");
});

historySelect.addEventListener("change", () => {
  historyEndpoint = historySelect.value;
  historyTrials = [];
  historyErrors = {};
  drawHistory();
  void refreshHistory(historyEndpoint);
});

drawHistory();
setStatus(false);
void pollLive();
window.setInterval(() => void pollLive(), TELEMETRY_PERIOD_MS);
// between polls the elapsed and age readouts still tick
window.setInterval(drawTiles, 1000);
