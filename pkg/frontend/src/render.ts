// HTML renderers.  Pure string in, string out: given the same payloads the
// markup is byte-identical, which is what the snapshot tests pin.

import { LeaderboardRow, TaskName, TASK_ORDER, TrialView, Validation } from "./api.js";
import { BoardTile, formatSeconds, TASK_LABELS } from "./model.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function phaseBadge(phase: string): string {
  return `<span class="badge phase phase-${phase.toLowerCase()}">${phase}</span>`;
}

function validationBadge(validation: Validation | null): string {
  if (validation === null) {
    return `<span class="badge pending">unreviewed</span>`;
  }
  const verdict = validation.validated ? "validated" : "rejected";
  const cls = validation.validated ? "ok" : "no";
  return `<span class="badge ${cls}">${verdict} &middot; ${escapeHtml(validation.judge)}</span>`;
}

export function renderTile(tile: BoardTile): string {
  const cells = tile.cells
    .map(
      (cell) =>
        `<div class="cell${cell.seconds === null ? "" : " done"}">` +
        `<span class="cell-label">${escapeHtml(cell.label)}</span>` +
        `<span class="cell-value">${cell.seconds === null ? "&middot;" : cell.seconds}</span>` +
        `</div>`,
    )
    .join("");
  const stale = tile.stale
    ? `<span class="badge stale">stale ${tile.ageSeconds}s</span>`
    : "";
  return (
    `<article class="tile${tile.stale ? " is-stale" : ""}" data-endpoint="${escapeHtml(tile.endpointId)}">` +
    `<header><h3>${escapeHtml(tile.endpointId)}</h3>${phaseBadge(tile.phase)}${stale}</header>` +
    `<div class="cells">${cells}</div>` +
    `<footer>` +
    `<span>trial ${tile.trialId}</span>` +
    `<span>elapsed ${tile.elapsedText}</span>` +
    `<span>${tile.points} pts</span>` +
    `<span>${tile.accelSum} g&middot;s</span>` +
    `</footer>` +
    `</article>`
  );
}

export function renderTiles(tiles: BoardTile[]): string {
  if (tiles.length === 0) {
    return `<p class="empty">No boards have reported yet.</p>`;
  }
  return tiles.map(renderTile).join("\n");
}

export function renderLeaderboard(rows: LeaderboardRow[]): string {
  if (rows.length === 0) {
    return `<p class="empty">No trials to rank yet.</p>`;
  }
  const heads = TASK_ORDER.map((task) => `<th>${escapeHtml(TASK_LABELS[task])}</th>`).join("");
  const body = rows
    .map((row, index) => {
      const best = new Set<TaskName>(row.best);
      const cells = TASK_ORDER.map((task) => {
        const value = row.durations_s[task];
        const cls = best.has(task) ? ` class="best"` : "";
        return `<td${cls}>${value === null ? "&middot;" : value}</td>`;
      }).join("");
      return (
        `<tr>` +
        `<td>${index + 1}</td>` +
        `<td>${escapeHtml(row.label)}</td>` +
        cells +
        `<td>${row.total_s}</td>` +
        `<td>${row.points}</td>` +
        `<td>${row.completed ? "completed" : "partial"}</td>` +
        `</tr>`
      );
    })
    .join("");
  return (
    `<table class="board-table">` +
    `<thead><tr><th>#</th><th>Board</th>${heads}<th>Total s</th><th>Points</th><th>Run</th></tr></thead>` +
    `<tbody>${body}</tbody>` +
    `</table>`
  );
}

function trialCells(trial: TrialView): string {
  return TASK_ORDER.map((task) => {
    const stamp = trial.record.timestamps[task];
    return `<td>${stamp === null ? "&middot;" : formatSeconds(stamp)}</td>`;
  }).join("");
}

export function renderHistory(
  endpointId: string,
  trials: TrialView[],
  csvHref: string,
  errors: Record<number, string> = {},
): string {
  const link =
    `<p class="csv-link"><a href="${escapeHtml(csvHref)}" download>` +
    `Download results CSV</a></p>`;
  if (trials.length === 0) {
    return `<p class="empty">No trials recorded for ${escapeHtml(endpointId)} yet.</p>` + link;
  }
  const heads = TASK_ORDER.map((task) => `<th>${escapeHtml(TASK_LABELS[task])}</th>`).join("");
  const body = trials
    .map((trial) => {
      const id = trial.record.trial_id;
      const error = errors[id];
      const inline = error === undefined ? "" : `<span class="inline-error">${escapeHtml(error)}</span>`;
      return (
        `<tr data-trial="${id}">` +
        `<td>${id}</td>` +
        `<td>${phaseBadge(trial.record.phase)}</td>` +
        trialCells(trial) +
        `<td>${trial.record.points}</td>` +
        `<td>${validationBadge(trial.validation)}${inline}</td>` +
        `<td class="actions">` +
        `<button data-endpoint="${escapeHtml(endpointId)}" data-trial="${id}" data-verdict="true">validate</button>` +
        `<button data-endpoint="${escapeHtml(endpointId)}" data-trial="${id}" data-verdict="false">reject</button>` +
        `</td>` +
        `</tr>`
      );
    })
    .join("");
  return (
    `<table class="board-table">` +
    `<thead><tr><th>Trial</th><th>Phase</th>${heads}<th>Points</th><th>Review</th><th></th></tr></thead>` +
    `<tbody>${body}</tbody>` +
    `</table>` +
    link
  );
}
