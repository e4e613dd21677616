/** Browser binding: renders ConsoleState into the DOM and wires controls.
 *
 * Everything shown is copied from engine events or control echoes; nothing
 * is computed locally beyond formatting.
 */

import { EngineClient } from "./client.js";
import type { ConsoleState, MatchEntry, RuntimeConfig } from "./types.js";
import { MODES } from "./state.js";

const MATCHES_SHOWN = 12;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

function fmt(value: number, digits = 3): string {
  return value.toFixed(digits);
}

function matchRow(entry: MatchEntry): string {
  return (
    `<tr><td>${entry.sequence}</td><td>${entry.trackId}</td>` +
    `<td>${entry.chunkIndex}</td><td>${fmt(entry.startTime, 2)}s</td>` +
    `<td>${fmt(entry.stage1Score, 4)}</td><td>${fmt(entry.stage2Distance, 4)}</td>` +
    `<td>${fmt(entry.timestamp, 2)}</td></tr>`
  );
}

function render(state: ConsoleState): void {
  const badge = el<HTMLSpanElement>("connection");
  badge.textContent = state.connection;
  badge.className = `badge ${state.connection}`;

  el<HTMLSpanElement>("session-id").textContent = state.sessionId ?? "(none)";

  const gauge = el<HTMLDivElement>("gauge-fill");
  const reading = state.congruity;
  if (reading !== null) {
    const pct = Math.max(0, Math.min(1, reading.smoothed)) * 100;
    gauge.style.width = `${pct}%`;
    el<HTMLSpanElement>("gauge-smoothed").textContent = fmt(reading.smoothed);
    el<HTMLSpanElement>("gauge-raw").textContent = fmt(reading.raw);
  } else {
    gauge.style.width = "0%";
    el<HTMLSpanElement>("gauge-smoothed").textContent = "-";
    el<HTMLSpanElement>("gauge-raw").textContent = "-";
  }

  // Controls mirror the engine echo unless the user is mid-edit.
  const controls = state.controls;
  if (controls !== null && document.activeElement?.tagName !== "INPUT") {
    el<HTMLSelectElement>("mode").value = controls.mode;
    el<HTMLInputElement>("fraction").value = String(controls.fraction);
    el<HTMLInputElement>("alpha").value = String(controls.alpha);
    el<HTMLInputElement>("tick-interval").value = String(controls.tick_interval);
  }

  const rows = state.matches.slice(-MATCHES_SHOWN).reverse().map(matchRow).join("");
  el<HTMLTableSectionElement>("matches").innerHTML = rows;

  el<HTMLDivElement>("error").textContent = state.lastError ?? "";
  el<HTMLUListElement>("activity").innerHTML = state.activity
    .slice(-8)
    .reverse()
    .map((line) => `<li>${line}</li>`)
    .join("");

  const snap = state.lastSnapshot;
  el<HTMLSpanElement>("snapshot-status").textContent =
    snap === null
      ? ""
      : snap.changed
        ? `canvas updated (${snap.canvas_hash.slice(0, 12)})`
        : "no change";
}

export function mount(baseUrl: string): EngineClient {
  const client = new EngineClient(baseUrl, { onChange: render });

  el<HTMLButtonElement>("apply").addEventListener("click", () => {
    const updates: Partial<RuntimeConfig> = {
      mode: el<HTMLSelectElement>("mode").value as RuntimeConfig["mode"],
      fraction: Number(el<HTMLInputElement>("fraction").value),
      alpha: Number(el<HTMLInputElement>("alpha").value),
      tick_interval: Number(el<HTMLInputElement>("tick-interval").value),
    };
    client.sendControl(updates).catch(() => undefined); // surfaced via lastError
  });

  el<HTMLInputElement>("snapshot").addEventListener("change", async (evt) => {
    const input = evt.target as HTMLInputElement;
    const file = input.files?.[0];
    if (file === undefined) return;
    try {
      await client.pushSnapshot(file);
    } catch {
      // surfaced via lastError; push while disconnected is inert
    } finally {
      input.value = "";
    }
  });

  const modeSelect = el<HTMLSelectElement>("mode");
  modeSelect.innerHTML = MODES.map((m) => `<option value="${m}">${m}</option>`).join("");

  client.connect();
  render(client.state);
  return client;
}

mount(window.location.origin);
