/** Pure state transitions. The stream loop and the DOM layer both go
 * through these, so every rule (sequence dedup, session reset, the match
 * ring) is testable without a browser or a socket. */

import type {
  Connection,
  ConsoleState,
  CongruityReading,
  EngineEvent,
  MatchEntry,
  RuntimeConfig,
  SnapshotAck,
} from "./types.js";

export const MATCH_HISTORY_LIMIT = 50;
export const ACTIVITY_LIMIT = 100;

export const MODES = ["scenario1_crossfeed", "scenario2_congruity"];

export function initialState(): ConsoleState {
  return {
    connection: "disconnected",
    sessionId: null,
    lastSequence: 0,
    congruity: null,
    matches: [],
    controls: null,
    pendingControls: 0,
    lastError: null,
    activity: [],
    lastSnapshot: null,
  };
}

export function withConnection(state: ConsoleState, connection: Connection): ConsoleState {
  return state.connection === connection ? state : { ...state, connection };
}

/** Forget everything tied to the previous session; connection survives. */
export function resetForSession(state: ConsoleState, sessionId: string): ConsoleState {
  return {
    ...initialState(),
    connection: state.connection,
    sessionId,
    controls: state.controls,
  };
}

function asNumber(value: unknown): number {
  return typeof value === "number" ? value : NaN;
}

function congruityFrom(payload: Record<string, unknown>): CongruityReading {
  return {
    raw: asNumber(payload.raw),
    smoothed: asNumber(payload.smoothed),
    alpha: asNumber(payload.alpha),
    timestamp: asNumber(payload.timestamp),
  };
}

function matchFrom(sequence: number, payload: Record<string, unknown>): MatchEntry {
  const entry: MatchEntry = {
    sequence,
    trackId: String(payload.track_id ?? ""),
    chunkIndex: asNumber(payload.chunk_index),
    startTime: asNumber(payload.start_time),
    stage1Score: asNumber(payload.stage1_score),
    stage2Distance: asNumber(payload.stage2_distance),
    timestamp: asNumber(payload.timestamp),
  };
  if (typeof payload.painting_id === "string") entry.paintingId = payload.painting_id;
  return entry;
}

export function isRuntimeConfig(value: unknown): value is RuntimeConfig {
  if (typeof value !== "object" || value === null) return false;
  const cfg = value as Record<string, unknown>;
  return (
    typeof cfg.mode === "string" &&
    typeof cfg.fraction === "number" &&
    typeof cfg.tick_interval === "number" &&
    typeof cfg.image_refresh === "number" &&
    typeof cfg.alpha === "number"
  );
}

/** Engine-reported config is authoritative for the controls display.
 * Deliberately leaves lastError alone: after a rejected update the controls
 * revert while the error message stays visible. */
export function applyControlEcho(state: ConsoleState, config: RuntimeConfig): ConsoleState {
  return { ...state, controls: config };
}

export function applySnapshotAck(state: ConsoleState, ack: SnapshotAck): ConsoleState {
  return { ...state, lastSnapshot: ack };
}

export function withError(state: ConsoleState, message: string): ConsoleState {
  return { ...state, lastError: message };
}

/** One event in. Duplicates (sequence already applied) leave the state
 * object untouched, which is what makes reconnect replays harmless. */
export function applyEvent(state: ConsoleState, event: EngineEvent): ConsoleState {
  if (
    event.kind === "status" &&
    event.payload.text === "session started" &&
    typeof event.payload.session_id === "string" &&
    event.payload.session_id !== state.sessionId
  ) {
    state = resetForSession(state, event.payload.session_id);
  } else if (event.sequence <= state.lastSequence) {
    return state;
  }

  const next: ConsoleState = { ...state, lastSequence: event.sequence };
  switch (event.kind) {
    case "congruity":
      next.congruity = congruityFrom(event.payload);
      break;
    case "match": {
      const matches = [...state.matches, matchFrom(event.sequence, event.payload)];
      next.matches = matches.slice(Math.max(0, matches.length - MATCH_HISTORY_LIMIT));
      break;
    }
    case "status": {
      const text = typeof event.payload.text === "string" ? event.payload.text : "";
      const activity = [...state.activity, text];
      next.activity = activity.slice(Math.max(0, activity.length - ACTIVITY_LIMIT));
      if (text === "params applied" && isRuntimeConfig(event.payload.config)) {
        next.controls = event.payload.config;
      }
      break;
    }
  }
  return next;
}

/** Mirrors the engine's runtime-config invariants so obviously bad input
 * never leaves the client. Returns an error message, or null when valid. */
export function validateControls(updates: Partial<RuntimeConfig>): string | null {
  if (updates.mode !== undefined && !MODES.includes(updates.mode)) {
    return `mode must be one of ${MODES.join(", ")}`;
  }
  if (updates.fraction !== undefined && !(updates.fraction > 0 && updates.fraction <= 1)) {
    return `fraction must be in (0, 1], got ${updates.fraction}`;
  }
  if (updates.tick_interval !== undefined && !(updates.tick_interval > 0)) {
    return `tick_interval must be > 0, got ${updates.tick_interval}`;
  }
  if (updates.image_refresh !== undefined && !(updates.image_refresh >= 0)) {
    return `image_refresh must be >= 0, got ${updates.image_refresh}`;
  }
  if (updates.alpha !== undefined && !(updates.alpha > 0 && updates.alpha <= 1)) {
    return `alpha must be in (0, 1], got ${updates.alpha}`;
  }
  return null;
}
