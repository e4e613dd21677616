/** Wire and state types for the console. Everything displayed originates
 * from an engine event or an engine echo; the console computes nothing. */

export type EventKind = "match" | "congruity" | "status";

export interface EngineEvent {
  sequence: number;
  kind: EventKind;
  payload: Record<string, unknown>;
}

/** Engine-side runtime knobs, echoed verbatim by POST /session/params. */
export interface RuntimeConfig {
  mode: string;
  fraction: number;
  tick_interval: number;
  image_refresh: number;
  alpha: number;
}

export interface CongruityReading {
  raw: number;
  smoothed: number;
  alpha: number;
  timestamp: number;
}

export interface MatchEntry {
  sequence: number;
  trackId: string;
  chunkIndex: number;
  startTime: number;
  stage1Score: number;
  stage2Distance: number;
  timestamp: number;
  paintingId?: string;
}

export interface SnapshotAck {
  changed: boolean;
  canvas_hash: string;
}

export type Connection = "disconnected" | "connecting" | "live";

export interface ConsoleState {
  connection: Connection;
  sessionId: string | null;
  /** Highest event sequence applied for the current session. */
  lastSequence: number;
  congruity: CongruityReading | null;
  /** Ring of the most recent matches, ascending sequence, capped. */
  matches: MatchEntry[];
  /** Engine-echoed runtime config; the only source for control displays. */
  controls: RuntimeConfig | null;
  pendingControls: number;
  lastError: string | null;
  /** Recent status texts, oldest first, bounded. */
  activity: string[];
  lastSnapshot: SnapshotAck | null;
}
