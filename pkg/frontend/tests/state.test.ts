import { describe, expect, it } from "vitest";

import {
  MATCH_HISTORY_LIMIT,
  applyControlEcho,
  applyEvent,
  initialState,
  isRuntimeConfig,
  resetForSession,
  validateControls,
  withConnection,
  withError,
} from "../src/state.js";
import type { ConsoleState, EngineEvent, RuntimeConfig } from "../src/types.js";

const CONFIG: RuntimeConfig = {
  mode: "scenario2_congruity",
  fraction: 0.01,
  tick_interval: 0.5,
  image_refresh: 2.0,
  alpha: 0.2,
};

function congruity(sequence: number, raw: number): EngineEvent {
  return {
    sequence,
    kind: "congruity",
    payload: { raw, smoothed: raw / 2, alpha: 0.2, timestamp: sequence * 0.5 },
  };
}

function match(sequence: number, trackId: string): EngineEvent {
  return {
    sequence,
    kind: "match",
    payload: {
      track_id: trackId,
      chunk_index: 1,
      start_time: 2.0,
      stage1_score: 0.5,
      stage2_distance: 1.25,
      timestamp: sequence * 0.5,
    },
  };
}

function sessionStart(sequence: number, sessionId: string): EngineEvent {
  return {
    sequence,
    kind: "status",
    payload: { text: "session started", session_id: sessionId, mode: CONFIG.mode, warmed_up: false },
  };
}

describe("applyEvent", () => {
  it("applies congruity readings and advances the sequence cursor", () => {
    let state = resetForSession(initialState(), "s1");
    state = applyEvent(state, congruity(1, 0.8));
    expect(state.lastSequence).toBe(1);
    expect(state.congruity).toEqual({ raw: 0.8, smoothed: 0.4, alpha: 0.2, timestamp: 0.5 });
  });

  it("returns the same object for a duplicate sequence", () => {
    let state = resetForSession(initialState(), "s1");
    state = applyEvent(state, congruity(3, 0.8));
    const replayed = applyEvent(state, congruity(3, 0.1));
    expect(replayed).toBe(state);
    expect(replayed.congruity?.raw).toBe(0.8);
  });

  it("ignores events at or below the cursor, keeps applying newer ones", () => {
    let state = resetForSession(initialState(), "s1");
    state = applyEvent(state, congruity(5, 0.5));
    state = applyEvent(state, congruity(2, 0.9));
    expect(state.congruity?.raw).toBe(0.5);
    state = applyEvent(state, congruity(6, 0.7));
    expect(state.congruity?.raw).toBe(0.7);
  });

  it("caps match history at the ring limit, oldest dropped", () => {
    let state = resetForSession(initialState(), "s1");
    for (let i = 1; i <= MATCH_HISTORY_LIMIT + 10; i += 1) {
      state = applyEvent(state, match(i, `trk${i}`));
    }
    expect(state.matches).toHaveLength(MATCH_HISTORY_LIMIT);
    expect(state.matches[0]?.sequence).toBe(11);
    expect(state.matches.at(-1)?.sequence).toBe(MATCH_HISTORY_LIMIT + 10);
    const sequences = state.matches.map((m) => m.sequence);
    expect(sequences).toEqual([...sequences].sort((a, b) => a - b));
  });

  it("keeps the optional painting id when present", () => {
    let state = resetForSession(initialState(), "s1");
    const event = match(1, "trk0");
    event.payload.painting_id = "live";
    state = applyEvent(state, event);
    expect(state.matches[0]?.paintingId).toBe("live");
  });

  it("updates controls from a params-applied status event", () => {
    let state = resetForSession(initialState(), "s1");
    state = applyEvent(state, {
      sequence: 1,
      kind: "status",
      payload: { text: "params applied", config: { ...CONFIG, fraction: 0.05 } },
    });
    expect(state.controls?.fraction).toBe(0.05);
    expect(state.activity).toContain("params applied");
  });

  it("drops all prior-session data when a new session starts", () => {
    let state = withConnection(resetForSession(initialState(), "s1"), "live");
    state = applyEvent(state, congruity(1, 0.8));
    state = applyEvent(state, match(2, "trk0"));
    state = applyControlEcho(state, CONFIG);

    state = applyEvent(state, sessionStart(1, "s2"));
    expect(state.sessionId).toBe("s2");
    expect(state.matches).toEqual([]);
    expect(state.congruity).toBeNull();
    expect(state.lastSequence).toBe(1);
    expect(state.connection).toBe("live");
    expect(state.controls).toEqual(CONFIG); // engine echo refreshes these
  });

  it("treats a replayed session-started event for the current session as a duplicate", () => {
    let state = resetForSession(initialState(), "s1");
    state = applyEvent(state, sessionStart(1, "s1"));
    state = applyEvent(state, congruity(2, 0.4));
    const replayed = applyEvent(state, sessionStart(1, "s1"));
    expect(replayed).toBe(state);
  });
});

describe("control validation", () => {
  it.each([
    [{ fraction: 0 }, "fraction"],
    [{ fraction: 1.5 }, "fraction"],
    [{ fraction: -0.1 }, "fraction"],
    [{ tick_interval: 0 }, "tick_interval"],
    [{ image_refresh: -1 }, "image_refresh"],
    [{ alpha: 0 }, "alpha"],
    [{ alpha: 1.2 }, "alpha"],
    [{ mode: "scenario3_reverb" as RuntimeConfig["mode"] }, "mode"],
  ])("rejects %j", (updates, field) => {
    const problem = validateControls(updates);
    expect(problem).not.toBeNull();
    expect(problem).toContain(field);
  });

  it.each([
    [{ fraction: 0.005 }],
    [{ fraction: 1 }],
    [{ tick_interval: 0.25 }],
    [{ image_refresh: 0 }],
    [{ alpha: 1 }],
    [{ mode: "scenario1_crossfeed" as RuntimeConfig["mode"] }],
    [{}],
  ])("accepts %j", (updates) => {
    expect(validateControls(updates)).toBeNull();
  });
});

describe("helpers", () => {
  it("recognizes a full runtime config and rejects partial ones", () => {
    expect(isRuntimeConfig(CONFIG)).toBe(true);
    expect(isRuntimeConfig({ ...CONFIG, alpha: undefined })).toBe(false);
    expect(isRuntimeConfig(null)).toBe(false);
    expect(isRuntimeConfig("scenario2_congruity")).toBe(false);
  });

  it("control echo reverts values without clearing an inline error", () => {
    let state: ConsoleState = withError(initialState(), "fraction must be in (0, 1]");
    state = applyControlEcho(state, CONFIG);
    expect(state.controls).toEqual(CONFIG);
    expect(state.lastError).toBe("fraction must be in (0, 1]");
  });

  it("withConnection is a no-op object-wise when unchanged", () => {
    const state = initialState();
    expect(withConnection(state, "disconnected")).toBe(state);
    expect(withConnection(state, "live").connection).toBe("live");
  });
});
