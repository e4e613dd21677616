/** HTTP/SSE client for the live engine.
 *
 * The stream loop owns the connection lifecycle: fetch /session/status to
 * learn the session identity, subscribe to /session/events resuming from
 * the last applied sequence, and on any failure retry with exponential
 * backoff (1 s, 2 s, 4 s, capped at 30 s). Control requests are serialized
 * so config echoes apply in request order.
 */

import {
  applyControlEcho,
  applyEvent,
  applySnapshotAck,
  initialState,
  isRuntimeConfig,
  resetForSession,
  validateControls,
  withConnection,
  withError,
} from "./state.js";
import { SseParser } from "./sse.js";
import type {
  ConsoleState,
  EngineEvent,
  RuntimeConfig,
  SnapshotAck,
} from "./types.js";

export const MAX_SNAPSHOT_BYTES = 10 * 1024 * 1024;

export interface EngineClientOptions {
  fetchFn?: typeof fetch;
  onChange?: (state: ConsoleState) => void;
  /** Injected in tests to skip real waits. */
  sleep?: (ms: number) => Promise<void>;
  backoffBaseMs?: number;
  backoffCapMs?: number;
  logger?: (message: string) => void;
}

function runtimeOf(source: RuntimeConfig): RuntimeConfig {
  return {
    mode: source.mode,
    fraction: source.fraction,
    tick_interval: source.tick_interval,
    image_refresh: source.image_refresh,
    alpha: source.alpha,
  };
}

const realSleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

export class EngineClient {
  readonly baseUrl: string;
  state: ConsoleState = initialState();

  private readonly fetchFn: typeof fetch;
  private readonly onChange?: (state: ConsoleState) => void;
  private readonly sleep: (ms: number) => Promise<void>;
  private readonly backoffBaseMs: number;
  private readonly backoffCapMs: number;
  private readonly log: (message: string) => void;
  private abort: AbortController | null = null;
  private running = false;
  private loop: Promise<void> | null = null;
  private controlChain: Promise<unknown> = Promise.resolve();

  constructor(baseUrl: string, options: EngineClientOptions = {}) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.fetchFn = options.fetchFn ?? ((...args) => fetch(...args));
    this.onChange = options.onChange;
    this.sleep = options.sleep ?? realSleep;
    this.backoffBaseMs = options.backoffBaseMs ?? 1000;
    this.backoffCapMs = options.backoffCapMs ?? 30000;
    this.log = options.logger ?? ((message) => console.warn(message));
  }

  private setState(next: ConsoleState): void {
    if (next === this.state) return;
    this.state = next;
    this.onChange?.(next);
  }

  connect(): void {
    if (this.running) return;
    this.running = true;
    this.loop = this.streamLoop();
  }

  async close(): Promise<void> {
    this.running = false;
    this.abort?.abort();
    await this.loop?.catch(() => undefined);
    this.setState(withConnection(this.state, "disconnected"));
  }

  // -- event stream ---------------------------------------------------------

  private async streamLoop(): Promise<void> {
    let failures = 0;
    while (this.running) {
      this.setState(withConnection(this.state, "connecting"));
      try {
        await this.syncSession();
        const controller = new AbortController();
        this.abort = controller;
        const response = await this.fetchFn(
          `${this.baseUrl}/session/events?since=${this.state.lastSequence}`,
          { signal: controller.signal, headers: { accept: "text/event-stream" } },
        );
        if (!response.ok || response.body === null) {
          throw new Error(`event stream rejected: ${response.status}`);
        }
        this.setState(withConnection(this.state, "live"));
        failures = 0;
        await this.consume(response.body);
      } catch (err) {
        if (this.running) this.log(`stream attempt failed: ${String(err)}`);
      }
      if (!this.running) break;
      this.setState(withConnection(this.state, "connecting"));
      const delay = Math.min(this.backoffBaseMs * 2 ** failures, this.backoffCapMs);
      failures += 1;
      await this.sleep(delay);
    }
    this.setState(withConnection(this.state, "disconnected"));
  }

  /** A reconnect may land on a brand-new session; resuming the old
   * sequence counter there would show stale data, so session identity is
   * checked before every subscribe. */
  private async syncSession(): Promise<void> {
    const response = await this.fetchFn(`${this.baseUrl}/session/status`);
    if (!response.ok) throw new Error(`status fetch failed: ${response.status}`);
    const status = (await response.json()) as Record<string, unknown>;
    if (typeof status.session_id === "string" && status.session_id !== this.state.sessionId) {
      this.setState(resetForSession(this.state, status.session_id));
    }
    if (isRuntimeConfig(status)) {
      this.setState(applyControlEcho(this.state, runtimeOf(status)));
    }
  }

  private async consume(body: ReadableStream<Uint8Array>): Promise<void> {
    const parser = new SseParser();
    const decoder = new TextDecoder();
    const reader = body.getReader();
    for (;;) {
      const { done, value } = await reader.read();
      if (done) break;
      for (const data of parser.feed(decoder.decode(value, { stream: true }))) {
        this.dispatch(data);
      }
    }
  }

  private dispatch(data: string): void {
    let event: EngineEvent;
    try {
      const parsed = JSON.parse(data) as EngineEvent;
      if (typeof parsed.sequence !== "number" || typeof parsed.kind !== "string") {
        throw new Error("missing sequence or kind");
      }
      event = parsed;
    } catch (err) {
      this.log(`skipping malformed event line (${String(err)}): ${data.slice(0, 120)}`);
      return;
    }
    this.setState(applyEvent(this.state, event));
  }

  // -- controls ---------------------------------------------------------------

  async sendControl(updates: Partial<RuntimeConfig>): Promise<RuntimeConfig> {
    const problem = validateControls(updates);
    if (problem !== null) {
      this.setState(withError(this.state, problem));
      throw new Error(problem);
    }
    const task = this.controlChain.then(() => this.postControl(updates));
    this.controlChain = task.catch(() => undefined);
    return task;
  }

  private async postControl(updates: Partial<RuntimeConfig>): Promise<RuntimeConfig> {
    this.setState({ ...this.state, pendingControls: this.state.pendingControls + 1 });
    try {
      const response = await this.fetchFn(`${this.baseUrl}/session/params`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(updates),
      });
      const payload = (await response.json()) as Record<string, unknown>;
      if (!response.ok) {
        const message =
          typeof payload.error === "string" ? payload.error : `params rejected: ${response.status}`;
        this.setState(withError(this.state, message));
        await this.refreshControls();
        throw new Error(message);
      }
      if (!isRuntimeConfig(payload)) throw new Error("malformed params echo");
      const echoed = runtimeOf(payload);
      this.setState({ ...applyControlEcho(this.state, echoed), lastError: null });
      return echoed;
    } finally {
      this.setState({ ...this.state, pendingControls: this.state.pendingControls - 1 });
    }
  }

  /** Controls display reverts to whatever the engine reports. */
  private async refreshControls(): Promise<void> {
    try {
      const response = await this.fetchFn(`${this.baseUrl}/session/status`);
      if (!response.ok) return;
      const status = (await response.json()) as Record<string, unknown>;
      if (isRuntimeConfig(status)) {
        this.setState(applyControlEcho(this.state, runtimeOf(status)));
      }
    } catch {
      // the stream loop resyncs on its next attempt
    }
  }

  // -- snapshots ---------------------------------------------------------------

  async pushSnapshot(image: Uint8Array | ArrayBuffer | Blob): Promise<SnapshotAck> {
    if (this.state.connection !== "live") {
      throw new Error("not connected");
    }
    const size = image instanceof Blob ? image.size : image.byteLength;
    if (size > MAX_SNAPSHOT_BYTES) {
      const message = `snapshot is ${size} bytes, limit ${MAX_SNAPSHOT_BYTES}`;
      this.setState(withError(this.state, message));
      throw new Error(message);
    }
    let body: BodyInit;
    if (image instanceof Blob || image instanceof ArrayBuffer) {
      body = image;
    } else {
      // copy into an owned buffer; a view over a SharedArrayBuffer or a
      // larger allocation is not a valid fetch body
      const copy = new Uint8Array(image.byteLength);
      copy.set(image);
      body = copy;
    }
    const response = await this.fetchFn(`${this.baseUrl}/session/image`, {
      method: "POST",
      headers: { "content-type": "application/octet-stream" },
      body,
    });
    const payload = (await response.json()) as Record<string, unknown>;
    if (!response.ok) {
      const message =
        typeof payload.error === "string" ? payload.error : `snapshot rejected: ${response.status}`;
      this.setState(withError(this.state, message));
      throw new Error(message);
    }
    const ack: SnapshotAck = {
      changed: Boolean(payload.changed),
      canvas_hash: String(payload.canvas_hash ?? ""),
    };
    this.setState({ ...applySnapshotAck(this.state, ack), lastError: null });
    return ack;
  }
}
