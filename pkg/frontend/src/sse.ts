/** Incremental parser for text/event-stream bytes.
 *
 * Hand-rolled instead of EventSource so the reconnect policy (backoff,
 * ?since= resume) stays in our hands and the same code runs under node
 * for the stub-server tests. Only the subset the engine emits is handled:
 * `data:` lines, comment lines, and blank-line dispatch.
 */

export class SseParser {
  private buffer = "";
  private dataLines: string[] = [];

  /** Feed a decoded chunk; returns the data payloads completed by it. */
  feed(chunk: string): string[] {
    this.buffer += chunk;
    const out: string[] = [];
    for (;;) {
      const nl = this.buffer.indexOf("\n");
      if (nl < 0) break;
      let line = this.buffer.slice(0, nl);
      this.buffer = this.buffer.slice(nl + 1);
      if (line.endsWith("\r")) line = line.slice(0, -1);
      if (line === "") {
        if (this.dataLines.length > 0) {
          out.push(this.dataLines.join("\n"));
          this.dataLines = [];
        }
      } else if (line.startsWith(":")) {
        // keepalive comment
      } else if (line.startsWith("data:")) {
        this.dataLines.push(line.slice(5).replace(/^ /, ""));
      }
      // other SSE fields (event:, id:, retry:) are not used by the engine
    }
    return out;
  }
}
