import { describe, expect, it } from "vitest";

import { SseParser } from "../src/sse.js";

describe("SseParser", () => {
  it("yields one payload per blank-line-terminated data block", () => {
    const parser = new SseParser();
    expect(parser.feed('data: {"a":1}\n\ndata: {"b":2}\n\n')).toEqual(['{"a":1}', '{"b":2}']);
  });

  it("buffers events split across arbitrary chunk boundaries", () => {
    const parser = new SseParser();
    const whole = 'data: {"sequence":1,"kind":"status"}\n\n';
    const collected: string[] = [];
    for (const ch of whole) collected.push(...parser.feed(ch));
    expect(collected).toEqual(['{"sequence":1,"kind":"status"}']);
  });

  it("ignores comment keepalives and tolerates \\r\\n line endings", () => {
    const parser = new SseParser();
    const out = parser.feed(': keepalive\r\n\r\ndata: {"x":3}\r\n\r\n');
    expect(out).toEqual(['{"x":3}']);
  });

  it("joins multi-line data fields with newlines", () => {
    const parser = new SseParser();
    expect(parser.feed("data: first\ndata: second\n\n")).toEqual(["first\nsecond"]);
  });

  it("strips at most one leading space after the colon", () => {
    const parser = new SseParser();
    expect(parser.feed("data:  padded\n\n")).toEqual([" padded"]);
    expect(parser.feed("data:tight\n\n")).toEqual(["tight"]);
  });
});
