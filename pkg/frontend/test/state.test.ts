import { describe, expect, it } from "vitest";

import { HealthEvent, StreamHealth } from "../src/protocol.js";
import { canStart, canStop, formLocked, initialState, reduce, ConsoleState } from "../src/state.js";

const stream = (over: Partial<StreamHealth> = {}): StreamHealth => ({
  stream_id: "em",
  modality: "EmTracker",
  nominal_rate_hz: 270,
  observed_rate_hz: 268.4,
  last_sample_age_ms: 4,
  mean_recording_latency_ms: 43.1,
  sample_count: 1000,
  session_samples: 500,
  drops: 0,
  bytes_written: 12345,
  stale: false,
  ...over,
});

const health = (phase: "Idle" | "Recording" | "Stopped", streams = [stream()]): HealthEvent => ({
  event: "health",
  snapshot_ts_ns: 1,
  phase,
  streams,
});

function opened(): ConsoleState {
  return reduce(initialState(), { kind: "socket-open" });
}

describe("reducer", () => {
  it("health push sets phase and rows", () => {
    const s = reduce(opened(), { kind: "message", message: health("Idle") });
    expect(s.phase).toBe("Idle");
    expect(s.streams).toHaveLength(1);
  });

  it("error replies surface verbatim and clear on the next success", () => {
    let s = reduce(opened(), {
      kind: "message",
      message: { ok: false, error: "cannot start a session while Recording" },
    });
    expect(s.lastError).toBe("cannot start a session while Recording");
    s = reduce(s, { kind: "message", message: { ok: true, phase: "Recording", streams: [] } });
    expect(s.lastError).toBeNull();
  });

  it("start reply records the session directory", () => {
    const s = reduce(opened(), {
      kind: "message",
      message: { ok: true, phase: "Recording", dir: "/data/S01_pegs_trial001" },
      request: "start_session",
    });
    expect(s.sessionDir).toBe("/data/S01_pegs_trial001");
  });

  it("stop reply keeps per-stream counts for display", () => {
    const s = reduce(opened(), {
      kind: "message",
      message: {
        ok: true,
        dir: "/data/x",
        streams: { em: { samples: 4050, rows: 16200, bytes: 1, drops: 0 } },
      },
      request: "stop_session",
    });
    expect(s.lastStop?.em.samples).toBe(4050);
    expect(s.sessionDir).toBeNull();
  });

  it("reconnect backoff grows and resets", () => {
    let s = initialState();
    s = reduce(s, { kind: "socket-closed" });
    const first = s.reconnectDelayMs;
    s = reduce(s, { kind: "socket-closed" });
    expect(s.reconnectDelayMs).toBeGreaterThan(first);
    s = reduce(s, { kind: "socket-open" });
    expect(s.reconnectDelayMs).toBe(500);
  });

  it("replaying the same messages reproduces identical state", () => {
    const messages = [
      { kind: "socket-open" as const },
      { kind: "message" as const, message: health("Recording") },
      { kind: "message" as const, message: { ok: false, error: "boom" } },
    ];
    const a = messages.reduce(reduce, initialState());
    const b = messages.reduce(reduce, initialState());
    expect(a).toEqual(b);
  });
});

describe("control enablement", () => {
  it("start only when connected, idle, and the form is valid", () => {
    const idle = reduce(opened(), { kind: "message", message: health("Idle") });
    expect(canStart(idle, true)).toBe(true);
    expect(canStart(idle, false)).toBe(false);
    const recording = reduce(opened(), { kind: "message", message: health("Recording") });
    expect(canStart(recording, true)).toBe(false);
    const closed = reduce(idle, { kind: "socket-closed" });
    expect(canStart(closed, true)).toBe(false);
  });

  it("stop only while recording", () => {
    const recording = reduce(opened(), { kind: "message", message: health("Recording") });
    expect(canStop(recording)).toBe(true);
    expect(canStop(reduce(opened(), { kind: "message", message: health("Idle") }))).toBe(false);
  });

  it("form locks while recording", () => {
    const recording = reduce(opened(), { kind: "message", message: health("Recording") });
    expect(formLocked(recording)).toBe(true);
    expect(formLocked(reduce(opened(), { kind: "message", message: health("Idle") }))).toBe(false);
  });
});
