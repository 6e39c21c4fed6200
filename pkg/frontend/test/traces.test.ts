import { describe, expect, it } from "vitest";

import { TelemetryEvent } from "../src/protocol.js";
import { RefreshGate, TraceBuffer, TraceStore } from "../src/traces.js";

describe("TraceBuffer", () => {
  it("keeps only the trailing window", () => {
    const buf = new TraceBuffer(10);
    for (let t = 0; t <= 25; t++) buf.push(t, t * 0.1);
    const pts = buf.window();
    expect(pts[0].t).toBeGreaterThanOrEqual(15);
    expect(pts[pts.length - 1].t).toBe(25);
  });

  it("ignores out-of-order pushes", () => {
    const buf = new TraceBuffer(10);
    buf.push(5, 1);
    buf.push(4, 2);
    expect(buf.size).toBe(1);
    expect(buf.latest?.value).toBe(1);
  });

  it("windows relative to an explicit now", () => {
    const buf = new TraceBuffer(10);
    buf.push(0, 1);
    buf.push(9, 2);
    expect(buf.window(20)).toHaveLength(0);
    expect(buf.window(12)).toHaveLength(1);
  });
});

const telemetry = (tS: number, voltage: number, x = 1.0): TelemetryEvent => ({
  event: "telemetry",
  t_ns: tS * 1e9,
  latest: {
    pss: { readings: [{ channel: 4, voltage_v: voltage, state: 0 }] },
    em: { poses: [{ sensor_id: 1, pos_cm: [x, 2, 3], ori_deg: [0, 0, 0] }] },
  },
});

describe("TraceStore", () => {
  it("routes pedal and sensor values into per-channel buffers", () => {
    const store = new TraceStore(10);
    store.ingest(telemetry(1.0, 0.4));
    store.ingest(telemetry(1.1, 4.5, 2.0));
    expect(store.pedals.get(4)?.size).toBe(2);
    expect(store.pedals.get(4)?.latest?.value).toBeCloseTo(4.5);
    expect(store.sensors.get(1)?.[0].latest?.value).toBeCloseTo(2.0);
    expect(store.updateCount).toBe(2);
  });

  it("a press is visible in the buffer as soon as its push is ingested", () => {
    const store = new TraceStore(10);
    for (let k = 0; k < 10; k++) store.ingest(telemetry(k * 0.1, 0.4));
    store.ingest(telemetry(1.0, 4.5));
    const values = store.pedals.get(4)!.window().map((p) => p.value);
    expect(Math.max(...values)).toBeGreaterThan(2.0);
  });
});

describe("RefreshGate", () => {
  it("caps redraws at the configured rate", () => {
    const gate = new RefreshGate(10);
    let draws = 0;
    for (let ms = 0; ms <= 1000; ms += 10) {
      if (gate.due(ms)) draws++; // pushes arriving at 100 Hz
    }
    expect(draws).toBeLessThanOrEqual(11);
    expect(draws).toBeGreaterThanOrEqual(10);
  });

  it("a push after a quiet spell draws immediately", () => {
    const gate = new RefreshGate(10);
    expect(gate.due(0)).toBe(true);
    expect(gate.due(50)).toBe(false);
    expect(gate.due(5000)).toBe(true);
  });
});
