// Rolling trace buffers for the live charts: trailing window of samples,
// appended from telemetry pushes and drawn at a bounded refresh rate.

import { TelemetryEvent } from "./protocol.js";

export interface TracePoint {
  t: number; // seconds
  value: number;
}

export class TraceBuffer {
  private points: TracePoint[] = [];

  constructor(public readonly windowS: number = 10) {}

  push(t: number, value: number): void {
    const last = this.points[this.points.length - 1];
    if (last !== undefined && t < last.t) return; // stale push
    this.points.push({ t, value });
    const cutoff = t - this.windowS;
    let firstKept = 0;
    while (firstKept < this.points.length - 1 && this.points[firstKept].t < cutoff) firstKept++;
    if (firstKept > 0) this.points = this.points.slice(firstKept);
  }

  window(now?: number): TracePoint[] {
    if (now === undefined) return [...this.points];
    const cutoff = now - this.windowS;
    return this.points.filter((p) => p.t >= cutoff);
  }

  get latest(): TracePoint | undefined {
    return this.points[this.points.length - 1];
  }

  get size(): number {
    return this.points.length;
  }
}

interface PedalReading {
  channel: number;
  voltage_v: number;
}

interface TrackerPose {
  sensor_id: number;
  pos_cm: number[];
}

export class TraceStore {
  readonly pedals = new Map<number, TraceBuffer>();
  readonly sensors = new Map<number, [TraceBuffer, TraceBuffer, TraceBuffer]>();
  private updates = 0;

  constructor(private windowS: number = 10) {}

  get updateCount(): number {
    return this.updates;
  }

  ingest(event: TelemetryEvent): void {
    const t = event.t_ns / 1e9;
    const latest = event.latest ?? {};
    const pss = latest["pss"] as { readings?: PedalReading[] } | undefined;
    for (const reading of pss?.readings ?? []) {
      let buf = this.pedals.get(reading.channel);
      if (!buf) {
        buf = new TraceBuffer(this.windowS);
        this.pedals.set(reading.channel, buf);
      }
      buf.push(t, reading.voltage_v);
    }
    const em = latest["em"] as { poses?: TrackerPose[] } | undefined;
    for (const pose of em?.poses ?? []) {
      let axes = this.sensors.get(pose.sensor_id);
      if (!axes) {
        axes = [new TraceBuffer(this.windowS), new TraceBuffer(this.windowS), new TraceBuffer(this.windowS)];
        this.sensors.set(pose.sensor_id, axes);
      }
      axes[0].push(t, pose.pos_cm[0]);
      axes[1].push(t, pose.pos_cm[1]);
      axes[2].push(t, pose.pos_cm[2]);
    }
    this.updates++;
  }
}

// Refresh gate: ticks at most `maxHz` times per second no matter how fast
// pushes arrive; the renderer reads whole buffers on each tick.
export class RefreshGate {
  private lastTick = -Infinity;

  constructor(public readonly maxHz: number = 10) {}

  due(nowMs: number): boolean {
    if (nowMs - this.lastTick >= 1000 / this.maxHz) {
      this.lastTick = nowMs;
      return true;
    }
    return false;
  }
}
