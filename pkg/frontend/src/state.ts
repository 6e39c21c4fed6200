// Console state: a pure reducer over server messages and socket events.
// The console holds no truth of its own — every displayed fact originates
// from a server message, so reconnecting and replaying status restores an
// identical view.

import { HealthEvent, Phase, Reply, ServerMessage, StreamHealth, isEvent } from "./protocol.js";

export interface StopCounts {
  [streamId: string]: { samples: number; rows: number; bytes: number; drops: number };
}

export interface ConsoleState {
  connection: "connecting" | "open" | "closed";
  phase: Phase | "unknown";
  streams: StreamHealth[];
  healthAgeMs: number | null;
  sessionDir: string | null;
  bytesPerMinute: number | null;
  lastError: string | null;
  lastStop: StopCounts | null;
  reconnectDelayMs: number;
}

export function initialState(): ConsoleState {
  return {
    connection: "connecting",
    phase: "unknown",
    streams: [],
    healthAgeMs: null,
    sessionDir: null,
    bytesPerMinute: null,
    lastError: null,
    lastStop: null,
    reconnectDelayMs: 500,
  };
}

export type ConsoleEvent =
  | { kind: "socket-open" }
  | { kind: "socket-closed" }
  | { kind: "message"; message: ServerMessage; request?: string };

export function reduce(state: ConsoleState, event: ConsoleEvent): ConsoleState {
  switch (event.kind) {
    case "socket-open":
      return { ...state, connection: "open", reconnectDelayMs: 500, lastError: null };
    case "socket-closed":
      return {
        ...state,
        connection: "closed",
        reconnectDelayMs: Math.min(state.reconnectDelayMs * 2, 15000),
      };
    case "message":
      return applyMessage(state, event.message, event.request);
  }
}

function applyMessage(state: ConsoleState, msg: ServerMessage, request?: string): ConsoleState {
  if (isEvent(msg) && msg.event === "health") {
    const health = msg as HealthEvent;
    return {
      ...state,
      phase: health.phase,
      streams: health.streams,
      healthAgeMs: 0,
      sessionDir: health.session?.dir ?? (health.phase === "Recording" ? state.sessionDir : null),
      bytesPerMinute: health.session?.bytes_per_minute ?? null,
    };
  }
  if (isEvent(msg)) {
    return state; // telemetry handled by the trace buffers
  }
  const reply = msg as Reply;
  if (!reply.ok) {
    return { ...state, lastError: String(reply.error ?? "unknown error") };
  }
  const next = { ...state, lastError: null };
  if (typeof reply.phase === "string") {
    next.phase = reply.phase as Phase;
    if (Array.isArray(reply.streams)) next.streams = reply.streams as StreamHealth[];
  }
  if (request === "start_session" && typeof reply.dir === "string") {
    next.sessionDir = reply.dir;
    next.lastStop = null;
  }
  if (request === "stop_session" && reply.streams && !Array.isArray(reply.streams)) {
    next.lastStop = reply.streams as StopCounts;
    next.sessionDir = null;
  }
  return next;
}

// Control enablement: no control is offered in a phase where the server
// would reject it.
export function canStart(state: ConsoleState, formValid: boolean): boolean {
  return state.connection === "open" && state.phase === "Idle" && formValid;
}

export function canStop(state: ConsoleState): boolean {
  return state.connection === "open" && state.phase === "Recording";
}

export function formLocked(state: ConsoleState): boolean {
  return state.phase === "Recording";
}
