// Control-channel message types and the newline-delimited JSON framing.
// Every WebSocket text frame carries exactly one line, byte-identical to
// the TCP control protocol.

export interface StreamHealth {
  stream_id: string;
  modality: string;
  nominal_rate_hz: number;
  observed_rate_hz: number;
  last_sample_age_ms: number | null;
  mean_recording_latency_ms: number | null;
  sample_count: number;
  session_samples: number;
  drops: number;
  bytes_written: number;
  stale: boolean;
}

export interface HealthEvent {
  event: "health";
  snapshot_ts_ns: number;
  phase: Phase;
  streams: StreamHealth[];
  session?: { dir: string; bytes_per_minute: number };
}

export interface TelemetryEvent {
  event: "telemetry";
  t_ns: number;
  latest: Record<string, unknown>;
}

export interface Reply {
  ok: boolean;
  error?: string;
  [key: string]: unknown;
}

export type Phase = "Idle" | "Recording" | "Stopped";

export type ServerMessage = (HealthEvent | TelemetryEvent | Reply) & { event?: string };

export interface SessionForm {
  subject: string;
  task: string;
  trial: number;
  master_frequency_hz: number;
  pedal_mapping: Record<string, string>;
  modalities: string[];
}

export function encodeLine(msg: object): string {
  return JSON.stringify(msg) + "\n";
}

export function decodeLines(buffer: string): { messages: ServerMessage[]; rest: string } {
  const parts = buffer.split("\n");
  const rest = parts.pop() ?? "";
  const messages: ServerMessage[] = [];
  for (const part of parts) {
    if (part.trim().length === 0) continue;
    messages.push(JSON.parse(part) as ServerMessage);
  }
  return { messages, rest };
}

export function isEvent(msg: ServerMessage): msg is HealthEvent | TelemetryEvent {
  return typeof msg.event === "string";
}

export function startSessionMessage(form: SessionForm): { cmd: string; meta: object } {
  return {
    cmd: "start_session",
    meta: {
      subject: form.subject,
      task: form.task,
      trial: form.trial,
      master_frequency_hz: form.master_frequency_hz,
      pedal_mapping: form.pedal_mapping,
    },
  };
}

export interface FormIssue {
  field: string;
  message: string;
}

export function validateForm(form: SessionForm): FormIssue[] {
  const issues: FormIssue[] = [];
  if (!form.subject.trim()) issues.push({ field: "subject", message: "subject is required" });
  if (!form.task.trim()) issues.push({ field: "task", message: "task is required" });
  if (!Number.isInteger(form.trial) || form.trial < 1) {
    issues.push({ field: "trial", message: "trial must be a positive integer" });
  }
  if (!(form.master_frequency_hz > 0)) {
    issues.push({ field: "master_frequency_hz", message: "master frequency must be positive" });
  }
  for (const ch of Object.keys(form.pedal_mapping)) {
    const n = Number(ch);
    if (!Number.isInteger(n) || n < 1 || n > 9) {
      issues.push({ field: "pedal_mapping", message: `pedal channel ${ch} outside 1..9` });
    }
  }
  return issues;
}
