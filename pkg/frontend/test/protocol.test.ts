import { describe, expect, it } from "vitest";

import {
  decodeLines,
  encodeLine,
  isEvent,
  startSessionMessage,
  validateForm,
  SessionForm,
} from "../src/protocol.js";

const form = (over: Partial<SessionForm> = {}): SessionForm => ({
  subject: "S01",
  task: "pegs",
  trial: 1,
  master_frequency_hz: 30,
  pedal_mapping: { "4": "camera" },
  modalities: ["EmTracker"],
  ...over,
});

describe("framing", () => {
  it("encodes one message per line", () => {
    expect(encodeLine({ cmd: "status" })).toBe('{"cmd":"status"}\n');
  });

  it("decodes complete lines and keeps the partial tail", () => {
    const { messages, rest } = decodeLines('{"ok":true}\n{"event":"health","streams":[]}\n{"ok"');
    expect(messages).toHaveLength(2);
    expect(rest).toBe('{"ok"');
  });

  it("separates events from replies", () => {
    const { messages } = decodeLines('{"event":"telemetry","t_ns":1,"latest":{}}\n{"ok":true}\n');
    expect(isEvent(messages[0])).toBe(true);
    expect(isEvent(messages[1])).toBe(false);
  });
});

describe("session form", () => {
  it("accepts a complete form", () => {
    expect(validateForm(form())).toHaveLength(0);
  });

  it.each([
    [form({ subject: " " }), "subject"],
    [form({ task: "" }), "task"],
    [form({ trial: 0 }), "trial"],
    [form({ trial: 1.5 }), "trial"],
    [form({ master_frequency_hz: 0 }), "master_frequency_hz"],
    [form({ pedal_mapping: { "12": "x" } }), "pedal_mapping"],
  ])("rejects invalid input (%#)", (bad, field) => {
    expect(validateForm(bad).map((i) => i.field)).toContain(field);
  });

  it("builds the start message the server expects", () => {
    const msg = startSessionMessage(form());
    expect(msg).toEqual({
      cmd: "start_session",
      meta: {
        subject: "S01",
        task: "pegs",
        trial: 1,
        master_frequency_hz: 30,
        pedal_mapping: { "4": "camera" },
      },
    });
  });
});
