// DOM wiring for the operator console: session form, start/stop controls,
// health table, and rolling charts fed by telemetry pushes.

import { ConsoleClient, serverUrlFromLocation } from "./client.js";
import { drawTraces, legend } from "./charts.js";
import {
  SessionForm,
  TelemetryEvent,
  isEvent,
  startSessionMessage,
  validateForm,
} from "./protocol.js";
import { ConsoleState, canStart, canStop, formLocked, initialState, reduce } from "./state.js";
import { RefreshGate, TraceStore } from "./traces.js";

const $ = <T extends HTMLElement>(id: string): T => document.getElementById(id) as T;

let state: ConsoleState = initialState();
const traces = new TraceStore(10);
const gate = new RefreshGate(10);
let client: ConsoleClient;
let clockOffsetS: number | null = null; // server time minus local time

function readForm(): SessionForm {
  const mapping: Record<string, string> = {};
  ($<HTMLInputElement>("pedal-map").value || "")
    .split(",")
    .map((part) => part.trim())
    .filter((part) => part.length > 0)
    .forEach((part) => {
      const [ch, name] = part.split(":").map((s) => s.trim());
      if (ch) mapping[ch] = name || `pedal-${ch}`;
    });
  const modalities: string[] = [];
  for (const box of document.querySelectorAll<HTMLInputElement>(".modality")) {
    if (box.checked) modalities.push(box.value);
  }
  return {
    subject: $<HTMLInputElement>("subject").value,
    task: $<HTMLInputElement>("task").value,
    trial: Number($<HTMLInputElement>("trial").value),
    master_frequency_hz: Number($<HTMLInputElement>("freq").value),
    pedal_mapping: mapping,
    modalities,
  };
}

function render(): void {
  const form = readForm();
  const issues = validateForm(form);
  $("banner").className = `banner ${state.connection}`;
  $("banner").textContent =
    state.connection === "open"
      ? `connected — ${state.phase}`
      : state.connection === "connecting"
        ? "connecting…"
        : `disconnected — retrying in ${(state.reconnectDelayMs / 1000).toFixed(1)} s`;

  ($("start") as HTMLButtonElement).disabled = !canStart(state, issues.length === 0);
  ($("stop") as HTMLButtonElement).disabled = !canStop(state);
  $("form-issues").textContent = issues.map((i) => i.message).join("; ");
  for (const input of document.querySelectorAll<HTMLInputElement>("#session-form input")) {
    input.disabled = formLocked(state);
  }

  $("error").textContent = state.lastError ?? "";
  $("session-dir").textContent = state.sessionDir ?? "";

  const rows = state.streams
    .map((s) => {
      const expected = form.modalities.length === 0 || form.modalities.includes(s.modality);
      const rate = s.observed_rate_hz.toFixed(1);
      const age = s.last_sample_age_ms === null ? "—" : `${s.last_sample_age_ms.toFixed(0)} ms`;
      const lat =
        s.mean_recording_latency_ms === null ? "—" : `${s.mean_recording_latency_ms.toFixed(1)} ms`;
      const cls = s.stale ? "stale" : "ok";
      const note = expected ? "" : " (unselected)";
      return (
        `<tr class="${cls}"><td>${s.stream_id}${note}</td><td>${s.modality}</td>` +
        `<td>${rate} / ${s.nominal_rate_hz}</td><td>${age}</td><td>${lat}</td>` +
        `<td>${s.session_samples}</td><td>${s.drops}</td><td>${s.stale ? "stale" : "live"}</td></tr>`
      );
    })
    .join("");
  $("health-body").innerHTML =
    rows || `<tr><td colspan="8" class="stale">no streams registered</td></tr>`;

  if (state.lastStop) {
    const counts = Object.entries(state.lastStop)
      .map(([sid, c]) => `${sid}: ${c.samples} samples, ${c.drops} drops`)
      .join("; ");
    $("stop-summary").textContent = `last session — ${counts}`;
  } else {
    $("stop-summary").textContent = "";
  }
}

function renderCharts(): void {
  const nowS = clockOffsetS === null ? Date.now() / 1000 : Date.now() / 1000 + clockOffsetS;
  const pedalSeries = [...traces.pedals.entries()]
    .sort((a, b) => a[0] - b[0])
    .map(([ch, buffer]) => ({ label: `ch${ch}`, buffer }));
  drawTraces($("pedal-canvas") as HTMLCanvasElement, pedalSeries, nowS, 10, [0, 5.2]);
  $("pedal-legend").innerHTML = legend(pedalSeries.map((s) => s.label));

  const sensorSeries = [...traces.sensors.entries()]
    .sort((a, b) => a[0] - b[0])
    .flatMap(([sid, axes]) => [{ label: `s${sid}·x`, buffer: axes[0] }, { label: `s${sid}·z`, buffer: axes[2] }]);
  drawTraces($("em-canvas") as HTMLCanvasElement, sensorSeries, nowS);
  $("em-legend").innerHTML = legend(sensorSeries.map((s) => s.label));
}

function connect(): void {
  const url = serverUrlFromLocation(window.location);
  $("server-url").textContent = url;
  client = new ConsoleClient(url, {
    onOpen() {
      state = reduce(state, { kind: "socket-open" });
      void client.request({ cmd: "subscribe_health" });
      void client.request({ cmd: "subscribe_telemetry" });
      void client.request({ cmd: "status" });
      render();
    },
    onClose() {
      state = reduce(state, { kind: "socket-closed" });
      render();
      setTimeout(connect, state.reconnectDelayMs);
    },
    onMessage(msg, request) {
      if (isEvent(msg) && msg.event === "telemetry") {
        const ev = msg as TelemetryEvent;
        clockOffsetS = ev.t_ns / 1e9 - Date.now() / 1000;
        traces.ingest(ev);
        if (gate.due(performance.now())) renderCharts();
        return;
      }
      state = reduce(state, { kind: "message", message: msg, request });
      render();
    },
  });
  client.connect();
}

window.addEventListener("load", () => {
  $("start").addEventListener("click", () => {
    void client.request(startSessionMessage(readForm()));
  });
  $("stop").addEventListener("click", () => {
    void client.request({ cmd: "stop_session" });
  });
  for (const input of document.querySelectorAll("#session-form input")) {
    input.addEventListener("input", render);
  }
  connect();
  render();
  setInterval(renderCharts, 250); // keep the time axis moving between pushes
});
