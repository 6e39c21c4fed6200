// Minimal canvas sparklines; no charting dependency needed for rolling
// voltage and position traces.

import { TraceBuffer } from "./traces.js";

const COLORS = ["#6cf", "#fa5", "#8f8", "#f7d", "#cc6", "#9af", "#f66", "#6fc", "#ccc"];

export function drawTraces(
  canvas: HTMLCanvasElement,
  series: { label: string; buffer: TraceBuffer }[],
  nowS: number,
  windowS = 10,
  fixedRange?: [number, number],
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  ctx.strokeStyle = "#333";
  ctx.strokeRect(0.5, 0.5, width - 1, height - 1);
  if (series.every((s) => s.buffer.size === 0)) {
    ctx.fillStyle = "#666";
    ctx.font = "12px sans-serif";
    ctx.fillText("no data", 8, height / 2);
    return;
  }

  let lo = Infinity;
  let hi = -Infinity;
  const windows = series.map((s) => s.buffer.window(nowS));
  if (fixedRange) {
    [lo, hi] = fixedRange;
  } else {
    for (const pts of windows) {
      for (const p of pts) {
        lo = Math.min(lo, p.value);
        hi = Math.max(hi, p.value);
      }
    }
    if (!isFinite(lo)) return;
    if (hi - lo < 1e-9) {
      lo -= 1;
      hi += 1;
    }
  }

  const x = (t: number) => width - 1 - ((nowS - t) / windowS) * (width - 2);
  const y = (v: number) => height - 2 - ((v - lo) / (hi - lo)) * (height - 4);

  windows.forEach((pts, i) => {
    if (pts.length === 0) return;
    ctx.strokeStyle = COLORS[i % COLORS.length];
    ctx.beginPath();
    pts.forEach((p, j) => {
      if (j === 0) ctx.moveTo(x(p.t), y(p.value));
      else ctx.lineTo(x(p.t), y(p.value));
    });
    ctx.stroke();
  });

  ctx.fillStyle = "#888";
  ctx.font = "10px sans-serif";
  ctx.fillText(hi.toFixed(2), 4, 10);
  ctx.fillText(lo.toFixed(2), 4, height - 4);
}

export function legend(labels: string[]): string {
  return labels
    .map((l, i) => `<span class="key" style="color:${COLORS[i % COLORS.length]}">&#9644; ${l}</span>`)
    .join(" ");
}
