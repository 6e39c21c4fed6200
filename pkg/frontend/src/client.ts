// WebSocket wrapper speaking the newline-delimited JSON control protocol.
// Request replies arrive in request order on the shared connection, with
// subscription pushes interleaved; a FIFO of pending commands attributes
// each non-event message to its request.

import { ServerMessage, decodeLines, encodeLine, isEvent } from "./protocol.js";

export interface ClientHooks {
  onOpen(): void;
  onClose(): void;
  onMessage(msg: ServerMessage, request?: string): void;
}

export class ConsoleClient {
  private ws: WebSocket | null = null;
  private buffer = "";
  private pending: { cmd: string; resolve: (msg: ServerMessage) => void }[] = [];
  private closedByUser = false;

  constructor(private url: string, private hooks: ClientHooks) {}

  connect(): void {
    this.closedByUser = false;
    this.ws = new WebSocket(this.url);
    this.ws.onopen = () => this.hooks.onOpen();
    this.ws.onclose = () => {
      this.failPending("connection closed");
      if (!this.closedByUser) this.hooks.onClose();
    };
    this.ws.onerror = () => {
      /* close follows */
    };
    this.ws.onmessage = (ev) => this.feed(String(ev.data));
  }

  close(): void {
    this.closedByUser = true;
    this.ws?.close();
  }

  get open(): boolean {
    return this.ws !== null && this.ws.readyState === WebSocket.OPEN;
  }

  private feed(data: string): void {
    const { messages, rest } = decodeLines(this.buffer + (data.endsWith("\n") ? data : data + "\n"));
    this.buffer = rest;
    for (const msg of messages) {
      if (isEvent(msg)) {
        this.hooks.onMessage(msg);
        continue;
      }
      const pending = this.pending.shift();
      pending?.resolve(msg);
      this.hooks.onMessage(msg, pending?.cmd);
    }
  }

  private failPending(reason: string): void {
    for (const p of this.pending.splice(0)) {
      p.resolve({ ok: false, error: reason });
    }
  }

  request(msg: { cmd: string } & object): Promise<ServerMessage> {
    return new Promise((resolve) => {
      if (!this.open || this.ws === null) {
        resolve({ ok: false, error: "not connected" });
        return;
      }
      this.pending.push({ cmd: msg.cmd, resolve });
      this.ws.send(encodeLine(msg));
    });
  }
}

export function serverUrlFromLocation(loc: { search: string; host: string; protocol: string }): string {
  const params = new URLSearchParams(loc.search);
  const override = params.get("server");
  if (override) {
    return override.startsWith("ws") ? override : `ws://${override}/ws`;
  }
  const scheme = loc.protocol === "https:" ? "wss" : "ws";
  return `${scheme}://${loc.host}/ws`;
}
