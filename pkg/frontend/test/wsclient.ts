// Minimal WebSocket client over a raw TCP socket (node 20 ships no global
// WebSocket); doubles as an independent check of the bridge's framing.

import * as crypto from "node:crypto";
import * as net from "node:net";

const GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";

export class RawWebSocket {
  private sock!: net.Socket;
  private buffer = Buffer.alloc(0);
  private queue: Buffer[] = [];
  private waiters: ((msg: Buffer | null) => void)[] = [];
  private closed = false;

  static async connect(host: string, port: number, path = "/ws"): Promise<RawWebSocket> {
    const ws = new RawWebSocket();
    const key = crypto.randomBytes(16).toString("base64");
    const expect = crypto.createHash("sha1").update(key + GUID).digest("base64");
    await new Promise<void>((resolve, reject) => {
      ws.sock = net.createConnection({ host, port }, () => {
        ws.sock.write(
          `GET ${path} HTTP/1.1\r\nHost: ${host}:${port}\r\nUpgrade: websocket\r\n` +
            `Connection: Upgrade\r\nSec-WebSocket-Key: ${key}\r\nSec-WebSocket-Version: 13\r\n\r\n`,
        );
      });
      ws.sock.once("error", reject);
      let head = Buffer.alloc(0);
      const onData = (chunk: Buffer) => {
        head = Buffer.concat([head, chunk]);
        const end = head.indexOf("\r\n\r\n");
        if (end < 0) return;
        ws.sock.off("data", onData);
        const header = head.subarray(0, end).toString("latin1");
        if (!header.includes("101") || !header.includes(expect)) {
          reject(new Error(`bad handshake: ${header.split("\r\n")[0]}`));
          return;
        }
        ws.attach(head.subarray(end + 4));
        resolve();
      };
      ws.sock.on("data", onData);
    });
    return ws;
  }

  private attach(initial: Buffer): void {
    this.buffer = initial;
    this.drain();
    this.sock.on("data", (chunk) => {
      this.buffer = Buffer.concat([this.buffer, chunk]);
      this.drain();
    });
    this.sock.on("close", () => {
      this.closed = true;
      for (const w of this.waiters.splice(0)) w(null);
    });
    this.sock.on("error", () => this.sock.destroy());
  }

  private drain(): void {
    for (;;) {
      const frame = this.parseFrame();
      if (!frame) return;
      const [opcode, payload] = frame;
      if (opcode === 0x8) {
        this.sock.end();
        return;
      }
      if (opcode === 0x9) continue; // server never pings in practice
      const waiter = this.waiters.shift();
      if (waiter) waiter(payload);
      else this.queue.push(payload);
    }
  }

  private parseFrame(): [number, Buffer] | null {
    if (this.buffer.length < 2) return null;
    const opcode = this.buffer[0] & 0x0f;
    let len = this.buffer[1] & 0x7f;
    let offset = 2;
    if (len === 126) {
      if (this.buffer.length < 4) return null;
      len = this.buffer.readUInt16BE(2);
      offset = 4;
    } else if (len === 127) {
      if (this.buffer.length < 10) return null;
      len = Number(this.buffer.readBigUInt64BE(2));
      offset = 10;
    }
    if (this.buffer.length < offset + len) return null;
    const payload = this.buffer.subarray(offset, offset + len);
    this.buffer = this.buffer.subarray(offset + len);
    return [opcode, Buffer.from(payload)];
  }

  sendText(payload: Buffer | string): void {
    const body = Buffer.isBuffer(payload) ? payload : Buffer.from(payload);
    const mask = crypto.randomBytes(4);
    const masked = Buffer.from(body.map((b, i) => b ^ mask[i % 4]));
    let header: Buffer;
    if (body.length < 126) {
      header = Buffer.from([0x81, 0x80 | body.length]);
    } else {
      header = Buffer.alloc(4);
      header[0] = 0x81;
      header[1] = 0x80 | 126;
      header.writeUInt16BE(body.length, 2);
    }
    this.sock.write(Buffer.concat([header, mask, masked]));
  }

  next(timeoutMs = 5000): Promise<Buffer | null> {
    const queued = this.queue.shift();
    if (queued !== undefined) return Promise.resolve(queued);
    if (this.closed) return Promise.resolve(null);
    return new Promise((resolve) => {
      const timer = setTimeout(() => {
        const i = this.waiters.indexOf(entry);
        if (i >= 0) this.waiters.splice(i, 1);
        resolve(null);
      }, timeoutMs);
      const entry = (msg: Buffer | null) => {
        clearTimeout(timer);
        resolve(msg);
      };
      this.waiters.push(entry);
    });
  }

  close(): void {
    this.closed = true;
    this.sock.destroy();
  }
}
