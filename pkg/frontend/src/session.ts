/**
 * Connection + state machine between the operator console and the teleop
 * service. One SessionView owns one logical connection:
 *
 * * reconnects with jittered exponential backoff when the socket drops,
 * * queues every inbound message and applies the whole queue once per
 *   render frame (drainInbound), so rendering never races the socket,
 * * matches command replies to senders in FIFO order (the server replies
 *   to each command in arrival order on the issuing socket),
 * * rate-limits outgoing target commands to the server tick, coalescing
 *   drag updates so only the freshest pose is sent.
 *
 * The view renders only what the server reports: decoded twin frames and
 * JSON events. Decode failures are counted and surfaced, never fatal.
 */

import { decode, DecodeError, JointStateMsg } from "./wire";
import { ArmDescription, validateArm } from "./kinematics";

export type SessionStatus = "idle" | "connecting" | "open" | "reconnecting" | "closed";

export interface HelloMsg {
  type: "hello";
  format: number;
  arm: ArmDescription;
  profile: string;
  channel: string;
  tick_hz: number;
  publish_hz: number;
  wire: { version: number; frame_size: number };
}

export interface Reply {
  type: string;
  ok: boolean;
  [key: string]: unknown;
}

export interface ServerEvent {
  type: string;
  [key: string]: unknown;
}

export interface TargetPose {
  position: [number, number, number];
  pitch?: number;
  roll?: number;
}

export interface TargetOutcome {
  accepted: boolean;
  reply: Reply;
}

export interface Sample {
  t: number; // ms timestamp from the session clock
  value: number;
}

/** Minimal socket surface shared by browser WebSocket and ws. */
export interface SocketLike {
  binaryType: string;
  onopen: ((ev?: unknown) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  send(data: string): void;
  close(): void;
}

export interface SessionOptions {
  socketFactory?: (url: string) => SocketLike;
  now?: () => number; // ms clock, injectable for tests
  schedule?: (fn: () => void, ms: number) => unknown;
  cancel?: (handle: unknown) => void;
  reconnectBaseMs?: number;
  reconnectCapMs?: number;
  commandTimeoutMs?: number;
  seriesLimit?: number;
}

interface PendingCommand {
  resolve: (reply: Reply) => void;
  reject: (err: Error) => void;
  timer: unknown;
  settled: boolean;
}

const DEFAULT_RECONNECT_BASE_MS = 250;
const DEFAULT_RECONNECT_CAP_MS = 5000;
const DEFAULT_COMMAND_TIMEOUT_MS = 5000;
const DEFAULT_SERIES_LIMIT = 240;

function defaultSocketFactory(url: string): SocketLike {
  const ctor = (globalThis as { WebSocket?: new (url: string) => unknown }).WebSocket;
  if (!ctor) {
    throw new Error("no WebSocket implementation available; pass socketFactory");
  }
  return new ctor(url) as unknown as SocketLike;
}

export class SessionView {
  status: SessionStatus = "idle";
  hello: HelloMsg | null = null;
  arm: ArmDescription | null = null;
  latest: JointStateMsg | null = null;
  lastSeq = -1n;
  framesReceived = 0;
  framesApplied = 0;
  staleFrames = 0;
  decodeErrors = 0;
  lastDecodeError = "";
  reconnectAttempts = 0;
  lastTarget: TargetOutcome | null = null;
  events: ServerEvent[] = [];

  /** Wall-clock arrival times (ms) of applied frames, for rate estimates. */
  arrivalTimes: number[] = [];
  /** Inter-arrival interval series (ms), for the cadence sparkline. */
  intervalSeries: Sample[] = [];
  /** Max |qdot| per frame (rad/s), for the motion sparkline. */
  speedSeries: Sample[] = [];

  onHello: ((hello: HelloMsg) => void) | null = null;
  onEvent: ((ev: ServerEvent) => void) | null = null;
  onStatus: ((status: SessionStatus, detail: string) => void) | null = null;

  private url = "";
  private socket: SocketLike | null = null;
  private inbox: unknown[] = [];
  private pending: PendingCommand[] = [];
  private closedByUser = false;
  private reconnectTimer: unknown = null;
  private lastFrameAt = -1;

  private pendingTarget: TargetPose | null = null;
  private targetFlushTimer: unknown = null;
  private lastTargetSentAt = -Infinity;

  private readonly socketFactory: (url: string) => SocketLike;
  private readonly now: () => number;
  private readonly schedule: (fn: () => void, ms: number) => unknown;
  private readonly cancel: (handle: unknown) => void;
  private readonly reconnectBaseMs: number;
  private readonly reconnectCapMs: number;
  private readonly commandTimeoutMs: number;
  private readonly seriesLimit: number;

  constructor(options: SessionOptions = {}) {
    this.socketFactory = options.socketFactory ?? defaultSocketFactory;
    this.now = options.now ?? (() => Date.now());
    this.schedule = options.schedule ?? ((fn, ms) => setTimeout(fn, ms));
    this.cancel = options.cancel ?? ((handle) => clearTimeout(handle as never));
    this.reconnectBaseMs = options.reconnectBaseMs ?? DEFAULT_RECONNECT_BASE_MS;
    this.reconnectCapMs = options.reconnectCapMs ?? DEFAULT_RECONNECT_CAP_MS;
    this.commandTimeoutMs = options.commandTimeoutMs ?? DEFAULT_COMMAND_TIMEOUT_MS;
    this.seriesLimit = options.seriesLimit ?? DEFAULT_SERIES_LIMIT;
  }

  // -- connection --------------------------------------------------------

  connect(url: string): void {
    this.url = url;
    this.closedByUser = false;
    this.clearReconnect();
    this.openSocket();
  }

  close(): void {
    this.closedByUser = true;
    this.clearReconnect();
    this.flushTimerStop();
    if (this.socket) {
      const sock = this.socket;
      this.socket = null;
      sock.onopen = sock.onclose = sock.onerror = sock.onmessage = null;
      try {
        sock.close();
      } catch {
        // already closed
      }
    }
    this.rejectPending(new Error("session closed"));
    this.setStatus("closed", "closed by operator");
  }

  private openSocket(): void {
    this.setStatus(this.reconnectAttempts > 0 ? "reconnecting" : "connecting", this.url);
    let sock: SocketLike;
    try {
      sock = this.socketFactory(this.url);
    } catch (err) {
      this.scheduleReconnect(String(err));
      return;
    }
    sock.binaryType = "arraybuffer";
    this.socket = sock;
    sock.onopen = () => {
      this.reconnectAttempts = 0;
      this.lastSeq = -1n; // a fresh connection restarts the frame counter
      this.setStatus("open", this.url);
    };
    sock.onmessage = (ev) => {
      this.inbox.push(ev.data);
    };
    sock.onerror = () => {
      // the close handler owns recovery; nothing to do here
    };
    sock.onclose = () => {
      if (this.socket === sock) {
        this.socket = null;
      }
      this.rejectPending(new Error("connection lost"));
      if (!this.closedByUser) {
        this.scheduleReconnect("connection lost");
      }
    };
  }

  private scheduleReconnect(reason: string): void {
    if (this.closedByUser || this.reconnectTimer !== null) {
      return;
    }
    const backoff = Math.min(
      this.reconnectCapMs,
      this.reconnectBaseMs * 2 ** this.reconnectAttempts,
    );
    const delay = backoff * (0.75 + 0.5 * Math.random()); // +/-25% jitter
    this.reconnectAttempts += 1;
    this.setStatus("reconnecting", `${reason}; retry in ${Math.round(delay)} ms`);
    this.reconnectTimer = this.schedule(() => {
      this.reconnectTimer = null;
      if (!this.closedByUser) {
        this.openSocket();
      }
    }, delay);
  }

  private clearReconnect(): void {
    if (this.reconnectTimer !== null) {
      this.cancel(this.reconnectTimer);
      this.reconnectTimer = null;
    }
  }

  private setStatus(status: SessionStatus, detail: string): void {
    this.status = status;
    if (this.onStatus) {
      this.onStatus(status, detail);
    }
  }

  get isOpen(): boolean {
    return this.status === "open" && this.socket !== null;
  }

  // -- inbound -----------------------------------------------------------

  /** Apply every queued inbound message. Call once per render frame. */
  drainInbound(): number {
    const batch = this.inbox;
    if (batch.length === 0) {
      return 0;
    }
    this.inbox = [];
    for (const raw of batch) {
      if (typeof raw === "string") {
        this.handleText(raw);
      } else {
        this.handleBinary(raw);
      }
    }
    return batch.length;
  }

  private handleBinary(raw: unknown): void {
    let bytes: Uint8Array;
    if (raw instanceof ArrayBuffer) {
      bytes = new Uint8Array(raw);
    } else if (ArrayBuffer.isView(raw)) {
      const view = raw as ArrayBufferView;
      bytes = new Uint8Array(view.buffer, view.byteOffset, view.byteLength);
    } else {
      this.noteDecodeError("unsupported binary payload");
      return;
    }
    this.framesReceived += 1;
    let msg: JointStateMsg;
    try {
      msg = decode(bytes);
    } catch (err) {
      if (err instanceof DecodeError) {
        this.noteDecodeError(err.message);
        return;
      }
      throw err;
    }
    if (msg.seq <= this.lastSeq) {
      this.staleFrames += 1;
      return;
    }
    this.lastSeq = msg.seq;
    this.latest = msg;
    this.framesApplied += 1;
    const t = this.now();
    if (this.lastFrameAt >= 0) {
      this.pushSample(this.intervalSeries, t, t - this.lastFrameAt);
    }
    this.lastFrameAt = t;
    this.arrivalTimes.push(t);
    if (this.arrivalTimes.length > this.seriesLimit) {
      this.arrivalTimes.splice(0, this.arrivalTimes.length - this.seriesLimit);
    }
    let speed = 0;
    for (let j = 0; j < msg.qdot.length; j++) {
      speed = Math.max(speed, Math.abs(msg.qdot[j]));
    }
    this.pushSample(this.speedSeries, t, speed);
  }

  private handleText(raw: string): void {
    let msg: Record<string, unknown>;
    try {
      const parsed = JSON.parse(raw);
      if (typeof parsed !== "object" || parsed === null || Array.isArray(parsed)) {
        throw new Error("expected a JSON object");
      }
      msg = parsed as Record<string, unknown>;
    } catch (err) {
      this.noteDecodeError(`bad JSON from server: ${err}`);
      return;
    }
    if (msg.type === "hello") {
      this.acceptHello(msg);
      return;
    }
    if ("ok" in msg && this.pending.length > 0) {
      const entry = this.pending.shift() as PendingCommand;
      this.cancel(entry.timer);
      if (!entry.settled) {
        entry.settled = true;
        entry.resolve(msg as unknown as Reply);
      }
      return;
    }
    this.noteEvent(msg as ServerEvent);
  }

  private acceptHello(msg: Record<string, unknown>): void {
    try {
      const hello = msg as unknown as HelloMsg;
      validateArm(hello.arm);
      this.hello = hello;
      this.arm = hello.arm;
      if (this.onHello) {
        this.onHello(hello);
      }
    } catch (err) {
      this.noteDecodeError(`bad hello: ${err}`);
    }
  }

  private noteEvent(ev: ServerEvent): void {
    this.events.push(ev);
    if (this.events.length > this.seriesLimit) {
      this.events.splice(0, this.events.length - this.seriesLimit);
    }
    if (this.onEvent) {
      this.onEvent(ev);
    }
  }

  private noteDecodeError(message: string): void {
    this.decodeErrors += 1;
    this.lastDecodeError = message;
  }

  private pushSample(series: Sample[], t: number, value: number): void {
    series.push({ t, value });
    if (series.length > this.seriesLimit) {
      series.splice(0, series.length - this.seriesLimit);
    }
  }

  /** Applied-frame rate over the trailing window, in Hz. */
  frameRateHz(windowMs = 2000): number {
    const cutoff = this.now() - windowMs;
    let first = -1;
    for (let i = 0; i < this.arrivalTimes.length; i++) {
      if (this.arrivalTimes[i] >= cutoff) {
        first = i;
        break;
      }
    }
    if (first < 0 || this.arrivalTimes.length - first < 2) {
      return 0;
    }
    const times = this.arrivalTimes.slice(first);
    const span = times[times.length - 1] - times[0];
    return span > 0 ? ((times.length - 1) * 1000) / span : 0;
  }

  // -- outbound ----------------------------------------------------------

  /** Send one command and resolve with the server's reply (FIFO order). */
  sendCommand(cmd: Record<string, unknown>): Promise<Reply> {
    if (!this.isOpen || !this.socket) {
      return Promise.reject(new Error("not connected"));
    }
    const socket = this.socket;
    return new Promise<Reply>((resolve, reject) => {
      const entry: PendingCommand = { resolve, reject, timer: null, settled: false };
      entry.timer = this.schedule(() => {
        // keep the entry queued so a late reply cannot shift onto the next
        // command; just report the timeout
        if (!entry.settled) {
          entry.settled = true;
          reject(new Error(`no reply to ${String(cmd.cmd)} within ${this.commandTimeoutMs} ms`));
        }
      }, this.commandTimeoutMs);
      this.pending.push(entry);
      try {
        socket.send(JSON.stringify(cmd));
      } catch (err) {
        this.pending.splice(this.pending.indexOf(entry), 1);
        this.cancel(entry.timer);
        entry.settled = true;
        reject(err instanceof Error ? err : new Error(String(err)));
      }
    });
  }

  private rejectPending(err: Error): void {
    const entries = this.pending;
    this.pending = [];
    for (const entry of entries) {
      this.cancel(entry.timer);
      if (!entry.settled) {
        entry.settled = true;
        entry.reject(err);
      }
    }
  }

  /** Minimum spacing between target commands: one server tick. */
  private targetIntervalMs(): number {
    const hz = this.hello?.tick_hz ?? 100;
    return 1000 / hz;
  }

  /**
   * Send a target pose now (subject to the tick rate limit) and resolve
   * with the server's accept/reject decision.
   */
  async sendTarget(pose: TargetPose): Promise<TargetOutcome> {
    const reply = await this.sendCommand({
      cmd: "target",
      position: pose.position,
      pitch: pose.pitch ?? -Math.PI / 2,
      roll: pose.roll ?? 0,
    });
    const outcome: TargetOutcome = { accepted: reply.ok === true, reply };
    this.lastTarget = outcome;
    return outcome;
  }

  /**
   * Coalescing entry point for drag interactions: remembers the freshest
   * pose and ships it as soon as the rate limit allows. Replies land in
   * ``lastTarget``.
   */
  dragTarget(pose: TargetPose): void {
    this.pendingTarget = pose;
    this.flushTarget();
  }

  private flushTarget(): void {
    if (this.pendingTarget === null || !this.isOpen) {
      return;
    }
    const wait = this.lastTargetSentAt + this.targetIntervalMs() - this.now();
    if (wait > 0) {
      if (this.targetFlushTimer === null) {
        this.targetFlushTimer = this.schedule(() => {
          this.targetFlushTimer = null;
          this.flushTarget();
        }, wait);
      }
      return;
    }
    const pose = this.pendingTarget;
    this.pendingTarget = null;
    this.lastTargetSentAt = this.now();
    this.sendTarget(pose).catch(() => {
      // drop the stale drag update; the status line already shows the error
    });
  }

  private flushTimerStop(): void {
    if (this.targetFlushTimer !== null) {
      this.cancel(this.targetFlushTimer);
      this.targetFlushTimer = null;
    }
    this.pendingTarget = null;
  }

  /** Wait for the next broadcast event of the given type. */
  waitForEvent(type: string, timeoutMs = 10000): Promise<ServerEvent> {
    return new Promise((resolve, reject) => {
      const prev = this.onEvent;
      const timer = this.schedule(() => {
        this.onEvent = prev;
        reject(new Error(`no ${type} event within ${timeoutMs} ms`));
      }, timeoutMs);
      this.onEvent = (ev) => {
        if (prev) {
          prev(ev);
        }
        if (ev.type === type) {
          this.cancel(timer);
          this.onEvent = prev;
          resolve(ev);
        }
      };
    });
  }
}
