/**
 * Operator console state machine.
 *
 * All state shown to the operator comes from server snapshots and command
 * responses — there is no client-side simulation or dead-reckoning. The
 * telemetry socket is the primary state feed; commands go over HTTP.
 */

import {
  GrassnavApi,
  Snapshot,
  SnapshotMission,
  TeachStopResult,
  TelemetryEvent,
  TelemetryFrame,
  Transport,
} from "./api.js";

export interface WebSocketLike {
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: (() => void) | null;
  close(): void;
}

export type WebSocketFactory = (path: string) => WebSocketLike;

const EVENT_LOG_LIMIT = 200;

export class OperatorConsole {
  readonly api: GrassnavApi;

  snapshot: Snapshot | null = null;
  events: TelemetryEvent[] = [];
  preview: SnapshotMission | null = null;
  lastTeach: TeachStopResult | null = null;
  operator: string | null = null;
  private token: string | null = null;
  private socket: WebSocketLike | null = null;
  private listeners: Array<() => void> = [];

  constructor(transport: Transport) {
    this.api = new GrassnavApi(transport);
  }

  get hasDriveControl(): boolean {
    return this.token !== null;
  }

  onChange(fn: () => void): void {
    this.listeners.push(fn);
  }

  private notify(): void {
    for (const fn of this.listeners) fn();
  }

  /** One-shot state refresh over HTTP (used before the socket is up). */
  async refresh(): Promise<Snapshot> {
    this.snapshot = await this.api.status();
    this.notify();
    return this.snapshot;
  }

  /** Attach the 10 Hz telemetry stream. */
  connect(factory: WebSocketFactory): void {
    this.socket = factory("/ws/telemetry");
    this.socket.onmessage = (ev) => {
      const frame = JSON.parse(String(ev.data)) as TelemetryFrame;
      if (frame.type !== "snapshot") return;
      this.snapshot = frame.snapshot;
      this.events.push(...frame.events);
      if (this.events.length > EVENT_LOG_LIMIT) {
        this.events.splice(0, this.events.length - EVENT_LOG_LIMIT);
      }
      this.notify();
    };
    this.socket.onclose = () => {
      this.socket = null;
    };
  }

  disconnect(): void {
    this.socket?.close();
    this.socket = null;
  }

  async acquireDrive(operator: string): Promise<void> {
    const res = await this.api.acquireDrive(operator);
    this.token = res.token;
    this.operator = operator;
    this.notify();
  }

  async releaseDrive(): Promise<void> {
    if (this.token === null) return;
    await this.api.releaseDrive(this.token);
    this.token = null;
    this.operator = null;
    this.notify();
  }

  private requireToken(): string {
    if (this.token === null) {
      throw new Error("drive control not held");
    }
    return this.token;
  }

  teleop(v: number, w: number): Promise<{ accepted: boolean; speed_limit: number }> {
    return this.api.teleop(this.requireToken(), v, w);
  }

  teachStart(): Promise<{ teaching: boolean }> {
    return this.api.teachStart(this.requireToken());
  }

  async teachStop(startNode?: string, endNode?: string): Promise<TeachStopResult> {
    this.lastTeach = await this.api.teachStop(this.requireToken(), startNode, endNode);
    this.notify();
    return this.lastTeach;
  }

  initLocalisation(node: string, heading: number): Promise<{ initialised: boolean }> {
    return this.api.initLocalisation(node, heading);
  }

  /** Plan without dispatching; the preview shown is the server's plan verbatim. */
  async previewMission(targets: string[]): Promise<SnapshotMission> {
    this.preview = await this.api.previewMission(targets);
    this.notify();
    return this.preview;
  }

  async dispatchMission(targets: string[]): Promise<SnapshotMission> {
    const m = await this.api.dispatchMission(targets);
    this.preview = null;
    this.notify();
    return m;
  }

  async abortMission(): Promise<SnapshotMission> {
    const active = this.snapshot?.mission ?? (await this.api.missions()).active;
    if (!active) {
      throw new Error("no active mission");
    }
    return this.api.abortMission(active.id);
  }
}
