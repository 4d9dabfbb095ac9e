/**
 * Typed client for the grassnav wire API (see ../../docs/wire_api.md).
 *
 * Every server interaction goes through a Transport so tests can capture
 * the protocol; the console never computes robot state client-side.
 */

export interface SnapshotMission {
  id: number;
  status: "planned" | "running" | "paused" | "completed" | "aborted";
  targets: string[];
  route: string[];
  length: number;
  energy_estimate: number;
  captured: string[];
  truncated: boolean;
}

export interface Snapshot {
  t: number;
  mode: string;
  truth: [number, number, number];
  est: [number, number, number] | null;
  localised: boolean;
  lost: boolean;
  inliers: number;
  battery: number;
  battery_capacity: number;
  speed_limit: number;
  estop: boolean;
  odometer: number;
  mission: SnapshotMission | null;
  teach: { keyframes: number; arc: number } | null;
  drive_lease?: { holder: string | null };
}

export interface TelemetryEvent {
  t: number;
  kind: string;
  [key: string]: unknown;
}

export interface TelemetryFrame {
  type: "snapshot";
  snapshot: Snapshot;
  events: TelemetryEvent[];
}

export interface TeachStopResult {
  experience: number;
  keyframes: number;
  length: number;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: unknown,
  ) {
    super(`HTTP ${status}: ${JSON.stringify(detail)}`);
  }
}

export interface Transport {
  request(method: string, path: string, body?: unknown): Promise<unknown>;
}

/** Default transport over fetch. */
export class HttpTransport implements Transport {
  constructor(
    private baseUrl: string,
    private fetchFn: typeof fetch = fetch,
  ) {}

  async request(method: string, path: string, body?: unknown): Promise<unknown> {
    const res = await this.fetchFn(this.baseUrl + path, {
      method,
      headers: body !== undefined ? { "content-type": "application/json" } : {},
      body: body !== undefined ? JSON.stringify(body) : undefined,
    });
    const payload = res.status === 204 ? null : await res.json();
    if (!res.ok) {
      throw new ApiError(res.status, (payload as { detail?: unknown })?.detail);
    }
    return payload;
  }
}

export class GrassnavApi {
  constructor(private transport: Transport) {}

  status(): Promise<Snapshot> {
    return this.transport.request("GET", "/api/status") as Promise<Snapshot>;
  }

  acquireDrive(operator: string): Promise<{ token: string; holder: string }> {
    return this.transport.request("POST", "/api/drive/acquire", { operator }) as Promise<{
      token: string;
      holder: string;
    }>;
  }

  releaseDrive(token: string): Promise<{ released: boolean }> {
    return this.transport.request("POST", "/api/drive/release", { token }) as Promise<{
      released: boolean;
    }>;
  }

  teleop(token: string, v: number, w: number): Promise<{ accepted: boolean; speed_limit: number }> {
    return this.transport.request("POST", "/api/teleop", { token, v, w }) as Promise<{
      accepted: boolean;
      speed_limit: number;
    }>;
  }

  teachStart(token: string): Promise<{ teaching: boolean }> {
    return this.transport.request("POST", "/api/teach/start", { token }) as Promise<{
      teaching: boolean;
    }>;
  }

  teachStop(token: string, startNode?: string, endNode?: string): Promise<TeachStopResult> {
    return this.transport.request("POST", "/api/teach/stop", {
      token,
      start_node: startNode ?? null,
      end_node: endNode ?? null,
    }) as Promise<TeachStopResult>;
  }

  initLocalisation(node: string, heading: number): Promise<{ initialised: boolean }> {
    return this.transport.request("POST", "/api/localisation/init", {
      node,
      heading,
    }) as Promise<{ initialised: boolean }>;
  }

  missions(): Promise<{ active: SnapshotMission | null }> {
    return this.transport.request("GET", "/api/missions") as Promise<{
      active: SnapshotMission | null;
    }>;
  }

  previewMission(targets: string[]): Promise<SnapshotMission> {
    return this.transport.request("POST", "/api/missions/preview", {
      targets,
    }) as Promise<SnapshotMission>;
  }

  dispatchMission(targets: string[]): Promise<SnapshotMission> {
    return this.transport.request("POST", "/api/missions", { targets }) as Promise<SnapshotMission>;
  }

  abortMission(id: number): Promise<SnapshotMission> {
    return this.transport.request("POST", `/api/missions/${id}/abort`) as Promise<SnapshotMission>;
  }
}
