/** Typed client for the selection service HTTP API. */

import type { Vec3 } from "./math.js";
import type { TraceDocument } from "./stroke.js";

export interface SceneConfig {
  surface: {
    center: Vec3;
    axis_x: Vec3;
    axis_z: Vec3;
    width: number;
    height: number;
  };
  head: { position: Vec3 };
  far?: number;
}

export interface SessionInfo {
  session: string;
  num_points: number;
  field_cached: boolean;
  grid: [number, number, number];
  grid_min: Vec3;
  grid_max: Vec3;
  density_max: number;
}

export interface CameraDump {
  eye: Vec3;
  view_rotation: number[]; // row-major 3x3
  view: number[]; // row-major 4x4
  projection: number[]; // row-major 4x4
  corner_bl: Vec3;
  corner_tr: Vec3;
  near: number;
  far: number;
}

export interface SelectionResponse {
  technique: string;
  rho0: number | null;
  selected_points: number[];
  node_count: number;
  N_VCR: number;
  mesh_url: string;
  mesh_triangles: number;
}

export type SelectMode = "set" | "subtract";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function checked<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = await response.json();
      if (body && typeof body.error === "string") detail = body.error;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export class ServiceClient {
  constructor(public baseUrl: string) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  async createSession(
    scene: SceneConfig,
    cloudCsv: string,
    grid = 48,
  ): Promise<SessionInfo> {
    const r = await fetch(this.url("/api/session"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ scene, cloud_csv: cloudCsv, grid }),
    });
    return checked<SessionInfo>(r);
  }

  async select(
    session: string,
    trace: TraceDocument,
    technique: string,
    mode: SelectMode,
    radius: number | null,
  ): Promise<SelectionResponse> {
    const r = await fetch(this.url(`/api/session/${session}/select`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ trace, technique, mode, radius }),
    });
    return checked<SelectionResponse>(r);
  }

  async camera(session: string, head: Vec3): Promise<CameraDump> {
    const r = await fetch(
      this.url(`/api/session/${session}/camera?head=${head[0]},${head[1]},${head[2]}`),
    );
    return checked<CameraDump>(r);
  }

  async snap(session: string, origin: Vec3, direction: Vec3): Promise<Vec3 | null> {
    const r = await fetch(
      this.url(
        `/api/session/${session}/snap?origin=${origin.join(",")}&direction=${direction.join(",")}`,
      ),
    );
    const body = await checked<{ point: Vec3 | null }>(r);
    return body.point;
  }

  async points(session: string): Promise<Vec3[]> {
    const r = await fetch(this.url(`/api/session/${session}/points`));
    const body = await checked<{ positions: Vec3[] }>(r);
    return body.positions;
  }

  async mesh(session: string): Promise<string> {
    const r = await fetch(this.url(`/api/session/${session}/mesh`));
    if (!r.ok) throw new ApiError(r.status, r.statusText);
    return r.text();
  }
}
