/** Pane rendering over a minimal drawing interface (canvas-free for tests). */

import type { CameraDump } from "./api.js";
import { projectOrbit, projectThroughCamera, signedDistance } from "./camera.js";
import type { OrbitCamera } from "./camera.js";
import type { SceneConfig } from "./api.js";
import type { Vec3 } from "./math.js";

export interface DrawApi {
  clear(): void;
  dot(x: number, y: number, color: string, size: number): void;
  polyline(pts: Array<[number, number]>, color: string, width: number): void;
  triangle(a: [number, number], b: [number, number], c: [number, number], color: string): void;
}

export const COLOR_POINT = "#4a6f8a";
export const COLOR_SELECTED = "#ff9a3c";
export const COLOR_STROKE = "#e04f5f";
export const COLOR_MESH = "rgba(255, 154, 60, 0.25)";

export interface MeshData {
  vertices: Vec3[];
  triangles: Array<[number, number, number]>;
}

/** Parse the v/f records of the service's OBJ payload. */
export function parseObj(text: string): MeshData {
  const vertices: Vec3[] = [];
  const triangles: Array<[number, number, number]> = [];
  for (const line of text.split("\n")) {
    if (line.startsWith("v ")) {
      const [x, y, z] = line.slice(2).trim().split(/\s+/).map(Number);
      vertices.push([x, y, z]);
    } else if (line.startsWith("f ")) {
      const [a, b, c] = line.slice(2).trim().split(/\s+/).map((s) => parseInt(s, 10) - 1);
      triangles.push([a, b, c]);
    }
  }
  return { vertices, triangles };
}

/** The head-coupled window view: only content below the surface plane. */
export function renderSurfacePane(
  draw: DrawApi,
  scene: SceneConfig,
  camera: CameraDump,
  points: Vec3[],
  selected: Set<number>,
  strokePixels: Array<[number, number]>,
  mesh: MeshData | null,
  width: number,
  height: number,
): void {
  draw.clear();
  points.forEach((p, i) => {
    if (signedDistance(scene, p) > 0) return;
    const px = projectThroughCamera(camera, p, width, height);
    if (!px.visible) return;
    const chosen = selected.has(i);
    draw.dot(px.x, px.y, chosen ? COLOR_SELECTED : COLOR_POINT, chosen ? 2.5 : 1.5);
  });
  if (mesh) {
    for (const [a, b, c] of mesh.triangles) {
      const pa = projectThroughCamera(camera, mesh.vertices[a], width, height);
      const pb = projectThroughCamera(camera, mesh.vertices[b], width, height);
      const pc = projectThroughCamera(camera, mesh.vertices[c], width, height);
      if (pa.visible || pb.visible || pc.visible) {
        draw.triangle([pa.x, pa.y], [pb.x, pb.y], [pc.x, pc.y], COLOR_MESH);
      }
    }
  }
  if (strokePixels.length > 1) {
    draw.polyline(strokePixels, COLOR_STROKE, 2);
  } else if (strokePixels.length === 1) {
    draw.dot(strokePixels[0][0], strokePixels[0][1], COLOR_STROKE, 3);
  }
}

/** The free-orbit overview of the whole cloud, stroke drawn in world space. */
export function renderOrbitPane(
  draw: DrawApi,
  cam: OrbitCamera,
  points: Vec3[],
  selected: Set<number>,
  strokeWorld: Vec3[],
  mesh: MeshData | null,
  width: number,
  height: number,
): void {
  draw.clear();
  points.forEach((p, i) => {
    const px = projectOrbit(cam, p, width, height);
    if (!px.visible) return;
    const chosen = selected.has(i);
    draw.dot(px.x, px.y, chosen ? COLOR_SELECTED : COLOR_POINT, chosen ? 2.5 : 1.5);
  });
  if (mesh) {
    for (const [a, b, c] of mesh.triangles) {
      const pa = projectOrbit(cam, mesh.vertices[a], width, height);
      const pb = projectOrbit(cam, mesh.vertices[b], width, height);
      const pc = projectOrbit(cam, mesh.vertices[c], width, height);
      if (pa.visible || pb.visible || pc.visible) {
        draw.triangle([pa.x, pa.y], [pb.x, pb.y], [pc.x, pc.y], COLOR_MESH);
      }
    }
  }
  const strokePx = strokeWorld
    .map((p) => projectOrbit(cam, p, width, height))
    .filter((p) => Number.isFinite(p.x))
    .map((p) => [p.x, p.y] as [number, number]);
  if (strokePx.length > 1) draw.polyline(strokePx, COLOR_STROKE, 2);
  else if (strokePx.length === 1) draw.dot(strokePx[0][0], strokePx[0][1], COLOR_STROKE, 3);
}
