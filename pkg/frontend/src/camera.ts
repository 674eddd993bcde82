/** Projection helpers: the head-coupled surface camera (matrices supplied by
 * the service) and a local orbit camera for the free 3D pane. */

import { add, applyMat4, cross, dot, normalize, scale, sub } from "./math.js";
import type { Mat4, Vec3 } from "./math.js";
import type { CameraDump, SceneConfig } from "./api.js";

export interface PixelPoint {
  x: number;
  y: number;
  depth: number;
  visible: boolean;
}

export const ndcToPixel = (nx: number, ny: number, width: number, height: number) => ({
  x: ((nx + 1) / 2) * width,
  y: ((1 - ny) / 2) * height,
});

/** Apply the service-provided view+projection to a world point. */
export function projectThroughCamera(
  cam: CameraDump,
  p: Vec3,
  width: number,
  height: number,
): PixelPoint {
  const v = applyMat4(cam.view as Mat4, p);
  const clip = applyMat4(cam.projection as Mat4, [v[0], v[1], v[2]]);
  const w = clip[3];
  if (w <= 0) return { x: NaN, y: NaN, depth: NaN, visible: false };
  const nx = clip[0] / w;
  const ny = clip[1] / w;
  const nz = clip[2] / w;
  const px = ndcToPixel(nx, ny, width, height);
  const visible = nx >= -1 && nx <= 1 && ny >= -1 && ny <= 1 && nz >= -1 && nz <= 1;
  return { x: px.x, y: px.y, depth: nz, visible };
}

export function surfaceAxisY(scene: SceneConfig): Vec3 {
  return cross(scene.surface.axis_z, scene.surface.axis_x);
}

export function signedDistance(scene: SceneConfig, p: Vec3): number {
  return dot(scene.surface.axis_z, sub(p, scene.surface.center));
}

/** World position of surface-pane pixel coordinates (point on the plane). */
export function pixelToSurfacePoint(
  scene: SceneConfig,
  x: number,
  y: number,
  width: number,
  height: number,
): Vec3 {
  const u = (x / width - 0.5) * scene.surface.width;
  const v = (0.5 - y / height) * scene.surface.height;
  return add(
    scene.surface.center,
    add(scale(scene.surface.axis_x, u), scale(surfaceAxisY(scene), v)),
  );
}

/** Orbit camera around a target; spherical angles in radians. */
export interface OrbitCamera {
  target: Vec3;
  distance: number;
  theta: number; // azimuth
  phi: number; // elevation, clamped away from the poles
  fovY: number; // vertical field of view, radians
}

export function orbitEye(cam: OrbitCamera): Vec3 {
  const cp = Math.cos(cam.phi);
  return add(cam.target, [
    cam.distance * cp * Math.cos(cam.theta),
    cam.distance * cp * Math.sin(cam.theta),
    cam.distance * Math.sin(cam.phi),
  ]);
}

interface OrbitBasis {
  eye: Vec3;
  right: Vec3;
  up: Vec3;
  forward: Vec3;
}

export function orbitBasis(cam: OrbitCamera): OrbitBasis {
  const eye = orbitEye(cam);
  const forward = normalize(sub(cam.target, eye));
  const right = normalize(cross(forward, [0, 0, 1]));
  const up = cross(right, forward);
  return { eye, right, up, forward };
}

export function projectOrbit(
  cam: OrbitCamera,
  p: Vec3,
  width: number,
  height: number,
): PixelPoint {
  const b = orbitBasis(cam);
  const d = sub(p, b.eye);
  const cz = dot(d, b.forward);
  if (cz <= 1e-9) return { x: NaN, y: NaN, depth: NaN, visible: false };
  const tanH = Math.tan(cam.fovY / 2);
  const aspect = width / height;
  const nx = dot(d, b.right) / (cz * tanH * aspect);
  const ny = dot(d, b.up) / (cz * tanH);
  const px = ndcToPixel(nx, ny, width, height);
  return { x: px.x, y: px.y, depth: cz, visible: nx >= -1 && nx <= 1 && ny >= -1 && ny <= 1 };
}

/** Pointer ray through a 3D-pane pixel, for depth-snapped air strokes. */
export function orbitPixelRay(
  cam: OrbitCamera,
  x: number,
  y: number,
  width: number,
  height: number,
): { origin: Vec3; direction: Vec3 } {
  const b = orbitBasis(cam);
  const tanH = Math.tan(cam.fovY / 2);
  const aspect = width / height;
  const nx = (x / width) * 2 - 1;
  const ny = 1 - (y / height) * 2;
  const direction = normalize(
    add(b.forward, add(scale(b.right, nx * tanH * aspect), scale(b.up, ny * tanH))),
  );
  return { origin: b.eye, direction };
}
