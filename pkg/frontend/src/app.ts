/** Browser wiring: canvases, pointer capture, controls, service round trips. */

import { ApiError, ServiceClient } from "./api.js";
import type { CameraDump, SceneConfig } from "./api.js";
import { orbitPixelRay, pixelToSurfacePoint, signedDistance } from "./camera.js";
import type { OrbitCamera } from "./camera.js";
import { parseObj, renderOrbitPane, renderSurfacePane } from "./panes.js";
import type { DrawApi, MeshData } from "./panes.js";
import { initialState, moveHead, submitStroke, exportTrace } from "./state.js";
import type { Technique, ViewState } from "./state.js";
import { traceToJson } from "./stroke.js";
import type { Vec3 } from "./math.js";
import { add, scale } from "./math.js";

const SERVICE_URL = (window as { XRSEL_SERVICE?: string }).XRSEL_SERVICE
  ?? "http://127.0.0.1:8008";

// demo scene: horizontal surface with the data volume below it
const DEMO_SCENE: SceneConfig = {
  surface: {
    center: [0, 0, 0],
    axis_x: [1, 0, 0],
    axis_z: [0, 0, 1],
    width: 0.637,
    height: 0.438,
  },
  head: { position: [0.0, -0.15, 0.5] },
};

function canvasDraw(canvas: HTMLCanvasElement): DrawApi {
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("2d canvas unavailable");
  return {
    clear() {
      ctx.fillStyle = "#10141a";
      ctx.fillRect(0, 0, canvas.width, canvas.height);
    },
    dot(x, y, color, size) {
      ctx.fillStyle = color;
      ctx.beginPath();
      ctx.arc(x, y, size, 0, 2 * Math.PI);
      ctx.fill();
    },
    polyline(pts, color, width) {
      ctx.strokeStyle = color;
      ctx.lineWidth = width;
      ctx.lineJoin = "round";
      ctx.beginPath();
      ctx.moveTo(pts[0][0], pts[0][1]);
      for (let i = 1; i < pts.length; i++) ctx.lineTo(pts[i][0], pts[i][1]);
      ctx.stroke();
    },
    triangle(a, b, c, color) {
      ctx.fillStyle = color;
      ctx.beginPath();
      ctx.moveTo(a[0], a[1]);
      ctx.lineTo(b[0], b[1]);
      ctx.lineTo(c[0], c[1]);
      ctx.closePath();
      ctx.fill();
    },
  };
}

function toast(message: string): void {
  const el = document.getElementById("toast")!;
  el.textContent = message;
  el.classList.add("visible");
  setTimeout(() => el.classList.remove("visible"), 4000);
}

async function demoCloudCsv(): Promise<string> {
  // two clusters below the surface, small enough to stay interactive
  const rng = (() => {
    let s = 42;
    return () => {
      // xorshift32; deterministic demo data without a server round trip
      s ^= s << 13; s ^= s >>> 17; s ^= s << 5;
      return ((s >>> 0) / 0xffffffff);
    };
  })();
  const gauss = () => {
    const u = Math.max(rng(), 1e-12);
    const v = rng();
    return Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * v);
  };
  const lines = ["x,y,z"];
  const centers: Vec3[] = [[-0.08, 0.02, -0.16], [0.09, -0.03, -0.22]];
  for (const c of centers) {
    for (let i = 0; i < 1500; i++) {
      lines.push(
        `${c[0] + 0.018 * gauss()},${c[1] + 0.018 * gauss()},${c[2] + 0.018 * gauss()}`,
      );
    }
  }
  return lines.join("\n") + "\n";
}

async function main(): Promise<void> {
  const surfaceCanvas = document.getElementById("surface-pane") as HTMLCanvasElement;
  const orbitCanvas = document.getElementById("orbit-pane") as HTMLCanvasElement;
  const surfaceDraw = canvasDraw(surfaceCanvas);
  const orbitDraw = canvasDraw(orbitCanvas);

  const client = new ServiceClient(SERVICE_URL);
  const state: ViewState = initialState(DEMO_SCENE);
  const orbit: OrbitCamera = {
    target: [0, 0, -0.15],
    distance: 1.2,
    theta: -Math.PI / 3,
    phi: Math.PI / 8,
    fovY: Math.PI / 4,
  };

  let camera: CameraDump | null = null;
  let points: Vec3[] = [];
  let mesh: MeshData | null = null;
  let surfaceStrokePixels: Array<[number, number]> = [];

  const statusEl = document.getElementById("status")!;
  const setStatus = (text: string) => {
    statusEl.textContent = text;
  };

  setStatus("creating session…");
  try {
    const info = await client.createSession(DEMO_SCENE, await demoCloudCsv(), 48);
    state.session = info.session;
    points = await client.points(info.session);
    camera = await client.camera(info.session, state.head);
    setStatus(`session ${info.session.slice(0, 8)} · ${info.num_points} points` +
      (info.field_cached ? " · field cached" : ""));
  } catch (err) {
    setStatus(`service unreachable at ${SERVICE_URL} — run: xrsel serve`);
    throw err;
  }

  const redraw = () => {
    if (!camera) return;
    renderSurfacePane(surfaceDraw, state.scene, camera, points, state.selectedSet,
      surfaceStrokePixels, mesh, surfaceCanvas.width, surfaceCanvas.height);
    renderOrbitPane(orbitDraw, orbit, points, state.selectedSet,
      state.stroke.samples.map((s) => s.p), mesh,
      orbitCanvas.width, orbitCanvas.height);
  };

  // -- head slider: reprojects the window live ------------------------------
  const headX = document.getElementById("head-x") as HTMLInputElement;
  const headY = document.getElementById("head-y") as HTMLInputElement;
  const headZ = document.getElementById("head-z") as HTMLInputElement;
  const updateHead = async () => {
    const next: Vec3 = add(
      DEMO_SCENE.head.position,
      add(scale(DEMO_SCENE.surface.axis_x, parseFloat(headX.value)),
        add(scale([0, 1, 0], parseFloat(headY.value)),
          scale(DEMO_SCENE.surface.axis_z, parseFloat(headZ.value)))),
    );
    if (!moveHead(state, next)) {
      toast("head must stay above the surface");
      return;
    }
    if (state.session) {
      camera = await client.camera(state.session, state.head);
      redraw();
    }
  };
  for (const el of [headX, headY, headZ]) el.addEventListener("input", updateHead);

  // -- technique / radius ----------------------------------------------------
  const techniqueSel = document.getElementById("technique") as HTMLSelectElement;
  techniqueSel.addEventListener("change", () => {
    state.technique = techniqueSel.value as Technique;
  });
  const radiusInput = document.getElementById("radius") as HTMLInputElement;
  radiusInput.addEventListener("input", () => {
    const v = parseFloat(radiusInput.value);
    state.radius = Number.isFinite(v) && v > 0 ? v : null;
  });

  // -- surface-pane strokes --------------------------------------------------
  let drawingSurface = false;
  surfaceCanvas.addEventListener("pointerdown", (e) => {
    drawingSurface = true;
    surfaceCanvas.setPointerCapture(e.pointerId);
  });
  surfaceCanvas.addEventListener("pointermove", (e) => {
    if (!drawingSurface) return;
    const rect = surfaceCanvas.getBoundingClientRect();
    const x = ((e.clientX - rect.left) / rect.width) * surfaceCanvas.width;
    const y = ((e.clientY - rect.top) / rect.height) * surfaceCanvas.height;
    const world = pixelToSurfacePoint(state.scene, x, y,
      surfaceCanvas.width, surfaceCanvas.height);
    state.stroke.addSurface(world, e.timeStamp, e.pointerType === "pen" ? "pen" : "touch");
    surfaceStrokePixels.push([x, y]);
    redraw();
  });
  surfaceCanvas.addEventListener("pointerup", () => {
    drawingSurface = false;
  });

  // -- 3D-pane strokes: depth snapped to the density maximum along the ray ---
  let drawingAir = false;
  orbitCanvas.addEventListener("pointerdown", (e) => {
    if (e.shiftKey) return; // shift drags the orbit
    drawingAir = true;
    orbitCanvas.setPointerCapture(e.pointerId);
  });
  orbitCanvas.addEventListener("pointermove", async (e) => {
    const rect = orbitCanvas.getBoundingClientRect();
    const x = ((e.clientX - rect.left) / rect.width) * orbitCanvas.width;
    const y = ((e.clientY - rect.top) / rect.height) * orbitCanvas.height;
    if (e.shiftKey && e.buttons) {
      orbit.theta -= e.movementX * 0.01;
      orbit.phi = Math.min(Math.max(orbit.phi + e.movementY * 0.01, -1.4), 1.4);
      redraw();
      return;
    }
    if (!drawingAir || !state.session) return;
    const ray = orbitPixelRay(orbit, x, y, orbitCanvas.width, orbitCanvas.height);
    const snapped = await client.snap(state.session, ray.origin, ray.direction);
    if (snapped === null) {
      setStatus("ray misses the data — sample dropped");
      return;
    }
    if (signedDistance(state.scene, snapped) <= 0) {
      setStatus("snapped point is below the surface — sample dropped");
      return;
    }
    state.stroke.addAir(snapped, e.timeStamp);
    redraw();
  });
  orbitCanvas.addEventListener("pointerup", () => {
    drawingAir = false;
  });

  // -- submission: Alt (pen-flip stand-in) subtracts instead of replacing ----
  const submit = async (subtractMode: boolean) => {
    try {
      const selection = await submitStroke(state, client,
        subtractMode ? "subtract" : "set");
      if (selection === null) {
        if (state.notice) toast(state.notice);
        return;
      }
      surfaceStrokePixels = [];
      mesh = selection.mesh_triangles > 0 && state.session
        ? parseObj(await client.mesh(state.session))
        : null;
      setStatus(`rho0=${selection.rho0?.toPrecision(4)} · ` +
        `${selection.selected_points.length} points · ` +
        `${selection.node_count} nodes of ${selection.N_VCR}`);
      redraw();
    } catch (err) {
      if (err instanceof ApiError) toast(`${err.status}: ${err.message}`);
      else throw err;
    }
  };
  (document.getElementById("submit") as HTMLButtonElement)
    .addEventListener("click", (e) => submit(e.altKey));
  (document.getElementById("subtract") as HTMLButtonElement)
    .addEventListener("click", () => submit(true));
  (document.getElementById("clear-stroke") as HTMLButtonElement)
    .addEventListener("click", () => {
      state.stroke.clear();
      surfaceStrokePixels = [];
      redraw();
    });

  // -- trace export (replayable through the batch pipeline) ------------------
  (document.getElementById("export") as HTMLButtonElement)
    .addEventListener("click", () => {
      const blob = new Blob([traceToJson(exportTrace(state))],
        { type: "application/json" });
      const a = document.createElement("a");
      a.href = URL.createObjectURL(blob);
      a.download = "trace.json";
      a.click();
      URL.revokeObjectURL(a.href);
    });

  redraw();
}

main().catch((err) => console.error(err));
