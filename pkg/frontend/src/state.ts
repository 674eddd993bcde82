/** UI session state and the stroke/selection life cycle.
 *
 * The head position stands in for an HMD pose and must stay above the
 * surface plane; the pending stroke always clears after a successful
 * submission and is kept for editing when the service rejects the region.
 */

import { ApiError, ServiceClient } from "./api.js";
import type { SceneConfig, SelectionResponse, SelectMode } from "./api.js";
import { signedDistance } from "./camera.js";
import { StrokeBuffer } from "./stroke.js";
import type { TraceDocument } from "./stroke.js";
import type { Vec3 } from "./math.js";

export type Technique = "brush" | "brush-wyp" | "brush-lasso" | "cloud-lasso";

export interface ViewState {
  session: string | null;
  scene: SceneConfig;
  head: Vec3;
  technique: Technique;
  radius: number | null;
  stroke: StrokeBuffer;
  selection: SelectionResponse | null;
  selectedSet: Set<number>;
  busy: boolean;
  notice: string | null;
}

export function initialState(scene: SceneConfig): ViewState {
  return {
    session: null,
    scene,
    head: [...scene.head.position] as Vec3,
    technique: "brush-lasso",
    radius: null,
    stroke: new StrokeBuffer(),
    selection: null,
    selectedSet: new Set(),
    busy: false,
    notice: null,
  };
}

/** Move the emulated head; positions at or below the plane are refused. */
export function moveHead(state: ViewState, next: Vec3): boolean {
  if (signedDistance(state.scene, next) <= 0) return false;
  state.head = next;
  return true;
}

export function exportTrace(state: ViewState): TraceDocument {
  return state.stroke.toTrace({ technique: state.technique });
}

/** Submit the pending stroke; resolves to the server's selection.
 *
 * On success the stroke clears; on an empty-region rejection (409) the
 * stroke is retained so the user can extend it, and `notice` is set.
 */
export async function submitStroke(
  state: ViewState,
  client: ServiceClient,
  mode: SelectMode,
): Promise<SelectionResponse | null> {
  if (state.session === null || state.stroke.length === 0 || state.busy) return null;
  const trace = exportTrace(state);
  state.busy = true;
  try {
    const selection = await client.select(
      state.session,
      trace,
      state.technique,
      mode,
      state.radius,
    );
    state.selection = selection;
    state.selectedSet = new Set(selection.selected_points);
    state.stroke.clear();
    state.notice = null;
    return selection;
  } catch (err) {
    if (err instanceof ApiError && err.status === 409) {
      state.notice = `${err.message} — stroke kept, extend it and retry`;
      return null;
    }
    throw err;
  } finally {
    state.busy = false;
  }
}
