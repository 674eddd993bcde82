/** Stroke capture buffer; serializes to the engine's trace JSON schema. */

import type { Vec3 } from "./math.js";

export type Space = "surface" | "air";
export type Source = "pen" | "touch" | "hand";

export interface StrokeSample {
  p: Vec3;
  t: number;
  source: Source;
  space: Space | null;
}

export interface TraceDocument {
  samples: StrokeSample[];
  meta: Record<string, unknown>;
}

export class StrokeBuffer {
  samples: StrokeSample[] = [];
  private startedAt: number | null = null;

  get length(): number {
    return this.samples.length;
  }

  /** Timestamps are seconds since the first sample of the stroke. */
  private stamp(timeMs: number): number {
    if (this.startedAt === null) this.startedAt = timeMs;
    return (timeMs - this.startedAt) / 1000;
  }

  addSurface(p: Vec3, timeMs: number, source: Source = "pen"): void {
    this.samples.push({ p, t: this.stamp(timeMs), source, space: "surface" });
  }

  addAir(p: Vec3, timeMs: number, source: Source = "hand"): void {
    this.samples.push({ p, t: this.stamp(timeMs), source, space: "air" });
  }

  clear(): void {
    this.samples = [];
    this.startedAt = null;
  }

  toTrace(meta: Record<string, unknown> = {}): TraceDocument {
    return { samples: this.samples.map((s) => ({ ...s, p: [...s.p] as Vec3 })), meta };
  }
}

export function traceToJson(trace: TraceDocument): string {
  return JSON.stringify(trace, null, 1);
}
