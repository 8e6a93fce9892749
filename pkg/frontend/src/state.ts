/** UI state: one bbox as the single source of truth, a history strip, and a
 * one-in-flight request discipline with staleness by request id. */

import type { Mode, HarmonizeResponse } from "./api.js";
import type { BBox } from "./geometry.js";
import { serializeBBox } from "./geometry.js";

export interface HistoryEntry {
  bbox: [number, number, number, number];
  mode: Mode;
  thumbnail: string; // base64 PNG of the harmonized result
  latencyMs: number;
}

export interface LastResult {
  harmonizedPng: string;
  compositePng: string;
  latencyMs: number;
  bbox: [number, number, number, number];
  mode: Mode;
}

export class AppState {
  bbox: BBox | null = null;
  mode: Mode = "ours";
  history: HistoryEntry[] = [];
  lastResult: LastResult | null = null;
  error: string | null = null;

  private seq = 0;
  private inFlight: number | null = null;

  get busy(): boolean {
    return this.inFlight !== null;
  }

  /** Register a new request; any response to an earlier id becomes stale. */
  beginRequest(): number {
    this.seq += 1;
    this.inFlight = this.seq;
    this.error = null;
    return this.seq;
  }

  /** Apply a response unless a newer request superseded it. Returns whether
   * the response was accepted. */
  completeRequest(id: number, resp: HarmonizeResponse, bbox: BBox, mode: Mode): boolean {
    if (id !== this.inFlight) return false;
    this.inFlight = null;
    const wire = serializeBBox(bbox);
    this.lastResult = {
      harmonizedPng: resp.harmonized_png,
      compositePng: resp.composite_png,
      latencyMs: resp.latency_ms,
      bbox: wire,
      mode,
    };
    this.history.push({
      bbox: wire,
      mode,
      thumbnail: resp.harmonized_png,
      latencyMs: resp.latency_ms,
    });
    return true;
  }

  /** Record a failure unless superseded. Returns whether it was applied. */
  failRequest(id: number, message: string): boolean {
    if (id !== this.inFlight) return false;
    this.inFlight = null;
    this.error = message;
    return true;
  }

  get canExport(): boolean {
    return this.lastResult !== null;
  }

  /** Export filename embeds the mode and bbox of the last result. */
  exportFilename(): string {
    if (!this.lastResult) throw new Error("nothing to export");
    const [x0, y0, x1, y1] = this.lastResult.bbox;
    return `harmonized_${this.lastResult.mode}_${x0}-${y0}-${x1}-${y1}.png`;
  }

  /** Bytes for export: exactly the last response payload. */
  exportPayload(): string {
    if (!this.lastResult) throw new Error("nothing to export");
    return this.lastResult.harmonizedPng;
  }
}
