/** Typed client for the harmonization HTTP API (base64-PNG JSON bodies). */

export class ApiError extends Error {
  constructor(
    public status: number,
    public field: string,
    public detail: string,
  ) {
    super(`${field}: ${detail}`);
    this.name = "ApiError";
  }
}

export type Mode = "ours" | "bg";

export interface HarmonizeRequest {
  background_png: string;
  object_png: string;
  object_mask_png: string;
  bbox: [number, number, number, number];
  mode: Mode;
}

export interface HarmonizeResponse {
  harmonized_png: string;
  composite_png: string;
  latency_ms: number;
}

export interface HealthResponse {
  status: string;
  profile: string | null;
  checkpoint_id: string | null;
}

export interface ModelInfoResponse {
  profile: string;
  widths: number[];
  parameter_count: number;
  modes: Mode[];
}

type FetchLike = typeof fetch;

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchFn: FetchLike = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let resp: Response;
    try {
      resp = await this.fetchFn(`${this.baseUrl}${path}`, init);
    } catch (err) {
      throw new ApiError(0, "network", `server unreachable: ${String(err)}`);
    }
    let body: unknown = null;
    try {
      body = await resp.json();
    } catch {
      /* structured detail unavailable */
    }
    if (!resp.ok) {
      const e = body as { error?: string; detail?: string } | null;
      throw new ApiError(resp.status, e?.error ?? "http", e?.detail ?? resp.statusText);
    }
    return body as T;
  }

  health(): Promise<HealthResponse> {
    return this.request("/api/health");
  }

  modelInfo(): Promise<ModelInfoResponse> {
    return this.request("/api/model-info");
  }

  harmonize(req: HarmonizeRequest): Promise<HarmonizeResponse> {
    return this.request("/api/harmonize", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(req),
    });
  }
}
