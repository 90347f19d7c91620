import type {
  BitGrid,
  IntentCandidates,
  JobRecord,
  OpPayload,
  PreviewFrame,
} from "./types.js";

export class ServiceError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`service error ${status}: ${detail}`);
  }
}

/** Thin typed client over the local drag service. All geometry-bearing
 * responses come from the server; the UI never recomputes them. */
export class ServiceClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: typeof fetch = fetch,
  ) {}

  private async post<T>(path: string, body: unknown): Promise<T> {
    const resp = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!resp.ok) {
      throw new ServiceError(resp.status, await resp.text());
    }
    return (await resp.json()) as T;
  }

  private async get<T>(path: string): Promise<T> {
    const resp = await this.fetchImpl(`${this.baseUrl}${path}`);
    if (!resp.ok) {
      throw new ServiceError(resp.status, await resp.text());
    }
    return (await resp.json()) as T;
  }

  preview(ops: OpPayload[], k: number, K: number): Promise<PreviewFrame> {
    return this.post("/preview", { ops, k, K });
  }

  encodeMask(bits: BitGrid): Promise<{ png_b64: string; roundtrip_iou: number }> {
    return this.post("/masks/encode", { bits });
  }

  submitJob(
    ops: OpPayload[],
    config: Record<string, unknown>,
    synthetic: Record<string, unknown> = {},
  ): Promise<{ id: string }> {
    return this.post("/jobs", { ops, config, synthetic });
  }

  job(id: string): Promise<JobRecord> {
    return this.get(`/jobs/${id}`);
  }

  cancelJob(id: string): Promise<{ id: string; cancelling: boolean }> {
    return this.post(`/jobs/${id}/cancel`, {});
  }

  requestIntent(body: {
    endpoint_url: string;
    original_png_b64: string;
    overlay_png_b64: string;
    api_key_env?: string;
    model?: string;
    sample_meta?: Record<string, unknown>;
  }): Promise<IntentCandidates> {
    return this.post("/intent", body);
  }
}
