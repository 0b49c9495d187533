// Typed client for the edit service. All state-changing interactions of the
// editor funnel through these five calls.

import type { EditOp, EditResponse, SampleResponse, SceneState } from "./types";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function parseError(res: Response): Promise<ApiError> {
  let detail = res.statusText;
  try {
    const body = (await res.json()) as { detail?: string };
    if (body.detail) detail = body.detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(res.status, detail);
}

export class EditServiceClient {
  constructor(
    readonly baseUrl: string = "",
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async post<T>(path: string, body: unknown): Promise<T> {
    const res = await this.fetchFn(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!res.ok) throw await parseError(res);
    return (await res.json()) as T;
  }

  sample(seed?: number): Promise<SampleResponse> {
    return this.post("/v1/sample", seed === undefined ? {} : { seed });
  }

  edit(sessionId: string, ops: EditOp[]): Promise<EditResponse> {
    return this.post(`/v1/session/${sessionId}/edit`, { ops });
  }

  swap(
    sessionId: string,
    sourceSession: string,
    indices: number[],
    background: boolean,
  ): Promise<EditResponse> {
    return this.post(`/v1/session/${sessionId}/swap`, {
      source_session: sourceSession,
      indices,
      background,
    });
  }

  async getScene(sessionId: string): Promise<SceneState> {
    const res = await this.fetchFn (`${this.baseUrl}/v1/session/${sessionId}`);
    if (!res.ok) throw await parseError(res);
    const doc = (await res.json()) as { scene_state: SceneState };
    return doc.scene_state;
  }

  async deleteSession(sessionId: string): Promise<void> {
    const res = await this.fetchFn(`${this.baseUrl}/v1/session/${sessionId}`, {
      method: "DELETE",
    });
    if (!res.ok && res.status !== 204) throw await parseError(res);
  }
}
