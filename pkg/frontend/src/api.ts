// Typed client for the meme service HTTP API. All rendering in the UI
// derives from these response shapes; no caption logic happens client-side.

export interface TemplateInfo {
  name: string;
  thumbnail: string;
}

export interface RankedTemplate {
  name: string;
  probability: number;
}

export interface GenerateRequest {
  sentence: string;
  template?: string;
  beam_size?: number;
  alpha?: number;
  seed?: number;
}

export interface GenerateResponse {
  template: string;
  probability: number;
  templates: RankedTemplate[];
  caption: string;
  score: number;
  latency_ms: number;
  image: string; // base64 PNG
}

export interface ApiError {
  error: string;
  detail: string;
}

export class ServiceError extends Error {
  constructor(readonly status: number, readonly code: string, detail: string) {
    super(detail);
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function asJson<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let code = "http_error";
    let detail = `request failed with status ${resp.status}`;
    try {
      const body = (await resp.json()) as ApiError;
      if (body.error) {
        code = body.error;
        detail = body.detail ?? detail;
      }
    } catch {
      // non-JSON error body; keep the generic message
    }
    throw new ServiceError(resp.status, code, detail);
  }
  return (await resp.json()) as T;
}

export class ApiClient {
  constructor(private readonly fetchFn: FetchLike, private readonly base = "") {}

  async listTemplates(): Promise<TemplateInfo[]> {
    const resp = await this.fetchFn(`${this.base}/templates`);
    const body = await asJson<{ templates: TemplateInfo[] }>(resp);
    return body.templates;
  }

  async generate(req: GenerateRequest): Promise<GenerateResponse> {
    const resp = await this.fetchFn(`${this.base}/generate`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(req),
    });
    return asJson<GenerateResponse>(resp);
  }
}
