// Typed client for the session service. Every displayed value in the UI
// traces back to a field returned by one of these calls.

export interface DomainJson {
  kind: "box" | "finite";
  lower?: number[];
  upper?: number[];
  points?: number[][];
}

export interface CreateSessionRequest {
  domain: DomainJson;
  q: number;
  algo?: string;
  seed?: number;
  mc_samples?: number;
  restarts?: number;
}

export interface CreateSessionResponse {
  session_id: string;
  revision: number;
  query: number[][];
  incumbent: number[];
  incumbent_mean: number;
}

export interface SubmitResponseResult {
  revision: number;
  query: number[][];
  incumbent: number[];
  incumbent_mean: number;
}

export interface IncumbentEntry {
  revision: number;
  point: number[];
  mean: number;
}

export interface SessionState {
  session_id: string;
  revision: number;
  status: "awaiting-response" | "computing" | "closed";
  q: number;
  algo: string;
  domain: DomainJson;
  query: number[][] | null;
  responses: { revision: number; choice: number; query: number[][] }[];
  incumbents: IncumbentEntry[];
}

export interface Recommendation {
  point: number[];
  mean: number;
  incumbents: IncumbentEntry[];
}

export interface ApiError {
  code: string;
  message: string;
}

export class ServiceError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }

  get isRevisionConflict(): boolean {
    return this.code === "revision-conflict";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class SessionApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      headers: { "content-type": "application/json" },
      ...init,
    });
    const body = await response.json();
    if (!response.ok) {
      const err = body as ApiError;
      throw new ServiceError(
        response.status,
        err.code ?? "unknown",
        err.message ?? response.statusText,
      );
    }
    return body as T;
  }

  createSession(req: CreateSessionRequest): Promise<CreateSessionResponse> {
    return this.request("/sessions", { method: "POST", body: JSON.stringify(req) });
  }

  submitResponse(
    sessionId: string,
    revision: number,
    choice: number,
  ): Promise<SubmitResponseResult> {
    return this.request(`/sessions/${sessionId}/responses`, {
      method: "POST",
      body: JSON.stringify({ revision, choice }),
    });
  }

  getState(sessionId: string): Promise<SessionState> {
    return this.request(`/sessions/${sessionId}`);
  }

  getRecommendation(sessionId: string): Promise<Recommendation> {
    return this.request(`/sessions/${sessionId}/recommendation`);
  }
}
