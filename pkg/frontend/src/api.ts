import type { HistoryEntry, PendingPayload, SessionInfo } from "./types.js";

export type FetchLike = (
  input: string,
  init?: RequestInit,
) => Promise<Response>;

export type ApiErrorKind = "not_found" | "conflict" | "bad_request" | "http" | "network";

export class ApiError extends Error {
  readonly kind: ApiErrorKind;
  readonly status: number;

  constructor(kind: ApiErrorKind, status: number, message: string) {
    super(message);
    this.kind = kind;
    this.status = status;
  }
}

function classify(status: number): ApiErrorKind {
  if (status === 404) return "not_found";
  if (status === 409) return "conflict";
  if (status === 400) return "bad_request";
  return "http";
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError("network", 0, String(err));
    }
    if (!response.ok) {
      let detail = "";
      try {
        const body = (await response.json()) as { error?: string };
        detail = body.error ?? "";
      } catch {
        // non-JSON error body: status alone is enough
      }
      throw new ApiError(classify(response.status), response.status, detail);
    }
    return (await response.json()) as T;
  }

  listSessions(): Promise<SessionInfo[]> {
    return this.request<SessionInfo[]>("/api/sessions");
  }

  getPending(sessionId: string): Promise<PendingPayload> {
    return this.request<PendingPayload>(
      `/api/sessions/${encodeURIComponent(sessionId)}/pending`,
    );
  }

  postFeedback(
    sessionId: string,
    iteration: number,
    text: string,
  ): Promise<{ accepted: boolean }> {
    return this.request<{ accepted: boolean }>(
      `/api/sessions/${encodeURIComponent(sessionId)}/feedback`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ iteration, text }),
      },
    );
  }

  getHistory(sessionId: string): Promise<HistoryEntry[]> {
    return this.request<HistoryEntry[]>(
      `/api/sessions/${encodeURIComponent(sessionId)}/history`,
    );
  }
}
