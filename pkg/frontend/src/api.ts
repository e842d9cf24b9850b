/**
 * Typed client for the annotation service JSON API.
 *
 * Every number and label shown in the UI comes from these payloads; the
 * client never derives scores or decisions locally.  Server-side failures
 * surface as ApiError (machine-readable code + HTTP status); transport
 * failures surface as NetworkError so callers can retry.
 */

export interface EntityRef {
  id: number;
  uri: string;
}

export interface ContextEdge {
  relation: string;
  direction: "out" | "in";
  neighbor: EntityRef;
}

export interface Candidate {
  id: number;
  uri: string;
  score: number;
}

export interface AnsweredMark {
  outcome: "match" | "bachelor";
  counterpart: string | null;
}

export interface QueryPayload {
  entity: EntityRef;
  acquisition_score: number;
  context: ContextEdge[];
  candidates: Candidate[];
  answered: AnsweredMark | null;
}

export interface PendingCounts {
  total: number;
  answered: number;
}

export interface LastRecord {
  iteration: number;
  spent: number;
  proportion: number;
  hit_at_1: number | null;
  recognizer_micro_f1: number | null;
  campaign_complete: boolean;
  [extra: string]: unknown;
}

export type Phase = "collecting" | "busy" | "complete";

export interface StateView {
  phase: Phase;
  strategy: string;
  iteration: number;
  budget: number;
  spent: number;
  remaining: number;
  batch_size: number;
  pool_size: number;
  labelled_pos: number;
  labelled_neg: number;
  pending: PendingCounts;
  last_record: LastRecord | null;
  error: string | null;
}

export interface LabelAck {
  status: "accepted" | "duplicate";
  advancing: boolean;
  remaining: number;
  pending_answered: number;
  pending_total: number;
}

export interface AdvanceAck {
  status: "advancing";
  forced: boolean;
}

export interface SearchHit {
  id: number;
  uri: string;
  consumed: boolean;
}

export interface EntityContext {
  entity: { id: number; uri: string; side: number };
  context: ContextEdge[];
}

/** The server rejected the request; `code` mirrors the service error codes. */
export class ApiError extends Error {
  constructor(
    readonly code: string,
    message: string,
    readonly status: number,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

/** The request never produced an HTTP response (connection refused, DNS…). */
export class NetworkError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "NetworkError";
  }
}

/** A submission the service treats as retryable rather than failed. */
export function isRetryable(error: unknown): boolean {
  if (error instanceof NetworkError) return true;
  return error instanceof ApiError && error.code === "busy";
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Bachelor marks are sent as this literal in the `outcome` field. */
export const BACHELOR = "bachelor";

export class ApiClient {
  private readonly fetchImpl: FetchLike;

  constructor(
    private readonly baseUrl: string = "",
    fetchImpl?: FetchLike,
  ) {
    this.fetchImpl = fetchImpl ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(this.baseUrl + path, init);
    } catch (err) {
      throw new NetworkError(err instanceof Error ? err.message : String(err));
    }
    const body = await response.json().catch(() => null);
    if (!response.ok) {
      const detail = (body as { error?: { code?: string; message?: string } } | null)?.error;
      throw new ApiError(detail?.code ?? "internal", detail?.message ?? response.statusText, response.status);
    }
    return body as T;
  }

  state(): Promise<StateView> {
    return this.request<StateView>("/api/state");
  }

  queries(): Promise<QueryPayload[]> {
    return this.request<QueryPayload[]>("/api/queries");
  }

  /** `outcome` is either a KG2 entity uri or the literal "bachelor". */
  submitLabel(query: string, outcome: string): Promise<LabelAck> {
    return this.request<LabelAck>("/api/labels", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ query, outcome }),
    });
  }

  /** Entity uris contain slashes; escape every segment but keep the slashes. */
  context(uri: string, side?: 1 | 2): Promise<EntityContext> {
    const escaped = uri.split("/").map(encodeURIComponent).join("/");
    const suffix = side === undefined ? "" : `?side=${side}`;
    return this.request<EntityContext>(`/api/entities/${escaped}/context${suffix}`);
  }

  async search(q: string, side: 1 | 2 = 2, limit = 20): Promise<SearchHit[]> {
    const params = new URLSearchParams({ q, side: String(side), limit: String(limit) });
    const body = await this.request<{ results: SearchHit[] }>(`/api/search?${params}`);
    return body.results;
  }

  forceAdvance(): Promise<AdvanceAck> {
    return this.request<AdvanceAck>("/api/admin/advance", { method: "POST" });
  }
}
