/**
 * Typed client for the session service.
 *
 * Answers carry an idempotency token: retries (network failures, 5xx) and
 * accidental double-submits replay the same token, so the server returns
 * the stored response instead of double-applying the answer.
 */

export interface QuestionPayload {
  id: number;
  concepts: number[];
}

export interface StartResponse {
  session_id: string;
  step: number;
  n_steps: number;
  question: QuestionPayload;
}

export interface HistoryItem {
  question: number;
  predicted: number;
  answer: number;
}

export interface DiagnosisReport {
  session_id: string;
  status: "active" | "finished";
  step: number;
  n_steps: number;
  model: string;
  strategy: string;
  mastery: Record<string, number>;
  history: HistoryItem[];
  coverage: number;
  inf_proxy: number | null;
  pending_question?: QuestionPayload | null;
}

export type AnswerResponse =
  | { session_id: string; status: "active"; step: number; n_steps: number; question: QuestionPayload }
  | { session_id: string; status: "finished"; report: DiagnosisReport };

export interface StartOptions {
  model: string;
  strategy?: string;
  n_steps?: number;
  k_c?: number | null;
  examinee_ref?: number;
}

export class ApiError extends Error {
  constructor(public code: number, message: string) {
    super(message);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

const RETRYABLE = (status: number) => status >= 500 || status === 429;

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (...args) => fetch(...args),
    private retries = 3,
    private backoffMs = 200,
  ) {}

  private async request<T>(path: string, init: RequestInit): Promise<T> {
    let lastError: unknown = null;
    for (let attempt = 0; attempt < this.retries; attempt++) {
      let response: Response;
      try {
        response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
      } catch (err) {
        // network failure: retry with the identical body (same token)
        lastError = err;
        await delay(this.backoffMs * 2 ** attempt);
        continue;
      }
      if (response.ok) {
        return (await response.json()) as T;
      }
      if (RETRYABLE(response.status)) {
        lastError = new ApiError(response.status, await safeMessage(response));
        await delay(this.backoffMs * 2 ** attempt);
        continue;
      }
      throw new ApiError(response.status, await safeMessage(response));
    }
    if (lastError instanceof ApiError) throw lastError;
    throw new ApiError(0, `service unreachable: ${String(lastError)}`);
  }

  startSession(options: StartOptions): Promise<StartResponse> {
    return this.request<StartResponse>("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(options),
    });
  }

  submitAnswer(sessionId: string, answer: 0 | 1, token: string): Promise<AnswerResponse> {
    return this.request<AnswerResponse>(`/sessions/${sessionId}/answers`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ answer, idempotency_token: token }),
    });
  }

  getDiagnosis(sessionId: string): Promise<DiagnosisReport> {
    return this.request<DiagnosisReport>(`/sessions/${sessionId}/diagnosis`, {
      method: "GET",
    });
  }
}

async function safeMessage(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { message?: string };
    return body.message ?? `HTTP ${response.status}`;
  } catch {
    return `HTTP ${response.status}`;
  }
}

function delay(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

export function freshToken(): string {
  const bytes = new Uint8Array(12);
  crypto.getRandomValues(bytes);
  return Array.from(bytes, (b) => b.toString(16).padStart(2, "0")).join("");
}
