// Thin typed client over the arena's HTTP API.

import type { ActBody, SessionView, StudyStep, SurveyAnswers } from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function parseOrThrow<T>(response: Response): Promise<T> {
  if (response.ok) {
    return (await response.json()) as T;
  }
  let detail = response.statusText;
  try {
    const body = await response.json();
    if (typeof body.detail === "string") detail = body.detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(response.status, detail);
}

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: typeof fetch = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    return parseOrThrow<T>(response);
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  createSession(modelId: string, seed?: number): Promise<SessionView> {
    return this.post("/sessions", { model_id: modelId, seed: seed ?? null });
  }

  getSession(sessionId: string): Promise<SessionView> {
    return this.request(`/sessions/${sessionId}`);
  }

  postAct(sessionId: string, act: ActBody): Promise<SessionView> {
    return this.post(`/sessions/${sessionId}/acts`, act);
  }

  postSelection(sessionId: string, alloc: number[]): Promise<SessionView> {
    return this.post(`/sessions/${sessionId}/selection`, { alloc });
  }

  postSurvey(sessionId: string, answers: SurveyAnswers): Promise<SessionView> {
    return this.post(`/sessions/${sessionId}/survey`, answers);
  }

  surveyQuestions(): Promise<{ questions: string[]; likert_items: number }> {
    return this.request("/survey/questions");
  }

  studyNext(token: string): Promise<StudyStep> {
    return this.request(`/study/${encodeURIComponent(token)}/next`);
  }
}
