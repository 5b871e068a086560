// Application flow, kept free of DOM concerns so tests can drive it
// headlessly against a live service. On any accepted mutation the view is
// replaced by the server's response (server truth); rejected acts surface
// the server's rule name without corrupting local state.

import { ApiClient, ApiError } from "./api.js";
import { checkAct, checkSelection } from "./legality.js";
import { isComplete, toAnswers, type SurveyDraft } from "./survey.js";
import type { ActBody, SessionView, StudyStep } from "./types.js";

export interface AppState {
  token: string;
  step: StudyStep["step"] | "idle";
  view: SessionView | null;
  error: string | null;
  questions: string[];
  done: boolean;
}

export class NegotiationApp {
  state: AppState;

  constructor(
    private api: ApiClient,
    token: string,
  ) {
    this.state = { token, step: "idle", view: null, error: null, questions: [], done: false };
  }

  async loadQuestions(): Promise<void> {
    const spec = await this.api.surveyQuestions();
    this.state.questions = spec.questions;
  }

  async advance(): Promise<AppState> {
    const step = await this.api.studyNext(this.state.token);
    this.state.step = step.step;
    this.state.error = null;
    if (step.step === "done") {
      this.state.done = true;
      this.state.view = null;
    } else if (step.session) {
      this.state.view = step.session;
    }
    return this.state;
  }

  async refresh(): Promise<AppState> {
    if (this.state.view) {
      this.state.view = await this.api.getSession(this.state.view.session_id);
    }
    return this.state;
  }

  /** Validate locally, then submit; the server's view becomes the truth. */
  async submitAct(act: ActBody): Promise<AppState> {
    const view = this.requireView();
    const verdict = checkAct(view, act);
    if (!verdict.ok) {
      this.state.error = `${verdict.rule}: ${verdict.detail}`;
      return this.state;
    }
    try {
      this.state.view = await this.api.postAct(view.session_id, act);
      this.state.error = null;
    } catch (err) {
      this.state.error = describe(err);
      await this.refresh();
    }
    return this.state;
  }

  async submitSelection(alloc: number[]): Promise<AppState> {
    const view = this.requireView();
    const verdict = checkSelection(view, alloc);
    if (!verdict.ok) {
      this.state.error = `${verdict.rule}: ${verdict.detail}`;
      return this.state;
    }
    try {
      this.state.view = await this.api.postSelection(view.session_id, alloc);
      this.state.error = null;
    } catch (err) {
      this.state.error = describe(err);
      await this.refresh();
    }
    return this.state;
  }

  async submitSurvey(draft: SurveyDraft): Promise<AppState> {
    const view = this.requireView();
    if (!isComplete(draft)) {
      this.state.error = "please answer every rating question";
      return this.state;
    }
    try {
      this.state.view = await this.api.postSurvey(view.session_id, toAnswers(draft));
      this.state.error = null;
    } catch (err) {
      this.state.error = describe(err);
    }
    return this.state;
  }

  private requireView(): SessionView {
    if (!this.state.view) throw new Error("no active session");
    return this.state.view;
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) return err.detail;
  return err instanceof Error ? err.message : String(err);
}
