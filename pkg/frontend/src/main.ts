// Entry point: wires the state machine to the DOM and polls while waiting.

import { ApiClient } from "./api.js";
import { renderApp, type ComposerState } from "./render.js";
import { NegotiationApp } from "./state.js";
import { emptyDraft, setLikert, type SurveyDraft } from "./survey.js";
import type { ActKind } from "./types.js";

function participantToken(): string {
  const params = new URLSearchParams(window.location.search);
  const given = params.get("token");
  if (given) return given;
  const stored = sessionStorage.getItem("negolab-token");
  if (stored) return stored;
  const fresh = `p-${Math.random().toString(36).slice(2, 10)}`;
  sessionStorage.setItem("negolab-token", fresh);
  return fresh;
}

async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app root");
  const api = new ApiClient("");
  const app = new NegotiationApp(api, participantToken());
  let draft: SurveyDraft = emptyDraft();
  const composer: ComposerState = { kind: "propose", claim: [0, 0, 0] };

  const redraw = () =>
    renderApp(root, app.state.view, app.state.step, app.state.questions, draft, composer, app.state.error, handlers);

  const handlers = {
    onAct: async (kind: ActKind, claim: number[]) => {
      await app.submitAct(kind === "propose" || kind === "insist" ? { kind, alloc: claim } : { kind });
      redraw();
    },
    onSelect: async (alloc: number[]) => {
      await app.submitSelection(alloc);
      redraw();
    },
    onSurveySubmit: async () => {
      await app.submitSurvey(draft);
      if (!app.state.error) {
        draft = emptyDraft();
        await app.advance();
      }
      redraw();
    },
    onNext: async () => {
      draft = emptyDraft();
      composer.kind = "propose";
      composer.claim = [0, 0, 0];
      await app.advance();
      redraw();
    },
    onLikert: (index: number, value: number) => {
      draft = setLikert(draft, index, value);
    },
    onText: (field: "strategy" | "comments", value: string) => {
      if (field === "strategy") draft = { ...draft, strategy: value };
      else draft = { ...draft, comments: value };
    },
  };

  try {
    await app.loadQuestions();
  } catch (err) {
    app.state.error = `cannot reach the arena service: ${err instanceof Error ? err.message : err}`;
  }
  redraw();
}

window.addEventListener("DOMContentLoaded", () => {
  void boot();
});
