// DOM rendering: items panel, transcript, act composer, selection and survey
// forms. The composer is enabled only on the human's turn; claim steppers are
// clamped to the item counts.

import { clampClaim, hasProposal, shareValue } from "./legality.js";
import { LIKERT_COUNT, type SurveyDraft } from "./survey.js";
import { ITEM_NAMES, type ActKind, type SessionView } from "./types.js";

export interface ComposerState {
  kind: ActKind;
  claim: number[];
}

export interface Handlers {
  onAct: (kind: ActKind, claim: number[]) => void;
  onSelect: (alloc: number[]) => void;
  onSurveySubmit: () => void;
  onNext: () => void;
  onLikert: (index: number, value: number) => void;
  onText: (field: "strategy" | "comments", value: string) => void;
}

function el(tag: string, attrs: Record<string, string> = {}, text = ""): HTMLElement {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  if (text) node.textContent = text;
  return node;
}

function renderItems(view: SessionView): HTMLElement {
  const panel = el("div", { class: "panel items" });
  panel.appendChild(el("h3", {}, "On the table"));
  const table = el("table");
  const head = el("tr");
  head.appendChild(el("th", {}, "item"));
  head.appendChild(el("th", {}, "count"));
  head.appendChild(el("th", {}, "worth to you"));
  table.appendChild(head);
  ITEM_NAMES.forEach((name, i) => {
    const row = el("tr");
    row.appendChild(el("td", {}, name));
    row.appendChild(el("td", {}, String(view.counts[i])));
    row.appendChild(el("td", {}, `${view.your_utilities[i]} pts`));
    table.appendChild(row);
  });
  panel.appendChild(table);
  panel.appendChild(el("p", { class: "hint" }, "Taking everything is worth 10 points to you."));
  return panel;
}

function renderTranscript(view: SessionView): HTMLElement {
  const panel = el("div", { class: "panel transcript" });
  panel.appendChild(el("h3", {}, "Dialogue"));
  const list = el("ul", { id: "transcript" });
  for (const act of view.transcript) {
    const speaker = act.who === "you" ? "You" : "Alice";
    let text = `${speaker}: ${act.kind}`;
    if (act.alloc) {
      const claims = act.alloc.map((n, i) => `${n} ${ITEM_NAMES[i]}`).join(", ");
      text += ` (claims ${claims})`;
    }
    list.appendChild(el("li", { class: act.who }, text));
  }
  panel.appendChild(list);
  const turn = view.phase === "negotiating" ? (view.your_turn ? "Your turn." : "Waiting for Alice…") : "";
  panel.appendChild(el("p", { class: "turn" }, turn));
  return panel;
}

function claimSteppers(view: SessionView, claim: number[], onChange: (c: number[]) => void): HTMLElement {
  const wrap = el("div", { class: "steppers" });
  ITEM_NAMES.forEach((name, i) => {
    const field = el("label", {}, `${name} `);
    const input = el("input", {
      type: "number",
      min: "0",
      max: String(view.counts[i]),
      value: String(claim[i]),
      "data-item": name,
    }) as HTMLInputElement;
    input.addEventListener("change", () => {
      const next = claim.slice();
      next[i] = Number(input.value);
      const clamped = clampClaim(next, view.counts);
      input.value = String(clamped[i]);
      onChange(clamped);
    });
    field.appendChild(input);
    wrap.appendChild(field);
  });
  return wrap;
}

function renderComposer(view: SessionView, composer: ComposerState, handlers: Handlers): HTMLElement {
  const panel = el("div", { class: "panel composer" });
  panel.appendChild(el("h3", {}, "Your move"));
  const disabled = !view.your_turn || view.phase !== "negotiating";
  const kinds: ActKind[] = ["propose", "insist", "agree", "disagree", "end"];
  const kindSelect = el("select", { id: "act-kind" }) as HTMLSelectElement;
  for (const kind of kinds) {
    const option = el("option", { value: kind }, kind) as HTMLOptionElement;
    if (kind === "agree" && !hasProposal(view)) option.disabled = true;
    kindSelect.appendChild(option);
  }
  kindSelect.value = composer.kind;
  kindSelect.addEventListener("change", () => {
    composer.kind = kindSelect.value as ActKind;
    steppers.style.display = needsClaim(composer.kind) ? "" : "none";
    preview.textContent = previewText();
  });
  panel.appendChild(kindSelect);

  const steppers = claimSteppers(view, composer.claim, (c) => {
    composer.claim = c;
    preview.textContent = previewText();
  });
  steppers.style.display = needsClaim(composer.kind) ? "" : "none";
  panel.appendChild(steppers);

  const previewText = () =>
    needsClaim(composer.kind)
      ? `That claim is worth ${shareValue(view.your_utilities, composer.claim)} points to you.`
      : "";
  const preview = el("p", { class: "hint" }, previewText());
  panel.appendChild(preview);

  const send = el("button", { id: "send-act" }, "Send") as HTMLButtonElement;
  send.disabled = disabled;
  send.addEventListener("click", () =>
    handlers.onAct(composer.kind, needsClaim(composer.kind) ? composer.claim : []),
  );
  panel.appendChild(send);
  return panel;
}

function needsClaim(kind: ActKind): boolean {
  return kind === "propose" || kind === "insist";
}

function renderSelection(view: SessionView, handlers: Handlers): HTMLElement {
  const panel = el("div", { class: "panel selection" });
  panel.appendChild(el("h3", {}, "Final selection"));
  panel.appendChild(
    el("p", {}, "The dialogue has ended. Choose what you take; if your selection conflicts with Alice's, you both score zero."),
  );
  const claim = [0, 0, 0];
  panel.appendChild(claimSteppers(view, claim, (c) => c.forEach((v, i) => (claim[i] = v))));
  const submit = el("button", { id: "send-selection" }, "Submit selection") as HTMLButtonElement;
  submit.addEventListener("click", () => handlers.onSelect(claim));
  panel.appendChild(submit);
  return panel;
}

function renderOutcome(view: SessionView): HTMLElement {
  const panel = el("div", { class: "panel outcome" });
  panel.appendChild(el("h3", {}, "Result"));
  const outcome = view.outcome!;
  const verdict = outcome.agreed ? "Deal!" : "No deal — conflicting selections.";
  panel.appendChild(el("p", { class: "verdict" }, verdict));
  panel.appendChild(el("p", {}, `You scored ${outcome.your_score} points; Alice scored ${outcome.agent_score}.`));
  return panel;
}

function renderSurvey(view: SessionView, questions: string[], draft: SurveyDraft, handlers: Handlers): HTMLElement {
  const panel = el("div", { class: "panel survey" });
  panel.appendChild(el("h3", {}, "Quick survey"));
  questions.slice(0, LIKERT_COUNT).forEach((question, i) => {
    const row = el("div", { class: "likert-row" });
    row.appendChild(el("span", {}, `${i + 1}. ${question}`));
    const group = el("span", { class: "likert" });
    for (let value = 1; value <= 5; value++) {
      const label = el("label", {}, String(value));
      const radio = el("input", {
        type: "radio",
        name: `q${i + 1}`,
        value: String(value),
      }) as HTMLInputElement;
      radio.checked = draft.likert[i] === value;
      radio.addEventListener("change", () => handlers.onLikert(i, value));
      label.prepend(radio);
      group.appendChild(label);
    }
    row.appendChild(group);
    panel.appendChild(row);
  });
  const strategy = el("textarea", { id: "q9", placeholder: questions[8] ?? "" }) as HTMLTextAreaElement;
  strategy.value = draft.strategy;
  strategy.addEventListener("input", () => handlers.onText("strategy", strategy.value));
  panel.appendChild(strategy);
  const comments = el("textarea", { id: "q10", placeholder: questions[9] ?? "" }) as HTMLTextAreaElement;
  comments.value = draft.comments;
  comments.addEventListener("input", () => handlers.onText("comments", comments.value));
  panel.appendChild(comments);
  const submit = el("button", { id: "send-survey" }, "Submit survey") as HTMLButtonElement;
  submit.addEventListener("click", handlers.onSurveySubmit);
  panel.appendChild(submit);
  return panel;
}

export function renderApp(
  root: HTMLElement,
  view: SessionView | null,
  step: string,
  questions: string[],
  draft: SurveyDraft,
  composer: ComposerState,
  error: string | null,
  handlers: Handlers,
): void {
  root.replaceChildren();
  const header = el("div", { class: "header" });
  header.appendChild(el("h2", {}, "Negotiate with Alice"));
  if (view?.practice) header.appendChild(el("span", { class: "badge" }, "practice round"));
  root.appendChild(header);

  if (error) root.appendChild(el("p", { class: "error", id: "error" }, error));

  if (step === "idle" || step === "quiz") {
    const intro = el("div", { class: "panel" });
    intro.appendChild(
      el(
        "p",
        {},
        "You and Alice split books, hats and balls. Each of you privately values the items; taking everything would be worth 10 points. Propose splits, agree, disagree, or end — then both of you pick what you take. Matching selections seal the deal.",
      ),
    );
    const start = el("button", { id: "next-step" }, step === "idle" ? "Start" : "Got it — continue") as HTMLButtonElement;
    start.addEventListener("click", handlers.onNext);
    intro.appendChild(start);
    root.appendChild(intro);
    return;
  }

  if (step === "done" || !view) {
    const thanks = el("div", { class: "panel" });
    thanks.appendChild(el("p", {}, "All negotiations complete. Thanks for participating!"));
    root.appendChild(thanks);
    return;
  }

  root.appendChild(renderItems(view));
  root.appendChild(renderTranscript(view));
  if (view.phase === "negotiating") {
    root.appendChild(renderComposer(view, composer, handlers));
  } else if (view.phase === "selecting") {
    root.appendChild(renderSelection(view, handlers));
  } else {
    root.appendChild(renderOutcome(view));
    if (view.phase === "surveying") {
      root.appendChild(renderSurvey(view, questions, draft, handlers));
    } else {
      const next = el("button", { id: "next-step" }, "Next negotiation") as HTMLButtonElement;
      next.addEventListener("click", handlers.onNext);
      root.appendChild(next);
    }
  }
}
