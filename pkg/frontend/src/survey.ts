// Post-negotiation survey: eight 5-point Likert items plus two free-text
// questions, exactly as served by the arena's /survey/questions endpoint.

import type { SurveyAnswers } from "./types.js";

export const LIKERT_COUNT = 8;

export interface SurveyDraft {
  likert: (number | null)[];
  strategy: string;
  comments: string;
}

export function emptyDraft(): SurveyDraft {
  return { likert: Array(LIKERT_COUNT).fill(null), strategy: "", comments: "" };
}

export function setLikert(draft: SurveyDraft, index: number, value: number): SurveyDraft {
  if (index < 0 || index >= LIKERT_COUNT) throw new Error(`no Likert item ${index}`);
  if (!Number.isInteger(value) || value < 1 || value > 5) {
    throw new Error(`Likert answers lie in 1..5, got ${value}`);
  }
  const likert = draft.likert.slice();
  likert[index] = value;
  return { ...draft, likert };
}

export function missingItems(draft: SurveyDraft): number[] {
  const missing: number[] = [];
  draft.likert.forEach((v, i) => {
    if (v === null) missing.push(i + 1);
  });
  return missing;
}

export function isComplete(draft: SurveyDraft): boolean {
  return missingItems(draft).length === 0;
}

export function toAnswers(draft: SurveyDraft): SurveyAnswers {
  const missing = missingItems(draft);
  if (missing.length > 0) {
    throw new Error(`unanswered Likert items: ${missing.join(", ")}`);
  }
  const [q1, q2, q3, q4, q5, q6, q7, q8] = draft.likert as number[];
  return { q1, q2, q3, q4, q5, q6, q7, q8, q9: draft.strategy, q10: draft.comments };
}
