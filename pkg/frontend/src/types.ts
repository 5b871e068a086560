// Mirrors the arena service's human-visible session schema. The view never
// contains the opponent's utilities; the client type simply has no field for
// them, so nothing downstream can read or render one.

export type ActKind = "propose" | "insist" | "agree" | "disagree" | "end";

export interface TranscriptAct {
  who: "you" | "agent";
  kind: ActKind;
  alloc?: number[];
}

export type Phase = "negotiating" | "selecting" | "surveying" | "done";

export interface OutcomeView {
  agreed: boolean;
  pareto: boolean;
  your_score: number;
  agent_score: number;
  your_selection: number[];
  agent_selection: number[];
}

export interface SessionView {
  session_id: string;
  model_id: string;
  practice: boolean;
  phase: Phase;
  counts: number[];
  your_utilities: number[];
  your_turn: boolean;
  t_max: number;
  transcript: TranscriptAct[];
  outcome?: OutcomeView;
}

export interface StudyStep {
  step: "quiz" | "practice" | "negotiate" | "done";
  session?: SessionView;
  questions?: string[];
}

export interface ActBody {
  kind: ActKind;
  alloc?: number[];
}

export interface SurveyAnswers {
  q1: number;
  q2: number;
  q3: number;
  q4: number;
  q5: number;
  q6: number;
  q7: number;
  q8: number;
  q9: string;
  q10: string;
}

export const ITEM_NAMES = ["books", "hats", "balls"] as const;
