// Client-side mirror of the server's act legality rules. Anything rejected
// here would be rejected by the service too, so illegal local state is never
// sent over the wire.

import type { ActBody, SessionView } from "./types.js";

export interface LegalityVerdict {
  ok: boolean;
  rule?: string;
  detail?: string;
}

export function hasProposal(view: SessionView): boolean {
  return view.transcript.some((a) => a.kind === "propose" || a.kind === "insist");
}

export function checkAct(view: SessionView, act: ActBody): LegalityVerdict {
  if (view.phase !== "negotiating") {
    return { ok: false, rule: "phase", detail: `session is ${view.phase}` };
  }
  if (!view.your_turn) {
    return { ok: false, rule: "turn", detail: "it is the agent's turn" };
  }
  if (act.kind === "propose" || act.kind === "insist") {
    if (!act.alloc || act.alloc.length !== 3) {
      return { ok: false, rule: "allocation-missing", detail: "a proposal needs a three-item claim" };
    }
    for (let i = 0; i < 3; i++) {
      const claim = act.alloc[i];
      if (!Number.isInteger(claim) || claim < 0 || claim > view.counts[i]) {
        return {
          ok: false,
          rule: "allocation-bounds",
          detail: `claim ${claim} outside 0..${view.counts[i]}`,
        };
      }
    }
    return { ok: true };
  }
  if (act.alloc) {
    return { ok: false, rule: "allocation-forbidden", detail: `${act.kind} takes no claim` };
  }
  if (act.kind === "agree" && !hasProposal(view)) {
    return { ok: false, rule: "agree-without-proposal", detail: "nothing has been proposed yet" };
  }
  return { ok: true };
}

export function clampClaim(alloc: number[], counts: number[]): number[] {
  return alloc.map((value, i) => Math.max(0, Math.min(Math.round(value), counts[i])));
}

export function checkSelection(view: SessionView, alloc: number[]): LegalityVerdict {
  if (view.phase !== "selecting") {
    return { ok: false, rule: "phase", detail: `session is ${view.phase}` };
  }
  if (alloc.length !== 3) {
    return { ok: false, rule: "allocation-missing", detail: "selection needs three item counts" };
  }
  for (let i = 0; i < 3; i++) {
    if (!Number.isInteger(alloc[i]) || alloc[i] < 0 || alloc[i] > view.counts[i]) {
      return { ok: false, rule: "allocation-bounds", detail: `take ${alloc[i]} outside 0..${view.counts[i]}` };
    }
  }
  return { ok: true };
}

export function shareValue(utilities: number[], alloc: number[]): number {
  return alloc.reduce((acc, a, i) => acc + a * utilities[i], 0);
}
