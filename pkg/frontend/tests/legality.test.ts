import { describe, expect, it } from "vitest";

import { checkAct, checkSelection, clampClaim, hasProposal, shareValue } from "../src/legality.js";
import type { SessionView } from "../src/types.js";

function view(overrides: Partial<SessionView> = {}): SessionView {
  return {
    session_id: "s",
    model_id: "m",
    practice: false,
    phase: "negotiating",
    counts: [2, 1, 3],
    your_utilities: [2, 0, 2],
    your_turn: true,
    t_max: 20,
    transcript: [],
    ...overrides,
  };
}

describe("checkAct", () => {
  it("accepts a claim within the counts", () => {
    expect(checkAct(view(), { kind: "propose", alloc: [2, 0, 3] }).ok).toBe(true);
  });

  it("rejects claims above the counts, naming the rule", () => {
    const verdict = checkAct(view(), { kind: "propose", alloc: [3, 0, 0] });
    expect(verdict.ok).toBe(false);
    expect(verdict.rule).toBe("allocation-bounds");
  });

  it("rejects negative and fractional claims", () => {
    expect(checkAct(view(), { kind: "insist", alloc: [-1, 0, 0] }).ok).toBe(false);
    expect(checkAct(view(), { kind: "insist", alloc: [0.5, 0, 0] }).ok).toBe(false);
  });

  it("rejects agree before any proposal", () => {
    const verdict = checkAct(view(), { kind: "agree" });
    expect(verdict.rule).toBe("agree-without-proposal");
  });

  it("allows agree once either side proposed", () => {
    const v = view({ transcript: [{ who: "agent", kind: "propose", alloc: [1, 0, 0] }] });
    expect(hasProposal(v)).toBe(true);
    expect(checkAct(v, { kind: "agree" }).ok).toBe(true);
  });

  it("rejects acting out of turn or phase", () => {
    expect(checkAct(view({ your_turn: false }), { kind: "end" }).rule).toBe("turn");
    expect(checkAct(view({ phase: "selecting" }), { kind: "end" }).rule).toBe("phase");
  });

  it("rejects a claim attached to a non-proposal", () => {
    expect(checkAct(view(), { kind: "agree", alloc: [0, 0, 0] }).rule).toBe("allocation-forbidden");
  });

  it("rejects proposals without a claim", () => {
    expect(checkAct(view(), { kind: "propose" }).rule).toBe("allocation-missing");
  });
});

describe("checkSelection", () => {
  it("bounds the selection by the counts", () => {
    const v = view({ phase: "selecting" });
    expect(checkSelection(v, [2, 1, 3]).ok).toBe(true);
    expect(checkSelection(v, [2, 2, 0]).rule).toBe("allocation-bounds");
  });

  it("requires the selecting phase", () => {
    expect(checkSelection(view(), [0, 0, 0]).rule).toBe("phase");
  });
});

describe("helpers", () => {
  it("clamps claims to the steppers' ranges", () => {
    expect(clampClaim([5, -2, 1.6], [2, 1, 3])).toEqual([2, 0, 2]);
  });

  it("prices a share with the private utilities", () => {
    expect(shareValue([2, 0, 2], [2, 1, 3])).toBe(10);
    expect(shareValue([2, 0, 2], [0, 1, 0])).toBe(0);
  });
});
