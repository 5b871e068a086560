"""Rules engine for the three-item object-division bargaining game.

Two agents split books, hats and balls. Each agent has private per-item
utilities scaled so that taking everything is worth exactly 10 points.
Agents alternate coarse dialogue acts (propose / insist / agree / disagree /
end) until one of them ends the dialogue or the turn cap is reached, then
both submit final selections. Compatible selections score the deal; anything
else scores (0, 0).

Everything here is a pure function over immutable values plus an explicit
numpy ``Generator``; nothing mutates shared state.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from enum import Enum
from functools import lru_cache
from typing import Iterable, NamedTuple, Optional

import numpy as np

MAX_ITEM_COUNT = 4
TOTAL_POINTS = 10
DEFAULT_T_MAX = 20

SAMPLING_GUARD = 10_000


class ItemCounts(NamedTuple):
    books: int
    hats: int
    balls: int


class Utilities(NamedTuple):
    books: int
    hats: int
    balls: int


class Allocation(NamedTuple):
    books: int
    hats: int
    balls: int


def dot(u: Utilities, a: Iterable[int]) -> int:
    return sum(ui * ai for ui, ai in zip(u, a))


class ActKind(str, Enum):
    PROPOSE = "propose"
    INSIST = "insist"
    AGREE = "agree"
    DISAGREE = "disagree"
    END = "end"


PROPOSAL_KINDS = (ActKind.PROPOSE, ActKind.INSIST)


@dataclass(frozen=True)
class DialogueAct:
    """One negotiation move; proposals carry the speaker's claimed share."""

    kind: ActKind
    allocation: Optional[Allocation] = None

    def __post_init__(self) -> None:
        if self.kind in PROPOSAL_KINDS:
            if self.allocation is None:
                raise ValueError(f"{self.kind.value} requires an allocation")
        elif self.allocation is not None:
            raise ValueError(f"{self.kind.value} must not carry an allocation")


def propose(books: int, hats: int, balls: int) -> DialogueAct:
    return DialogueAct(ActKind.PROPOSE, Allocation(books, hats, balls))


def insist(books: int, hats: int, balls: int) -> DialogueAct:
    return DialogueAct(ActKind.INSIST, Allocation(books, hats, balls))


AGREE = DialogueAct(ActKind.AGREE)
DISAGREE = DialogueAct(ActKind.DISAGREE)
END = DialogueAct(ActKind.END)


@dataclass(frozen=True)
class Context:
    """One agent's private view: shared counts plus own utilities."""

    counts: ItemCounts
    utilities: Utilities

    def __post_init__(self) -> None:
        validate_counts(self.counts)
        validate_utilities(self.counts, self.utilities)


@dataclass(frozen=True)
class ContextPair:
    counts: ItemCounts
    utilities_a: Utilities
    utilities_b: Utilities
    starter: str  # "A" or "B"

    def __post_init__(self) -> None:
        validate_counts(self.counts)
        validate_utilities(self.counts, self.utilities_a)
        validate_utilities(self.counts, self.utilities_b)
        if self.starter not in ("A", "B"):
            raise ValueError(f"starter must be 'A' or 'B', got {self.starter!r}")

    def context_for(self, seat: str) -> Context:
        return Context(self.counts, self.utilities_a if seat == "A" else self.utilities_b)


def validate_counts(counts: ItemCounts) -> None:
    if not all(1 <= c <= MAX_ITEM_COUNT for c in counts):
        raise ValueError(f"item counts must lie in 1..{MAX_ITEM_COUNT}: {counts}")


def validate_utilities(counts: ItemCounts, utilities: Utilities) -> None:
    if not all(0 <= u <= TOTAL_POINTS for u in utilities):
        raise ValueError(f"utilities must lie in 0..{TOTAL_POINTS}: {utilities}")
    total = dot(utilities, counts)
    if total != TOTAL_POINTS:
        raise ValueError(f"utilities must value the full pie at {TOTAL_POINTS} points, got {total}")


def validate_allocation(counts: ItemCounts, allocation: Allocation) -> None:
    if not all(0 <= a <= c for a, c in zip(allocation, counts)):
        raise ValueError(f"allocation {allocation} exceeds counts {counts}")


class IllegalActError(ValueError):
    """An act that violates a turn-taking or legality rule; names the rule."""

    def __init__(self, rule: str, detail: str):
        self.rule = rule
        super().__init__(f"{rule}: {detail}")


@dataclass(frozen=True)
class Transcript:
    """Ordered (speaker, act) pairs under strict turn alternation."""

    pair: ContextPair
    acts: tuple[tuple[str, DialogueAct], ...] = ()
    terminated: bool = False
    t_max: int = DEFAULT_T_MAX

    def __len__(self) -> int:
        return len(self.acts)

    @property
    def counts(self) -> ItemCounts:
        return self.pair.counts

    @property
    def next_speaker(self) -> str:
        if not self.acts:
            return self.pair.starter
        return other_seat(self.acts[-1][0])

    def acts_by(self, seat: str) -> list[DialogueAct]:
        return [act for who, act in self.acts if who == seat]

    def has_proposal(self) -> bool:
        return any(act.kind in PROPOSAL_KINDS for _, act in self.acts)


def other_seat(seat: str) -> str:
    return "B" if seat == "A" else "A"


def new_transcript(pair: ContextPair, t_max: int = DEFAULT_T_MAX) -> Transcript:
    return Transcript(pair=pair, t_max=t_max)


@dataclass(frozen=True)
class Outcome:
    selection_a: Allocation
    selection_b: Allocation
    agreed: bool
    score_a: int
    score_b: int
    pareto: bool


def sample_context_pair(rng: np.random.Generator) -> ContextPair:
    """Draw shared counts, two valid utility vectors and a random starter.

    Counts are uniform over the vectors in {1..4}^3 that admit at least one
    integer utility vector valuing the pie at exactly 10 (the all-3 and all-4
    count vectors admit none); utilities are uniform over the admissible set
    for the drawn counts, found by enumeration.
    """
    for _ in range(SAMPLING_GUARD):
        counts = ItemCounts(*(int(rng.integers(1, MAX_ITEM_COUNT + 1)) for _ in range(3)))
        options = feasible_utilities(counts)
        if not options:
            continue
        u_a = options[int(rng.integers(len(options)))]
        u_b = options[int(rng.integers(len(options)))]
        starter = "A" if rng.integers(2) == 0 else "B"
        return ContextPair(counts, u_a, u_b, starter)
    raise RuntimeError(f"context sampling failed after {SAMPLING_GUARD} attempts")


@lru_cache(maxsize=None)
def feasible_utilities(counts: ItemCounts) -> tuple[Utilities, ...]:
    """All integer utility vectors in {0..10}^3 with dot(u, counts) == 10."""
    found = []
    for u in itertools.product(range(TOTAL_POINTS + 1), repeat=3):
        if sum(ui * ci for ui, ci in zip(u, counts)) == TOTAL_POINTS:
            found.append(Utilities(*u))
    return tuple(found)


def enumerate_allocations(counts: ItemCounts) -> list[Allocation]:
    """Every componentwise split 0..count, in lexicographic order."""
    return [
        Allocation(b, h, l)
        for b in range(counts.books + 1)
        for h in range(counts.hats + 1)
        for l in range(counts.balls + 1)
    ]


def legal_acts(transcript: Transcript) -> list[DialogueAct]:
    """All acts the next speaker may play, in a stable order.

    Proposals and insists are legal for any allocation within the counts.
    Agree is only legal once some proposal exists to agree to; disagree and
    end are always available.
    """
    if transcript.terminated:
        raise IllegalActError("terminated", "no acts are legal in a terminated transcript")
    acts: list[DialogueAct] = []
    for alloc in enumerate_allocations(transcript.counts):
        acts.append(DialogueAct(ActKind.PROPOSE, alloc))
    for alloc in enumerate_allocations(transcript.counts):
        acts.append(DialogueAct(ActKind.INSIST, alloc))
    if transcript.has_proposal():
        acts.append(AGREE)
    acts.append(DISAGREE)
    acts.append(END)
    return acts


def check_act_legal(transcript: Transcript, act: DialogueAct) -> None:
    if transcript.terminated:
        raise IllegalActError("terminated", "cannot act in a terminated transcript")
    if act.kind in PROPOSAL_KINDS:
        assert act.allocation is not None
        if not all(0 <= a <= c for a, c in zip(act.allocation, transcript.counts)):
            raise IllegalActError(
                "allocation-bounds",
                f"claim {act.allocation} exceeds item counts {transcript.counts}",
            )
    elif act.kind is ActKind.AGREE and not transcript.has_proposal():
        raise IllegalActError("agree-without-proposal", "nothing has been proposed yet")


def apply_act(transcript: Transcript, act: DialogueAct) -> Transcript:
    """Append the next speaker's act; terminate on ``end`` or at the turn cap."""
    check_act_legal(transcript, act)
    acts = transcript.acts + ((transcript.next_speaker, act),)
    terminated = act.kind is ActKind.END or len(acts) >= transcript.t_max
    return replace(transcript, acts=acts, terminated=terminated)


def standing_agreement(transcript: Transcript) -> Optional[tuple[str, Allocation]]:
    """The deal on the table, if the last proposal was answered with agree.

    Returns (proposer seat, proposer's claimed allocation). A proposal made
    after an agree supersedes the old deal and stands unanswered.
    """
    last_proposal: Optional[tuple[str, Allocation]] = None
    agreed = False
    for who, act in transcript.acts:
        if act.kind in PROPOSAL_KINDS:
            assert act.allocation is not None
            last_proposal = (who, act.allocation)
            agreed = False
        elif act.kind is ActKind.AGREE and last_proposal is not None:
            agreed = True
    return last_proposal if agreed else None


def resolve_outcome(
    transcript: Transcript, selection_a: Allocation, selection_b: Allocation
) -> Outcome:
    """Score the final selections of a terminated dialogue.

    The deal holds only if the selections exactly partition the items;
    otherwise both agents score zero. Pareto-optimality is evaluated on the
    realized scores either way.
    """
    if not transcript.terminated:
        raise ValueError("cannot resolve an outcome before the dialogue terminates")
    pair = transcript.pair
    validate_allocation(pair.counts, selection_a)
    validate_allocation(pair.counts, selection_b)
    agreed = all(a + b == c for a, b, c in zip(selection_a, selection_b, pair.counts))
    if agreed:
        score_a = dot(pair.utilities_a, selection_a)
        score_b = dot(pair.utilities_b, selection_b)
    else:
        score_a = score_b = 0
    pareto = is_pareto_optimal((score_a, score_b), pair)
    return Outcome(selection_a, selection_b, agreed, score_a, score_b, pareto)


@lru_cache(maxsize=4096)
def _score_table(counts: ItemCounts, u_a: Utilities, u_b: Utilities) -> tuple[tuple[int, int], ...]:
    """Scores (r_a, r_b) of every full allocation (A's share o, B gets the rest)."""
    rows = []
    for o in enumerate_allocations(counts):
        rest = Allocation(*(c - x for c, x in zip(counts, o)))
        rows.append((dot(u_a, o), dot(u_b, rest)))
    return tuple(rows)


def achievable_scores(pair: ContextPair) -> tuple[tuple[int, int], ...]:
    return _score_table(pair.counts, pair.utilities_a, pair.utilities_b)


def is_pareto_optimal(scores: tuple[int, int], pair: ContextPair) -> bool:
    """True iff no full allocation weakly improves both scores, strictly one.

    Exhaustive scan over every split of the items.
    """
    r_a, r_b = scores
    for s_a, s_b in achievable_scores(pair):
        if s_a >= r_a and s_b >= r_b and (s_a > r_a or s_b > r_b):
            return False
    return True


def max_joint_score(pair: ContextPair) -> int:
    """Largest achievable r_a + r_b over all full allocations."""
    return max(s_a + s_b for s_a, s_b in achievable_scores(pair))
