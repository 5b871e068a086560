"""Negotiation datasets: synthetic generation, quality filtering, persistence.

The synthetic corpus replaces a human-human dataset with rollouts between
scripted bargainers of three styles:

* ``compromiser`` — opens with an efficient high-value claim, concedes step
  by step, accepts offers above a declining threshold, occasionally repeats
  itself, walks away from stalled dialogues.
* ``agreer`` — opens with a naive half split and accepts whatever is on the
  table, often re-agreeing a few times before ending.
* ``ultimatum`` — states one selfish claim, insists on it a couple of times
  and then ends the dialogue.

Filtering by unique-act ratio (< threshold keeps the repetitive dialogues)
carves a low-quality subset out of the full corpus.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import env
from .env import (
    ActKind,
    Allocation,
    Context,
    ContextPair,
    DialogueAct,
    ItemCounts,
    Outcome,
    Transcript,
    Utilities,
)


@dataclass(frozen=True)
class DialogueRecord:
    """A finished negotiation: transcript plus resolved outcome."""

    transcript: Transcript
    outcome: Outcome

    @property
    def pair(self) -> ContextPair:
        return self.transcript.pair

    def validate(self) -> None:
        """Recompute the outcome through the rules engine; raise on mismatch."""
        recomputed = env.resolve_outcome(
            self.transcript, self.outcome.selection_a, self.outcome.selection_b
        )
        if recomputed != self.outcome:
            raise ValueError(f"stored outcome {self.outcome} != recomputed {recomputed}")


@dataclass
class Corpus:
    records: list[DialogueRecord]
    provenance: str = "mixed"

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class PerspectiveExample:
    """One agent's view of a dialogue: own context, role-marked acts, target share.

    ``acts`` holds (is_own, act) pairs in dialogue order. ``target`` is this
    agent's final selection; it is None for in-flight prefixes. ``starts_own``
    records whether this agent opens the dialogue (needed when ``acts`` is
    still empty; otherwise it is implied by the first role marker).
    """

    seat: str
    context: Context
    acts: tuple[tuple[bool, DialogueAct], ...]
    target: Optional[Allocation] = None
    starts_own: Optional[bool] = None

    @property
    def counts(self) -> ItemCounts:
        return self.context.counts


def seat_view(transcript: Transcript, seat: str) -> PerspectiveExample:
    """Project a (possibly in-flight) transcript onto one seat, no target."""
    acts = tuple((who == seat, act) for who, act in transcript.acts)
    return PerspectiveExample(
        seat=seat,
        context=transcript.pair.context_for(seat),
        acts=acts,
        starts_own=transcript.pair.starter == seat,
    )


def perspectives(record: DialogueRecord) -> tuple[PerspectiveExample, PerspectiveExample]:
    """The two training examples of a dialogue, one per agent."""
    out = record.outcome
    views = []
    for seat, target in (("A", out.selection_a), ("B", out.selection_b)):
        base = seat_view(record.transcript, seat)
        views.append(
            PerspectiveExample(
                seat=seat,
                context=base.context,
                acts=base.acts,
                target=target,
                starts_own=base.starts_own,
            )
        )
    return views[0], views[1]


def reconstruct_transcript(example: PerspectiveExample, pair: ContextPair) -> Transcript:
    """Rebuild the shared transcript from one perspective (rollout-validated)."""
    t = env.new_transcript(pair, t_max=max(env.DEFAULT_T_MAX, len(example.acts)))
    for is_own, act in example.acts:
        expected = example.seat if is_own else env.other_seat(example.seat)
        if t.next_speaker != expected:
            raise ValueError("perspective roles conflict with turn alternation")
        t = env.apply_act(t, act)
    return t


def unique_act_ratio(record: DialogueRecord) -> float:
    """Distinct acts / total acts; speaker ignored, allocation part of identity."""
    acts = [act for _, act in record.transcript.acts]
    if not acts:
        raise ValueError("unique_act_ratio is undefined for an empty transcript")
    return len(set(acts)) / len(acts)


def filter_by_quality(corpus: Corpus, threshold: float) -> Corpus:
    """Keep the repetitive records: unique_act_ratio strictly below threshold."""
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must lie in (0, 1], got {threshold}")
    kept = [r for r in corpus.records if unique_act_ratio(r) < threshold]
    if not kept:
        raise ValueError(
            f"no records below unique-act ratio {threshold}; generate a larger or more repetitive source corpus"
        )
    return Corpus(records=kept, provenance=f"filtered-low({threshold})")


@dataclass(frozen=True)
class CorpusStats:
    mean_length: float
    mean_unique_ratio: float
    mean_advantage: float
    pareto_rate: float
    agreement_rate: float
    act_histogram: dict[str, float] = field(hash=False, default_factory=dict)


def corpus_stats(corpus: Corpus) -> CorpusStats:
    if not corpus.records:
        raise ValueError("cannot compute statistics of an empty corpus")
    lengths, ratios, advantages = [], [], []
    agreed = pareto_agreed = 0
    kind_counts: dict[str, int] = {k.value: 0 for k in ActKind}
    total_acts = 0
    for rec in corpus.records:
        lengths.append(len(rec.transcript))
        ratios.append(unique_act_ratio(rec))
        advantages.append(rec.outcome.score_a - rec.outcome.score_b)
        if rec.outcome.agreed:
            agreed += 1
            pareto_agreed += rec.outcome.pareto
        for _, act in rec.transcript.acts:
            kind_counts[act.kind.value] += 1
            total_acts += 1
    n = len(corpus.records)
    return CorpusStats(
        mean_length=float(np.mean(lengths)),
        mean_unique_ratio=float(np.mean(ratios)),
        mean_advantage=float(np.mean(advantages)),
        pareto_rate=pareto_agreed / agreed if agreed else 0.0,
        agreement_rate=agreed / n,
        act_histogram={k: c / total_acts for k, c in kind_counts.items()},
    )


# ---------------------------------------------------------------------------
# Scripted bargainers
# ---------------------------------------------------------------------------


class ScriptedPolicy:
    """Per-dialogue stateful rule policy for one seat."""

    def act(self, transcript: Transcript, seat: str, rng: np.random.Generator) -> DialogueAct:
        raise NotImplementedError

    def select(self, transcript: Transcript, seat: str) -> Allocation:
        deal = env.standing_agreement(transcript)
        if deal is not None:
            proposer, claim = deal
            if proposer == seat:
                return claim
            return complement(transcript.counts, claim)
        # no deal: grab everything, guaranteeing the conflict scores zero
        return Allocation(*transcript.counts)


def complement(counts: ItemCounts, claim: Allocation) -> Allocation:
    return Allocation(*(c - x for c, x in zip(counts, claim)))


def own_value(context: Context, alloc: Allocation) -> int:
    return env.dot(context.utilities, alloc)


def offered_share_value(transcript: Transcript, seat: str, context: Context) -> Optional[int]:
    """Value to `seat` of the partner's most recent claim, if any."""
    for who, act in reversed(transcript.acts):
        if act.kind in env.PROPOSAL_KINDS and who != seat:
            assert act.allocation is not None
            return own_value(context, complement(transcript.counts, act.allocation))
    return None


def polite_claim(counts: ItemCounts, utilities: Utilities) -> Allocation:
    """All valued items except one unit of the cheapest: selfish but softened."""
    claim = [c if u > 0 else 0 for c, u in zip(counts, utilities)]
    valued = [i for i, u in enumerate(utilities) if u > 0 and claim[i] > 0]
    if valued:
        cheapest = min(valued, key=lambda i: utilities[i])
        claim[cheapest] -= 1
    return Allocation(*claim)


def partner_badgering(transcript: Transcript, seat: str, repeats: int = 3) -> bool:
    """True when the partner's last ``repeats`` proposals all state one claim."""
    claims = [
        act.allocation
        for who, act in transcript.acts
        if who != seat and act.kind in env.PROPOSAL_KINDS
    ]
    return len(claims) >= repeats and len(set(claims[-repeats:])) == 1


def efficient_claim(context: Context, target_value: int) -> Allocation:
    """Smallest claim (fewest items) worth at least ``target_value`` points.

    Falls back to the highest-value claim when the target is unreachable.
    Ties prefer higher value, then enumeration order.
    """
    best: Optional[tuple[int, int, Allocation]] = None
    fallback: Optional[tuple[int, Allocation]] = None
    for alloc in env.enumerate_allocations(context.counts):
        value = own_value(context, alloc)
        items = sum(alloc)
        if fallback is None or value > fallback[0]:
            fallback = (value, alloc)
        if value >= target_value:
            key = (items, -value)
            if best is None or key < (best[0], best[1]):
                best = (items, -value, alloc)
    if best is not None:
        return best[2]
    assert fallback is not None
    return fallback[1]


class Compromiser(ScriptedPolicy):
    """Efficient opener, stepwise concessions, declining acceptance bar."""

    def __init__(self, rng: np.random.Generator):
        self.accept_start = int(rng.integers(7, 10))  # 7..9
        self.accept_floor = int(rng.integers(4, 7))  # 4..6
        self.concession = int(rng.integers(1, 3))  # 1..2 points per concession
        self.p_repeat = float(rng.uniform(0.55, 0.85))
        self.p_disagree = 0.25
        self.p_confirm = float(rng.uniform(0.55, 0.80))  # re-agree once a deal stands
        self.patience = int(rng.integers(8, 14))  # own turns before walking away
        self.rounds = 0  # concessions made (repeats do not count)
        self.turns = 0
        self.run_length = 0  # consecutive statements of the current claim
        self.last_claim: Optional[Allocation] = None

    def act(self, transcript: Transcript, seat: str, rng: np.random.Generator) -> DialogueAct:
        if env.standing_agreement(transcript) is not None:
            return env.AGREE if rng.random() < self.p_confirm else env.END
        self.turns += 1
        context = transcript.pair.context_for(seat)
        offered = offered_share_value(transcript, seat, context)
        threshold = max(self.accept_floor, self.accept_start - self.rounds)
        if offered is not None and offered >= threshold:
            return env.AGREE
        if offered is not None and offered < threshold and partner_badgering(transcript, seat):
            return env.END
        if self.turns > self.patience:
            return env.END
        if offered is not None and offered < 3 and rng.random() < self.p_disagree:
            return env.DISAGREE
        if self.last_claim is not None and self.run_length < 2 and rng.random() < self.p_repeat:
            self.run_length += 1
            return DialogueAct(ActKind.INSIST, self.last_claim)
        target = max(self.accept_floor, 10 - self.concession * self.rounds)
        claim = efficient_claim(context, target)
        self.rounds += 1
        self.run_length = 1
        self.last_claim = claim
        return DialogueAct(ActKind.PROPOSE, claim)


class Agreer(ScriptedPolicy):
    """Pushover: opens with its valued items minus a token concession, balks
    at insultingly low offers a couple of times, then takes what is offered."""

    def __init__(self, rng: np.random.Generator):
        self.p_end_after_deal = float(rng.uniform(0.04, 0.12))
        self.bar = int(rng.integers(1, 4))  # minimal share value before balking
        self.refusals_left = int(rng.integers(2, 6))
        self.proposed = False

    def act(self, transcript: Transcript, seat: str, rng: np.random.Generator) -> DialogueAct:
        if env.standing_agreement(transcript) is not None:
            if rng.random() < self.p_end_after_deal:
                return env.END
            return env.AGREE
        context = transcript.pair.context_for(seat)
        offered = offered_share_value(transcript, seat, context)
        if offered is None:
            claim = polite_claim(transcript.counts, context.utilities)
            kind = ActKind.INSIST if self.proposed else ActKind.PROPOSE
            self.proposed = True
            return DialogueAct(kind, claim)
        if offered >= self.bar or (self.refusals_left <= 0 and offered >= 1):
            return env.AGREE
        if self.refusals_left <= 0:
            return env.END  # worn down but not for literally nothing
        self.refusals_left -= 1
        return env.DISAGREE


class Ultimatum(ScriptedPolicy):
    """Take-it-or-leave-it: states one selfish claim until someone caves."""

    def __init__(self, rng: np.random.Generator):
        self.claim_everything = rng.random() < 0.2
        self.p_confirm = float(rng.uniform(0.45, 0.75))
        self.patience = int(rng.integers(5, 8))  # own statements of the claim
        self.stated = 0
        self.claim: Optional[Allocation] = None

    def act(self, transcript: Transcript, seat: str, rng: np.random.Generator) -> DialogueAct:
        if env.standing_agreement(transcript) is not None:
            return env.AGREE if rng.random() < self.p_confirm else env.END
        context = transcript.pair.context_for(seat)
        offered = offered_share_value(transcript, seat, context)
        if offered is not None and offered >= 9:
            return env.AGREE
        if self.stated >= self.patience:
            return env.END
        if self.claim is None:
            counts = transcript.counts
            if self.claim_everything:
                self.claim = Allocation(*counts)
            else:
                self.claim = Allocation(
                    *(c if u > 0 else 0 for c, u in zip(counts, context.utilities))
                )
        self.stated += 1
        kind = ActKind.PROPOSE if self.stated == 1 else ActKind.INSIST
        return DialogueAct(kind, self.claim)


STYLE_FACTORIES: dict[str, Callable[[np.random.Generator], ScriptedPolicy]] = {
    "compromiser": Compromiser,
    "agreer": Agreer,
    "ultimatum": Ultimatum,
}

DEFAULT_STYLE_WEIGHTS = {"compromiser": 0.45, "agreer": 0.40, "ultimatum": 0.15}


def play_scripted_dialogue(
    pair: ContextPair,
    policy_a: ScriptedPolicy,
    policy_b: ScriptedPolicy,
    rng: np.random.Generator,
    t_max: int = env.DEFAULT_T_MAX,
) -> DialogueRecord:
    transcript = env.new_transcript(pair, t_max=t_max)
    policies = {"A": policy_a, "B": policy_b}
    while not transcript.terminated:
        seat = transcript.next_speaker
        act = policies[seat].act(transcript, seat, rng)
        transcript = env.apply_act(transcript, act)
    outcome = env.resolve_outcome(
        transcript,
        policy_a.select(transcript, "A"),
        policy_b.select(transcript, "B"),
    )
    return DialogueRecord(transcript=transcript, outcome=outcome)


def generate_synthetic_corpus(
    rng: np.random.Generator,
    n_dialogues: int,
    style_weights: Optional[dict[str, float]] = None,
    t_max: int = env.DEFAULT_T_MAX,
) -> Corpus:
    """Roll out ``n_dialogues`` scripted negotiations.

    Each seat's style is drawn independently from the (normalized) weights,
    so cross-style matchups (pushovers facing hardliners, etc.) occur.
    """
    if n_dialogues <= 0:
        raise ValueError("n_dialogues must be positive")
    weights = dict(style_weights or DEFAULT_STYLE_WEIGHTS)
    names = sorted(weights)
    probs = np.array([weights[n] for n in names], dtype=float)
    if probs.sum() <= 0:
        raise ValueError("style weights must sum to a positive value")
    probs = probs / probs.sum()
    records = []
    for _ in range(n_dialogues):
        pair = env.sample_context_pair(rng)
        policy_a = STYLE_FACTORIES[names[int(rng.choice(len(names), p=probs))]](rng)
        policy_b = STYLE_FACTORIES[names[int(rng.choice(len(names), p=probs))]](rng)
        record = play_scripted_dialogue(pair, policy_a, policy_b, rng, t_max=t_max)
        record.validate()
        records.append(record)
    return Corpus(records=records, provenance="synthetic-high")


# ---------------------------------------------------------------------------
# Persistence (JSON lines; scores recomputed on load, never trusted)
# ---------------------------------------------------------------------------


def _act_to_json(who: str, act: DialogueAct) -> dict:
    obj: dict = {"who": who, "kind": act.kind.value}
    if act.allocation is not None:
        obj["alloc"] = list(act.allocation)
    return obj


def record_to_json(record: DialogueRecord) -> dict:
    pair = record.pair
    return {
        "counts": list(pair.counts),
        "u_a": list(pair.utilities_a),
        "u_b": list(pair.utilities_b),
        "starter": pair.starter,
        "acts": [_act_to_json(who, act) for who, act in record.transcript.acts],
        "sel_a": list(record.outcome.selection_a),
        "sel_b": list(record.outcome.selection_b),
    }


def record_from_json(obj: dict) -> DialogueRecord:
    pair = ContextPair(
        counts=ItemCounts(*obj["counts"]),
        utilities_a=Utilities(*obj["u_a"]),
        utilities_b=Utilities(*obj["u_b"]),
        starter=obj["starter"],
    )
    acts = obj["acts"]
    # an end-act dialogue loads with the default cap; otherwise it must have
    # terminated by hitting the cap, so the cap equals its length
    ended = bool(acts) and acts[-1]["kind"] == ActKind.END.value
    t_max = env.DEFAULT_T_MAX if ended else max(len(acts), 1)
    transcript = env.new_transcript(pair, t_max=t_max)
    for entry in acts:
        if entry["who"] != transcript.next_speaker:
            raise ValueError(f"act by {entry['who']} out of turn")
        kind = ActKind(entry["kind"])
        alloc = Allocation(*entry["alloc"]) if "alloc" in entry else None
        transcript = env.apply_act(transcript, DialogueAct(kind, alloc))
    if not transcript.terminated:
        raise ValueError("record does not terminate (no end act and below the turn cap)")
    outcome = env.resolve_outcome(
        transcript, Allocation(*obj["sel_a"]), Allocation(*obj["sel_b"])
    )
    return DialogueRecord(transcript=transcript, outcome=outcome)


def save_corpus(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in corpus.records:
            fh.write(json.dumps(record_to_json(record), separators=(",", ":")) + "\n")


def load_corpus(path, provenance: str = "mixed") -> Corpus:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                records.append(record_from_json(obj))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}: parse error at line {lineno}: {exc}") from exc
    return Corpus(records=records, provenance=provenance)
