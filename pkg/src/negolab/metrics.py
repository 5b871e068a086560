"""Evaluation quantities: advantage, Pareto-optimality, agreement, novelty,
joint-outcome alternatives, and the fixed-context pairing harness."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import corpus as corpus_mod
from . import env, model as model_mod
from .corpus import DialogueRecord
from .model import PolicyModel


def advantage(records: Sequence[DialogueRecord]) -> float:
    """Mean of (seat A score - seat B score)."""
    if not records:
        raise ValueError("advantage needs at least one record")
    return float(np.mean([r.outcome.score_a - r.outcome.score_b for r in records]))


def agreement_rate(records: Sequence[DialogueRecord]) -> float:
    if not records:
        raise ValueError("agreement_rate needs at least one record")
    return float(np.mean([r.outcome.agreed for r in records]))


def pareto_rate(records: Sequence[DialogueRecord]) -> Optional[float]:
    """Pareto-optimal fraction among agreed negotiations; None if none agreed."""
    agreed = [r for r in records if r.outcome.agreed]
    if not agreed:
        return None
    return float(np.mean([r.outcome.pareto for r in agreed]))


def mean_length(records: Sequence[DialogueRecord]) -> float:
    if not records:
        raise ValueError("mean_length needs at least one record")
    return float(np.mean([len(r.transcript) for r in records]))


def novelty(records: Sequence[DialogueRecord], partner: PolicyModel) -> float:
    """One minus the grand mean probability of Alice's acts under the partner
    model (evaluated from Alice's seat), pooled over all acts of all records."""
    probs: list[float] = []
    for record in records:
        view = corpus_mod.seat_view(record.transcript, "A")
        stats = model_mod.position_stats(partner, view)
        probs.extend(np.exp(stats.log_prob[stats.is_own]))
    if not probs:
        raise ValueError("novelty needs at least one Alice act")
    return float(1.0 - np.mean(probs))


def joint_outcome_rates(records: Sequence[DialogueRecord]) -> tuple[float, float]:
    """(max-joint-score rate, same-score rate) over all records.

    A record counts toward joint-max when its score sum equals the best
    achievable sum for its context (brute force over every allocation),
    which requires agreement; same-score counts exact ties.
    """
    if not records:
        raise ValueError("joint_outcome_rates needs at least one record")
    joint = same = 0
    for r in records:
        total = r.outcome.score_a + r.outcome.score_b
        if r.outcome.agreed and total == env.max_joint_score(r.pair):
            joint += 1
        if r.outcome.score_a == r.outcome.score_b:
            same += 1
    n = len(records)
    return joint / n, same / n


@dataclass
class EvalReport:
    """Aggregate pairing evaluation with per-seed means and standard errors."""

    n_negotiations: int
    seeds: list[int]
    advantage: float
    pareto_rate: Optional[float]
    agreement_rate: float
    novelty: float
    joint_max_rate: float
    same_score_rate: float
    mean_length: float
    mean_reward: float
    per_seed: dict[str, list[float]] = field(default_factory=dict)
    stderr: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n_negotiations": self.n_negotiations,
            "seeds": self.seeds,
            "advantage": self.advantage,
            "pareto_rate": self.pareto_rate,
            "agreement_rate": self.agreement_rate,
            "novelty": self.novelty,
            "joint_max_rate": self.joint_max_rate,
            "same_score_rate": self.same_score_rate,
            "mean_length": self.mean_length,
            "mean_reward": self.mean_reward,
            "per_seed": self.per_seed,
            "stderr": self.stderr,
        }


def play_eval_episode(
    alice: PolicyModel,
    partner: PolicyModel,
    pair: env.ContextPair,
    rng: np.random.Generator,
    t_max: int = env.DEFAULT_T_MAX,
    greedy: bool = False,
) -> DialogueRecord:
    """One evaluation rollout, sampled (default) or greedy, no learning."""
    transcript = env.new_transcript(pair, t_max=t_max)
    sessions = {
        "A": model_mod.Session(alice, pair.context_for("A"), self_starts=pair.starter == "A"),
        "B": model_mod.Session(partner, pair.context_for("B"), self_starts=pair.starter == "B"),
    }
    while not transcript.terminated:
        seat = transcript.next_speaker
        probs = sessions[seat].distribution()
        if greedy:
            action_id = int(np.argmax(probs))
        else:
            action_id = int(rng.choice(model_mod.VOCAB_SIZE, p=probs))
        act = model_mod.id_to_act(action_id)
        transcript = env.apply_act(transcript, act)
        sessions["A"].observe(act, seat == "A")
        sessions["B"].observe(act, seat == "B")
    from . import training  # local import to avoid a cycle

    outcome = env.resolve_outcome(
        transcript,
        training._session_selection(sessions["A"], transcript, "A"),
        training._session_selection(sessions["B"], transcript, "B"),
    )
    return DialogueRecord(transcript=transcript, outcome=outcome)


def evaluate_pairing(
    alice: PolicyModel,
    partner: PolicyModel,
    n_contexts: int = 100,
    seeds: int = 20,
    rng: Optional[np.random.Generator] = None,
    t_max: int = env.DEFAULT_T_MAX,
    greedy: bool = False,
) -> EvalReport:
    """Roll Alice against the partner on a fixed context set, one pass per seed.

    The context set is sampled once from ``rng``; each seed replays all
    contexts with its own rollout randomness. All metrics are means over
    seeds with standard errors in ``stderr``.
    """
    if n_contexts <= 0:
        raise ValueError("n_contexts must be positive")
    if rng is None:
        rng = np.random.default_rng(0)
    pairs = [env.sample_context_pair(rng) for _ in range(n_contexts)]
    seed_list = [int(rng.integers(2**31 - 1)) for _ in range(seeds)]
    columns: dict[str, list[float]] = {
        "advantage": [],
        "pareto_rate": [],
        "agreement_rate": [],
        "novelty": [],
        "joint_max_rate": [],
        "same_score_rate": [],
        "mean_length": [],
        "mean_reward": [],
    }
    pareto_defined = True
    for seed in seed_list:
        ep_rng = np.random.default_rng(seed)
        records = [play_eval_episode(alice, partner, p, ep_rng, t_max=t_max, greedy=greedy) for p in pairs]
        joint, same = joint_outcome_rates(records)
        p_rate = pareto_rate(records)
        if p_rate is None:
            pareto_defined = False
        columns["advantage"].append(advantage(records))
        columns["pareto_rate"].append(p_rate if p_rate is not None else np.nan)
        columns["agreement_rate"].append(agreement_rate(records))
        columns["novelty"].append(novelty(records, partner))
        columns["joint_max_rate"].append(joint)
        columns["same_score_rate"].append(same)
        columns["mean_length"].append(mean_length(records))
        columns["mean_reward"].append(float(np.mean([r.outcome.score_a for r in records])))
    means = {k: float(np.nanmean(v)) for k, v in columns.items()}
    stderr = {
        k: float(np.nanstd(v, ddof=1) / np.sqrt(len(v))) if len(v) > 1 else 0.0
        for k, v in columns.items()
    }
    return EvalReport(
        n_negotiations=n_contexts * len(seed_list),
        seeds=seed_list,
        advantage=means["advantage"],
        pareto_rate=means["pareto_rate"] if pareto_defined else None,
        agreement_rate=means["agreement_rate"],
        novelty=means["novelty"],
        joint_max_rate=means["joint_max_rate"],
        same_score_rate=means["same_score_rate"],
        mean_length=means["mean_length"],
        mean_reward=means["mean_reward"],
        per_seed={k: [float(x) for x in v] for k, v in columns.items()},
        stderr=stderr,
    )
