"""Training regimes: supervised act imitation, REINFORCE self-play, and
interleaved RL+SL against a frozen partner.

The REINFORCE credit for an act at (1-based) position t of a length-T
negotiation is gamma^(T-t) * (reward - baseline), so later acts carry more
credit; the baseline is the running mean of (variant-adjusted) rewards over
all completed negotiations so far.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import corpus as corpus_mod
from . import env, model as model_mod
from .corpus import Corpus, DialogueRecord, PerspectiveExample
from .env import Allocation, ContextPair, Outcome, Transcript
from .model import PolicyModel

log = logging.getLogger(__name__)

REWARD_VARIANTS = ("plain", "pareto-bonus", "pareto-bonus-normalized")


@dataclass
class SLConfig:
    alpha: float = 0.5  # selection-loss weight
    batch_size: int = 16
    epochs: int = 10
    lr: float = 0.5
    anneal: float = 0.5  # lr multiplier on epoch plateau
    clip_norm: float = 1.0
    momentum: float = 0.9

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")


@dataclass
class RLConfig:
    gamma: float = 0.95
    lr: float = 0.12
    lr_anneal: float = 0.7  # per-epoch learning-rate multiplier
    reward_variant: str = "plain"
    clip_norm: float = 1.0
    momentum: float = 0.9

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.reward_variant not in REWARD_VARIANTS:
            raise ValueError(f"unknown reward variant {self.reward_variant!r}")


@dataclass
class Schedule:
    """Interleaving plan: one SL pass after every ``period`` RL episodes."""

    total_episodes: int
    period: Optional[int] = None  # None = pure RL

    def __post_init__(self) -> None:
        if self.period is not None and not 1 <= self.period <= self.total_episodes:
            raise ValueError("period must lie in 1..total_episodes")


@dataclass
class BaselineState:
    """Exact running mean of the rewards fed so far."""

    total: float = 0.0
    count: int = 0

    @property
    def mean(self) -> float:
        return self.total / self.count if self.count else 0.0

    def update(self, reward: float) -> None:
        self.total += reward
        self.count += 1


# ---------------------------------------------------------------------------
# Supervised learning (act NLL + alpha * selection NLL)
# ---------------------------------------------------------------------------


def sl_loss(model: PolicyModel, example: PerspectiveExample, alpha: float) -> float:
    loss, _ = sl_loss_and_grads(model, example, alpha)
    return loss


def sl_loss_and_grads(
    model: PolicyModel, example: PerspectiveExample, alpha: float
) -> tuple[float, dict[str, np.ndarray]]:
    batch = model_mod.build_batch([example], sel_weight=alpha)
    return model_mod.loss_and_grads(model, batch)


def sl_train(
    model: PolicyModel,
    corpus: Corpus,
    config: SLConfig,
    rng: np.random.Generator,
) -> tuple[PolicyModel, list[float]]:
    """Minibatch SGD over shuffled perspectives; returns per-epoch mean loss."""
    if not corpus.records:
        raise ValueError("cannot train on an empty corpus")
    examples: list[PerspectiveExample] = []
    for record in corpus.records:
        examples.extend(corpus_mod.perspectives(record))
    lr = config.lr
    best = np.inf
    curve: list[float] = []
    for _ in range(config.epochs):
        order = rng.permutation(len(examples))
        total = 0.0
        batches = 0
        for start in range(0, len(order), config.batch_size):
            chunk = [examples[i] for i in order[start : start + config.batch_size]]
            batch = model_mod.build_batch(chunk, sel_weight=config.alpha)
            loss, grads = model_mod.loss_and_grads(model, batch)
            if not np.isfinite(loss):
                raise FloatingPointError("supervised training diverged (non-finite loss)")
            model_mod.apply_gradients(
                model, grads, lr, clip_norm=config.clip_norm, momentum=config.momentum
            )
            total += loss
            batches += 1
        mean_loss = total / batches
        curve.append(mean_loss)
        if mean_loss >= best - 1e-4:
            lr *= config.anneal
        else:
            best = mean_loss
    return model, curve


def sl_minibatch_pass(
    model: PolicyModel,
    examples: Sequence[PerspectiveExample],
    config: SLConfig,
    rng: np.random.Generator,
) -> float:
    """One SL gradient step on a sampled minibatch (the RL+SL interleave unit)."""
    idx = rng.choice(len(examples), size=min(config.batch_size, len(examples)), replace=False)
    chunk = [examples[int(i)] for i in idx]
    batch = model_mod.build_batch(chunk, sel_weight=config.alpha)
    loss, grads = model_mod.loss_and_grads(model, batch)
    model_mod.apply_gradients(model, grads, config.lr, clip_norm=config.clip_norm, momentum=config.momentum)
    return loss


# ---------------------------------------------------------------------------
# Self-play and REINFORCE
# ---------------------------------------------------------------------------


def _session_selection(
    session: model_mod.Session, transcript: Transcript, seat: str
) -> Allocation:
    """Same rule as model.predict_selection, reusing the live session state."""
    deal = env.standing_agreement(transcript)
    counts = transcript.counts
    if deal is not None:
        proposer, claim = deal
        if proposer == seat:
            return claim
        return Allocation(*(c - x for c, x in zip(counts, claim)))
    picks = session.selection_logits().argmax(axis=1)
    return Allocation(*(min(int(p), c) for p, c in zip(picks, counts)))


def self_play_episode(
    alice: PolicyModel,
    bob: PolicyModel,
    pair: ContextPair,
    rng: np.random.Generator,
    t_max: int = env.DEFAULT_T_MAX,
) -> tuple[DialogueRecord, np.ndarray]:
    """Roll out one negotiation; returns the record and Alice's act log-probs.

    Alice always holds seat A and Bob seat B; the pair's starter speaks first.
    """
    transcript = env.new_transcript(pair, t_max=t_max)
    sessions = {
        "A": model_mod.Session(alice, pair.context_for("A"), self_starts=pair.starter == "A"),
        "B": model_mod.Session(bob, pair.context_for("B"), self_starts=pair.starter == "B"),
    }
    log_probs: list[float] = []
    while not transcript.terminated:
        seat = transcript.next_speaker
        probs = sessions[seat].distribution()
        action_id = int(rng.choice(model_mod.VOCAB_SIZE, p=probs))
        act = model_mod.id_to_act(action_id)
        if seat == "A":
            log_probs.append(float(np.log(probs[action_id])))
        transcript = env.apply_act(transcript, act)
        sessions["A"].observe(act, seat == "A")
        sessions["B"].observe(act, seat == "B")
    outcome = env.resolve_outcome(
        transcript,
        _session_selection(sessions["A"], transcript, "A"),
        _session_selection(sessions["B"], transcript, "B"),
    )
    return DialogueRecord(transcript=transcript, outcome=outcome), np.asarray(log_probs)


def engineered_reward(outcome: Outcome, pair: ContextPair, variant: str = "plain") -> float:
    """Seat-A reward under the chosen shaping variant."""
    r_a = float(outcome.score_a)
    bonus = 1.0 if outcome.agreed and outcome.pareto else 0.0
    if variant == "plain":
        return r_a
    if variant == "pareto-bonus":
        return r_a + bonus
    if variant == "pareto-bonus-normalized":
        return r_a / env.TOTAL_POINTS + bonus
    raise ValueError(f"unknown reward variant {variant!r}")


def reinforce_coefficients(
    record: DialogueRecord, reward: float, baseline_mean: float, gamma: float
) -> np.ndarray:
    """Per-act credit gamma^(T-t) * (reward - baseline) at Alice's positions,
    zero elsewhere; positions t are 1-based over the whole transcript."""
    T = len(record.transcript)
    coeffs = np.zeros(T)
    for j, (who, _) in enumerate(record.transcript.acts):
        if who == "A":
            coeffs[j] = gamma ** (T - (j + 1)) * (reward - baseline_mean)
    return coeffs


def reinforce_update(
    alice: PolicyModel,
    record: DialogueRecord,
    log_probs: np.ndarray,
    baseline: BaselineState,
    config: RLConfig,
    lr: Optional[float] = None,
) -> float:
    """One REINFORCE step on Alice for a completed episode.

    Credit uses the variant-adjusted reward against the running mean of raw
    scores; the baseline is then fed the raw score (so a shaping bonus acts
    as a sweetener on the episodes that earn it rather than raising the bar
    for every other episode). The baseline excludes the current episode.
    """
    shaped = engineered_reward(record.outcome, record.pair, config.reward_variant)
    coeffs = reinforce_coefficients(record, shaped, baseline.mean, config.gamma)
    view = corpus_mod.seat_view(record.transcript, "A")
    own_positions = np.array([who == "A" for who, _ in record.transcript.acts], dtype=bool)
    if own_positions.any() and np.any(coeffs != 0.0):
        batch = model_mod.build_batch([view], act_weights=[coeffs], sel_weight=0.0)
        _, grads = model_mod.loss_and_grads(alice, batch)
        model_mod.apply_gradients(
            alice,
            grads,
            config.lr if lr is None else lr,
            clip_norm=config.clip_norm,
            momentum=config.momentum,
        )
    baseline.update(float(record.outcome.score_a))
    return shaped


@dataclass
class EpochTrainStats:
    epoch: int
    mean_reward: float
    mean_length: float
    agreement_rate: float
    records: list[DialogueRecord] = field(repr=False, default_factory=list)


def run_rl_epoch(
    alice: PolicyModel,
    bob: PolicyModel,
    n_episodes: int,
    baseline: BaselineState,
    rl_config: RLConfig,
    rng: np.random.Generator,
    t_max: int = env.DEFAULT_T_MAX,
    sl_examples: Optional[Sequence[PerspectiveExample]] = None,
    sl_config: Optional[SLConfig] = None,
    period: Optional[int] = None,
    episode_offset: int = 0,
    lr: Optional[float] = None,
) -> EpochTrainStats:
    """One block of self-play episodes with REINFORCE updates (and optional
    interleaved SL passes every ``period`` episodes, counted globally)."""
    rewards, lengths, agreements = [], [], []
    records = []
    for i in range(n_episodes):
        pair = env.sample_context_pair(rng)
        record, log_probs = self_play_episode(alice, bob, pair, rng, t_max=t_max)
        reward = reinforce_update(alice, record, log_probs, baseline, rl_config, lr=lr)
        rewards.append(reward)
        lengths.append(len(record.transcript))
        agreements.append(record.outcome.agreed)
        records.append(record)
        if period is not None and (episode_offset + i + 1) % period == 0:
            assert sl_examples is not None and sl_config is not None
            sl_minibatch_pass(alice, sl_examples, sl_config, rng)
    return EpochTrainStats(
        epoch=0,
        mean_reward=float(np.mean(rewards)) if rewards else 0.0,
        mean_length=float(np.mean(lengths)) if lengths else 0.0,
        agreement_rate=float(np.mean(agreements)) if agreements else 0.0,
        records=records,
    )


def rl_train(
    alice: PolicyModel,
    bob: PolicyModel,
    schedule: Schedule,
    rl_config: RLConfig,
    sl_config: Optional[SLConfig],
    sl_corpus: Optional[Corpus],
    rng: np.random.Generator,
    episodes_per_epoch: int = 500,
    t_max: int = env.DEFAULT_T_MAX,
    on_epoch: Optional[Callable[[int, PolicyModel, EpochTrainStats], None]] = None,
) -> tuple[PolicyModel, list[EpochTrainStats]]:
    """REINFORCE against a frozen Bob, optionally interleaving SL passes.

    ``schedule.period`` of None runs pure RL; otherwise an SL minibatch pass
    runs after every period-th episode, drawn from ``sl_corpus``.
    """
    if schedule.period is not None:
        if sl_corpus is None or not sl_corpus.records:
            raise ValueError("interleaved RL+SL requires a nonempty corpus")
        assert sl_config is not None
        sl_examples: Optional[list[PerspectiveExample]] = []
        for record in sl_corpus.records:
            sl_examples.extend(corpus_mod.perspectives(record))
    else:
        sl_examples = None
    baseline = BaselineState()
    trace: list[EpochTrainStats] = []
    done = 0
    epoch = 0
    while done < schedule.total_episodes:
        n = min(episodes_per_epoch, schedule.total_episodes - done)
        epoch += 1
        stats = run_rl_epoch(
            alice,
            bob,
            n,
            baseline,
            rl_config,
            rng,
            t_max=t_max,
            sl_examples=sl_examples,
            sl_config=sl_config,
            period=schedule.period,
            episode_offset=done,
            lr=rl_config.lr * rl_config.lr_anneal ** (epoch - 1),
        )
        stats.epoch = epoch
        done += n
        trace.append(stats)
        if not np.isfinite(stats.mean_reward):
            raise FloatingPointError(f"RL training diverged at epoch {epoch}: {trace}")
        if on_epoch is not None:
            on_epoch(epoch, alice, stats)
    return alice, trace
