"""Targeted data acquisition: flag Alice's most novel negotiations under
Bob's model, let the expert take over Bob's seat from the flagged turn, grow
the dataset with the completed dialogues, and retrain Bob on it.

Scoring functions reduce over Alice's turns only. Likelihood (the default)
flags the minimum log-probability act; entropy flags the most uncertain
pre-act distribution (selected largest-first); margin flags the smallest
top-two probability gap; random is the control.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import corpus as corpus_mod
from . import env, model as model_mod, training
from .corpus import Corpus, DialogueRecord
from .model import PolicyModel
from .training import BaselineState, RLConfig, SLConfig

log = logging.getLogger(__name__)

ACQUISITION_FUNCTIONS = ("likelihood", "entropy", "margin", "random")


@dataclass(frozen=True)
class NoveltyScore:
    nid: int  # negotiation id within the scored batch
    score: float
    t_star: int  # transcript index of Alice's extremal act


@dataclass
class AcquisitionConfig:
    function: str = "likelihood"
    k: int = 500  # annotation budget per epoch
    order: str = "second"  # "second": retrain Bob only; "first": also SL Alice on D'
    retrain_mode: str = "fresh"  # "fresh" re-initializes Bob, "finetune" continues
    retrain_init_scale: float = 0.1
    first_order_epochs: int = 1

    def __post_init__(self) -> None:
        if self.function not in ACQUISITION_FUNCTIONS:
            raise ValueError(f"unknown acquisition function {self.function!r}")
        if self.k < 0:
            raise ValueError("annotation budget k must be nonnegative")
        if self.order not in ("first", "second"):
            raise ValueError("order must be 'first' or 'second'")
        if self.retrain_mode not in ("fresh", "finetune"):
            raise ValueError("retrain_mode must be 'fresh' or 'finetune'")


def _own_positions(record: DialogueRecord) -> np.ndarray:
    return np.array([who == "A" for who, _ in record.transcript.acts], dtype=bool)


def score_likelihood(record: DialogueRecord, bob: PolicyModel, nid: int = 0) -> NoveltyScore:
    """Minimum log-likelihood of Alice's acts under Bob; lower is more novel."""
    own = _own_positions(record)
    if not own.any():
        raise ValueError("record has no Alice acts to score")
    view = corpus_mod.seat_view(record.transcript, "A")
    stats = model_mod.position_stats(bob, view)
    scores = np.where(own, stats.log_prob, np.inf)
    t_star = int(np.argmin(scores))
    return NoveltyScore(nid=nid, score=float(scores[t_star]), t_star=t_star)


def score_entropy(record: DialogueRecord, bob: PolicyModel, nid: int = 0) -> NoveltyScore:
    """Maximum entropy of Bob's act distribution at Alice's turns; higher is
    more novel."""
    own = _own_positions(record)
    if not own.any():
        raise ValueError("record has no Alice acts to score")
    view = corpus_mod.seat_view(record.transcript, "A")
    stats = model_mod.position_stats(bob, view)
    scores = np.where(own, stats.entropy, -np.inf)
    t_star = int(np.argmax(scores))
    return NoveltyScore(nid=nid, score=float(scores[t_star]), t_star=t_star)


def score_margin(record: DialogueRecord, bob: PolicyModel, nid: int = 0) -> NoveltyScore:
    """Minimum top1-top2 probability gap at Alice's turns; smaller is more
    novel. Positions with fewer than two legal acts are skipped."""
    own = _own_positions(record)
    if not own.any():
        raise ValueError("record has no Alice acts to score")
    view = corpus_mod.seat_view(record.transcript, "A")
    stats = model_mod.position_stats(bob, view)
    scores = np.where(own, stats.margin, np.inf)
    scores = np.where(np.isnan(scores), np.inf, scores)
    t_star = int(np.argmin(scores))
    if not np.isfinite(scores[t_star]):
        raise ValueError("no scorable Alice position (fewer than two legal acts everywhere)")
    return NoveltyScore(nid=nid, score=float(scores[t_star]), t_star=t_star)


def score_random(record: DialogueRecord, rng: np.random.Generator, nid: int = 0) -> NoveltyScore:
    own = np.flatnonzero(_own_positions(record))
    if own.size == 0:
        raise ValueError("record has no Alice acts to score")
    return NoveltyScore(
        nid=nid,
        score=float(rng.uniform()),
        t_star=int(own[int(rng.integers(own.size))]),
    )


def score_records(
    records: Sequence[DialogueRecord],
    bob: PolicyModel,
    function: str,
    rng: Optional[np.random.Generator] = None,
) -> list[NoveltyScore]:
    scores = []
    for nid, record in enumerate(records):
        if not _own_positions(record).any():
            continue
        if function == "likelihood":
            scores.append(score_likelihood(record, bob, nid))
        elif function == "entropy":
            scores.append(score_entropy(record, bob, nid))
        elif function == "margin":
            scores.append(score_margin(record, bob, nid))
        elif function == "random":
            assert rng is not None, "random scoring needs an rng"
            scores.append(score_random(record, rng, nid))
        else:
            raise ValueError(f"unknown acquisition function {function!r}")
    return scores


def select_for_annotation(scores: Sequence[NoveltyScore], config: AcquisitionConfig) -> list[int]:
    """The k extremal negotiation ids: smallest scores for likelihood, margin
    and random; largest for entropy. Ties break by ascending id."""
    k = min(config.k, len(scores))
    if config.function == "entropy":
        ordered = sorted(scores, key=lambda s: (-s.score, s.nid))
    else:
        ordered = sorted(scores, key=lambda s: (s.score, s.nid))
    return [s.nid for s in ordered[:k]]


@dataclass(frozen=True)
class AnnotatedDialogue:
    record: DialogueRecord
    t_star: int
    annotated_fraction: float  # expert-era acts / total acts


class AnnotationError(ValueError):
    pass


def expert_annotate(
    record: DialogueRecord,
    t_star: int,
    expert: PolicyModel,
    alice: PolicyModel,
    rng: np.random.Generator,
) -> AnnotatedDialogue:
    """Replay the dialogue through Alice's flagged act, then let the expert
    play Bob's seat (and Alice her own) until termination."""
    acts = record.transcript.acts
    if not 0 <= t_star < len(acts) or acts[t_star][0] != "A":
        raise AnnotationError(f"t_star={t_star} does not index an Alice act")
    pair = record.pair
    t_max = record.transcript.t_max
    transcript = env.new_transcript(pair, t_max=t_max)
    sessions = {
        "A": model_mod.Session(alice, pair.context_for("A"), self_starts=pair.starter == "A"),
        "B": model_mod.Session(expert, pair.context_for("B"), self_starts=pair.starter == "B"),
    }
    for who, act in acts[: t_star + 1]:
        transcript = env.apply_act(transcript, act)
        sessions["A"].observe(act, who == "A")
        sessions["B"].observe(act, who == "B")
    if transcript.terminated:
        raise AnnotationError("flagged act already terminates the dialogue; nothing to annotate")
    while not transcript.terminated:
        seat = transcript.next_speaker
        probs = sessions[seat].distribution()
        act = model_mod.id_to_act(int(rng.choice(model_mod.VOCAB_SIZE, p=probs)))
        transcript = env.apply_act(transcript, act)
        sessions["A"].observe(act, seat == "A")
        sessions["B"].observe(act, seat == "B")
    outcome = env.resolve_outcome(
        transcript,
        training._session_selection(sessions["A"], transcript, "A"),
        training._session_selection(sessions["B"], transcript, "B"),
    )
    new_record = DialogueRecord(transcript=transcript, outcome=outcome)
    suffix = len(transcript) - (t_star + 1)
    return AnnotatedDialogue(
        record=new_record,
        t_star=t_star,
        annotated_fraction=suffix / len(transcript),
    )


@dataclass
class AcquisitionReport:
    n_annotated: int
    mean_annotated_fraction: float
    dprime_advantage: float
    dprime_pareto: float


def acquisition_epoch(
    alice: PolicyModel,
    bob: PolicyModel,
    dataset: Corpus,
    episode_records: Sequence[DialogueRecord],
    expert: PolicyModel,
    acq_config: AcquisitionConfig,
    sl_config: SLConfig,
    rng: np.random.Generator,
) -> tuple[PolicyModel, PolicyModel, Corpus, AcquisitionReport]:
    """Score -> select -> annotate -> merge -> retrain Bob (and, first-order,
    run SL passes on the annotations for Alice). Alice's parameters are
    untouched in second order."""
    scores = score_records(episode_records, bob, acq_config.function, rng)
    selected = select_for_annotation(scores, acq_config)
    score_by_id = {s.nid: s for s in scores}
    annotated: list[AnnotatedDialogue] = []
    for nid in selected:
        try:
            annotated.append(
                expert_annotate(episode_records[nid], score_by_id[nid].t_star, expert, alice, rng)
            )
        except AnnotationError as exc:
            log.warning("skipping annotation of negotiation %d: %s", nid, exc)
    existing = set(dataset.records)
    d_prime: list[DialogueRecord] = []
    fractions: list[float] = []
    for ann in annotated:
        if ann.record not in existing:
            existing.add(ann.record)
            d_prime.append(ann.record)
            fractions.append(ann.annotated_fraction)
    merged = Corpus(records=dataset.records + d_prime, provenance="mixed")

    if merged.records:
        if acq_config.retrain_mode == "fresh":
            new_bob = model_mod.init_model(
                rng, hidden=bob.hidden, init_scale=acq_config.retrain_init_scale
            )
        else:
            new_bob = bob.clone()
        new_bob, _ = training.sl_train(new_bob, merged, sl_config, rng)
    else:
        new_bob = bob

    if acq_config.order == "first" and d_prime:
        first_cfg = SLConfig(
            alpha=sl_config.alpha,
            batch_size=sl_config.batch_size,
            epochs=acq_config.first_order_epochs,
            lr=sl_config.lr,
            anneal=sl_config.anneal,
            clip_norm=sl_config.clip_norm,
            momentum=sl_config.momentum,
        )
        training.sl_train(alice, Corpus(records=d_prime, provenance="annotated"), first_cfg, rng)

    if d_prime:
        adv = float(np.mean([r.outcome.score_a - r.outcome.score_b for r in d_prime]))
        agreed = [r for r in d_prime if r.outcome.agreed]
        pareto = float(np.mean([r.outcome.pareto for r in agreed])) if agreed else 0.0
    else:
        adv = 0.0
        pareto = 0.0
    report = AcquisitionReport(
        n_annotated=len(d_prime),
        mean_annotated_fraction=float(np.mean(fractions)) if fractions else 0.0,
        dprime_advantage=adv,
        dprime_pareto=pareto,
    )
    return new_bob, alice, merged, report


def ta_train(
    alice: PolicyModel,
    bob: PolicyModel,
    dataset: Corpus,
    expert: PolicyModel,
    acq_config: AcquisitionConfig,
    rl_config: RLConfig,
    sl_config: SLConfig,
    rng: np.random.Generator,
    epochs: int = 6,
    episodes_per_epoch: int = 500,
    t_max: int = env.DEFAULT_T_MAX,
    on_epoch: Optional[Callable] = None,
) -> tuple[PolicyModel, PolicyModel, Corpus, list[AcquisitionReport]]:
    """The full targeted-acquisition regime: each epoch runs REINFORCE
    episodes against the current Bob, then one acquisition step."""
    baseline = BaselineState()
    reports: list[AcquisitionReport] = []
    for epoch in range(1, epochs + 1):
        stats = training.run_rl_epoch(
            alice,
            bob,
            episodes_per_epoch,
            baseline,
            rl_config,
            rng,
            t_max=t_max,
            lr=rl_config.lr * rl_config.lr_anneal ** (epoch - 1),
        )
        stats.epoch = epoch
        bob, alice, dataset, report = acquisition_epoch(
            alice, bob, dataset, stats.records, expert, acq_config, sl_config, rng
        )
        reports.append(report)
        if on_epoch is not None:
            on_epoch(epoch, alice, bob, stats, report)
    return alice, bob, dataset, reports
