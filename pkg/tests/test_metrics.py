import itertools

import numpy as np
import pytest

from negolab import corpus, env, metrics, model
from negolab.corpus import DialogueRecord
from negolab.env import AGREE, END, Allocation, ContextPair, ItemCounts, Utilities, propose


def record_with_scores(sel_a, counts=(2, 2, 2), u_a=None, u_b=None, agree=True):
    counts = ItemCounts(*counts)
    options = env.feasible_utilities(counts)
    pair = ContextPair(
        counts,
        Utilities(*u_a) if u_a else options[0],
        Utilities(*u_b) if u_b else options[-1],
        "A",
    )
    t = env.new_transcript(pair)
    t = env.apply_act(t, propose(*sel_a))
    t = env.apply_act(t, AGREE)
    t = env.apply_act(t, END)
    sel_a = Allocation(*sel_a)
    if agree:
        sel_b = Allocation(*(c - x for c, x in zip(counts, sel_a)))
    else:
        sel_b = Allocation(*counts)
    return DialogueRecord(t, env.resolve_outcome(t, sel_a, sel_b))


def mirror(record):
    pair = record.pair
    starter = "B" if pair.starter == "A" else "A"
    flipped = ContextPair(pair.counts, pair.utilities_b, pair.utilities_a, starter)
    t = env.new_transcript(flipped, t_max=record.transcript.t_max)
    for _, act in record.transcript.acts:
        t = env.apply_act(t, act)
    return DialogueRecord(
        t, env.resolve_outcome(t, record.outcome.selection_b, record.outcome.selection_a)
    )


def test_advantage_basics():
    rec = record_with_scores((2, 2, 2), u_a=(2, 2, 1), u_b=(1, 2, 2))
    assert rec.outcome.score_a == 10 and rec.outcome.score_b == 0
    assert metrics.advantage([rec]) == 10.0
    assert metrics.advantage([rec, mirror(rec)]) == 0.0
    disagreement = record_with_scores((1, 1, 1), agree=False)
    assert metrics.advantage([disagreement]) == 0.0


def test_advantage_antisymmetry_random():
    rng = np.random.default_rng(0)
    m = model.init_model(rng, hidden=8)
    records = []
    for _ in range(20):
        pair = env.sample_context_pair(rng)
        records.append(metrics.play_eval_episode(m, m, pair, rng, t_max=8))
    mirrored = [mirror(r) for r in records]
    assert metrics.advantage(records) == -metrics.advantage(mirrored)


def test_pareto_rate_over_agreements_only():
    best = record_with_scores((2, 2, 2), u_a=(2, 2, 1), u_b=(1, 2, 2))  # (10, 0), taker values all
    assert best.outcome.pareto
    disagreement = record_with_scores((1, 1, 1), agree=False)
    assert metrics.pareto_rate([best, disagreement]) == 1.0
    assert metrics.pareto_rate([disagreement]) is None


def test_agreement_rate():
    a = record_with_scores((2, 2, 2))
    d = record_with_scores((1, 1, 1), agree=False)
    assert metrics.agreement_rate([a, a, a]) == 1.0
    assert metrics.agreement_rate([d, d]) == 0.0
    assert metrics.agreement_rate([a, a, a, d]) == 0.75


def test_novelty_uniform_partner():
    uniform = model.init_model(np.random.default_rng(0), hidden=8, init_scale=0.0)
    counts = ItemCounts(1, 1, 1)
    options = env.feasible_utilities(counts)
    pair = ContextPair(counts, options[0], options[-1], "A")
    t = env.apply_act(env.new_transcript(pair), END)  # one Alice act, 18 legal
    rec = DialogueRecord(t, env.resolve_outcome(t, Allocation(1, 1, 1), Allocation(1, 1, 1)))
    assert metrics.novelty([rec], uniform) == pytest.approx(1 - 1 / 18, abs=1e-12)


def test_novelty_perfect_predictor_is_zero():
    sharp = model.init_model(np.random.default_rng(0), hidden=8, init_scale=0.0)
    sharp.params["b_kind"][4] = 900.0  # all mass on end
    counts = ItemCounts(1, 1, 1)
    options = env.feasible_utilities(counts)
    pair = ContextPair(counts, options[0], options[-1], "A")
    t = env.apply_act(env.new_transcript(pair), END)
    rec = DialogueRecord(t, env.resolve_outcome(t, Allocation(1, 1, 1), Allocation(1, 1, 1)))
    assert metrics.novelty([rec], sharp) == pytest.approx(0.0, abs=1e-9)


def test_novelty_bounded():
    rng = np.random.default_rng(3)
    m = model.init_model(rng, hidden=8)
    records = [
        metrics.play_eval_episode(m, m, env.sample_context_pair(rng), rng, t_max=8) for _ in range(15)
    ]
    assert 0.0 <= metrics.novelty(records, m) <= 1.0


def _joint_max_oracle(pair):
    best = 0
    for claim in itertools.product(*(range(c + 1) for c in pair.counts)):
        s = sum(u * x for u, x in zip(pair.utilities_a, claim)) + sum(
            u * (c - x) for u, c, x in zip(pair.utilities_b, pair.counts, claim)
        )
        best = max(best, s)
    return best


def test_joint_outcome_rates():
    # both agents take their fully-valued shares: max joint score and equal scores
    rec = record_with_scores((2, 2, 0), u_a=(3, 2, 0), u_b=(0, 0, 5))
    assert rec.outcome.score_a == 10 and rec.outcome.score_b == 10
    joint, same = metrics.joint_outcome_rates([rec])
    assert joint == 1.0 and same == 1.0
    d = record_with_scores((1, 1, 1), agree=False)
    joint, same = metrics.joint_outcome_rates([rec, d])
    assert joint == 0.5
    assert same == 1.0  # a (0, 0) disagreement ties exactly


def test_joint_max_matches_oracle():
    rng = np.random.default_rng(5)
    for _ in range(200):
        pair = env.sample_context_pair(rng)
        assert env.max_joint_score(pair) == _joint_max_oracle(pair)


def test_evaluate_pairing_defaults_and_determinism():
    import inspect

    assert inspect.signature(metrics.evaluate_pairing).parameters["seeds"].default == 20
    m = model.init_model(np.random.default_rng(1), hidden=8)
    import json

    a = metrics.evaluate_pairing(m, m, n_contexts=10, seeds=2, rng=np.random.default_rng(3), t_max=8)
    b = metrics.evaluate_pairing(m, m, n_contexts=10, seeds=2, rng=np.random.default_rng(3), t_max=8)
    assert json.dumps(a.to_dict(), sort_keys=True) == json.dumps(b.to_dict(), sort_keys=True)
    assert a.n_negotiations == 20
    for rate in (a.agreement_rate, a.joint_max_rate, a.same_score_rate, a.novelty):
        assert 0.0 <= rate <= 1.0
    if a.pareto_rate is not None:
        assert 0.0 <= a.pareto_rate <= 1.0
    assert 1.0 <= a.mean_length <= 8.0


def test_evaluate_pairing_human_scale_contexts():
    m = model.init_model(np.random.default_rng(2), hidden=4)
    report = metrics.evaluate_pairing(m, m, n_contexts=390, seeds=1, rng=np.random.default_rng(0), t_max=4)
    assert report.n_negotiations == 390


def test_evaluate_pairing_rejects_bad_inputs():
    m = model.init_model(np.random.default_rng(1), hidden=4)
    with pytest.raises(ValueError):
        metrics.evaluate_pairing(m, m, n_contexts=0, seeds=1)


def test_greedy_rollouts_are_deterministic():
    m = model.init_model(np.random.default_rng(4), hidden=8)
    pair = env.sample_context_pair(np.random.default_rng(6))
    a = metrics.play_eval_episode(m, m, pair, np.random.default_rng(0), t_max=8, greedy=True)
    b = metrics.play_eval_episode(m, m, pair, np.random.default_rng(99), t_max=8, greedy=True)
    assert a == b
