import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from negolab import env
from negolab.env import (
    AGREE,
    DISAGREE,
    END,
    ActKind,
    Allocation,
    ContextPair,
    DialogueAct,
    IllegalActError,
    ItemCounts,
    Utilities,
    propose,
)


def pairs_strategy():
    """Random valid context pairs via the sampler itself (seeded)."""
    return st.integers(0, 10_000).map(lambda s: env.sample_context_pair(np.random.default_rng(s)))


def test_sampled_contexts_satisfy_constraints():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        pair = env.sample_context_pair(rng)
        assert all(1 <= c <= 4 for c in pair.counts)
        for u in (pair.utilities_a, pair.utilities_b):
            assert all(0 <= x <= 10 for x in u)
            # independent recomputation of the pie value
            assert sum(ui * ci for ui, ci in zip(u, pair.counts)) == 10
        assert pair.starter in ("A", "B")


def test_sampler_is_deterministic():
    a = [env.sample_context_pair(np.random.default_rng(7)) for _ in range(20)]
    b = [env.sample_context_pair(np.random.default_rng(7)) for _ in range(20)]
    assert a == b


def test_infeasible_counts_have_no_utilities():
    # counts whose every component is 3 or 4 cannot price the pie at exactly 10
    assert env.feasible_utilities(ItemCounts(3, 3, 3)) == ()
    assert env.feasible_utilities(ItemCounts(4, 4, 4)) == ()
    assert len(env.feasible_utilities(ItemCounts(1, 1, 1))) > 0


@pytest.mark.parametrize(
    "counts,expected",
    [((1, 1, 1), 8), ((4, 4, 4), 125), ((2, 1, 3), 24)],
)
def test_enumerate_allocation_counts(counts, expected):
    assert len(env.enumerate_allocations(ItemCounts(*counts))) == expected


@given(st.tuples(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4)))
def test_enumerate_allocations_size_and_bounds(counts):
    counts = ItemCounts(*counts)
    allocs = env.enumerate_allocations(counts)
    assert len(allocs) == (counts.books + 1) * (counts.hats + 1) * (counts.balls + 1)
    assert len(set(allocs)) == len(allocs)
    for alloc in allocs:
        assert all(0 <= a <= c for a, c in zip(alloc, counts))


def _pair(counts=(1, 1, 1), u_a=None, u_b=None, starter="A"):
    counts = ItemCounts(*counts)
    options = env.feasible_utilities(counts)
    u_a = Utilities(*u_a) if u_a else options[0]
    u_b = Utilities(*u_b) if u_b else options[-1]
    return ContextPair(counts, u_a, u_b, starter)


def test_legal_acts_before_any_proposal():
    t = env.new_transcript(_pair())
    acts = env.legal_acts(t)
    assert len(acts) == 2 * 8 + 2
    assert AGREE not in acts
    assert DISAGREE in acts and END in acts


def test_agree_becomes_legal_after_proposal():
    t = env.apply_act(env.new_transcript(_pair()), propose(1, 0, 0))
    assert AGREE in env.legal_acts(t)


def test_legal_proposals_respect_counts():
    t = env.new_transcript(_pair(counts=(2, 1, 3)))
    for act in env.legal_acts(t):
        if act.allocation is not None:
            assert all(a <= c for a, c in zip(act.allocation, t.counts))


def test_legal_acts_of_terminated_transcript_raises():
    t = env.apply_act(env.new_transcript(_pair()), END)
    with pytest.raises(IllegalActError):
        env.legal_acts(t)


def test_apply_end_terminates():
    t = env.apply_act(env.new_transcript(_pair()), END)
    assert t.terminated


def test_turn_cap_terminates():
    t = env.new_transcript(_pair(), t_max=4)
    for _ in range(3):
        t = env.apply_act(t, propose(1, 0, 0))
        assert not t.terminated
    t = env.apply_act(t, propose(0, 1, 0))
    assert t.terminated and len(t) == 4


def test_speakers_alternate_from_starter():
    t = env.new_transcript(_pair(starter="B"))
    t = env.apply_act(t, propose(0, 0, 1))
    t = env.apply_act(t, DISAGREE)
    t = env.apply_act(t, AGREE)
    assert [who for who, _ in t.acts] == ["B", "A", "B"]


def test_illegal_acts_name_the_rule():
    t = env.new_transcript(_pair(counts=(1, 1, 1)))
    with pytest.raises(IllegalActError, match="agree-without-proposal"):
        env.apply_act(t, AGREE)
    with pytest.raises(IllegalActError, match="allocation-bounds"):
        env.apply_act(t, propose(2, 0, 0))
    done = env.apply_act(t, END)
    with pytest.raises(IllegalActError, match="terminated"):
        env.apply_act(done, DISAGREE)


def test_dialogue_act_allocation_requirements():
    with pytest.raises(ValueError):
        DialogueAct(ActKind.PROPOSE)
    with pytest.raises(ValueError):
        DialogueAct(ActKind.AGREE, Allocation(0, 0, 0))


def _terminated(pair):
    return env.apply_act(env.new_transcript(pair), END)


def test_conflicting_selections_score_zero():
    pair = _pair(counts=(2, 2, 2))
    t = _terminated(pair)
    out = env.resolve_outcome(t, Allocation(2, 2, 2), Allocation(2, 2, 2))
    assert not out.agreed and out.score_a == 0 and out.score_b == 0


def test_take_everything_scores_ten():
    pair = _pair(counts=(2, 2, 2))
    t = _terminated(pair)
    out = env.resolve_outcome(t, Allocation(*pair.counts), Allocation(0, 0, 0))
    assert out.agreed and out.score_a == 10 and out.score_b == 0


def test_resolution_matches_independent_scorer():
    rng = np.random.default_rng(3)
    for _ in range(300):
        pair = env.sample_context_pair(rng)
        t = _terminated(pair)
        sel_a = Allocation(*(int(rng.integers(c + 1)) for c in pair.counts))
        sel_b = Allocation(*(c - a for c, a in zip(pair.counts, sel_a)))
        out = env.resolve_outcome(t, sel_a, sel_b)
        assert out.agreed
        # independent dot products
        assert out.score_a == sum(u * x for u, x in zip(pair.utilities_a, sel_a))
        assert out.score_b == sum(u * x for u, x in zip(pair.utilities_b, sel_b))


def test_resolve_requires_termination():
    pair = _pair()
    with pytest.raises(ValueError):
        env.resolve_outcome(env.new_transcript(pair), Allocation(0, 0, 0), Allocation(1, 1, 1))


def _pareto_oracle(scores, pair):
    """Second, independently written exhaustive scan."""
    r_a, r_b = scores
    counts = pair.counts
    for claim in itertools.product(*(range(c + 1) for c in counts)):
        s_a = sum(u * x for u, x in zip(pair.utilities_a, claim))
        s_b = sum(u * (c - x) for u, c, x in zip(pair.utilities_b, counts, claim))
        if s_a >= r_a and s_b >= r_b and (s_a > r_a or s_b > r_b):
            return False
    return True


@given(pairs_strategy())
@settings(max_examples=60, deadline=None)
def test_max_scores_are_pareto_optimal(pair):
    assert env.is_pareto_optimal((10, 10), pair)


def test_disagreement_scores_are_never_pareto_optimal():
    rng = np.random.default_rng(5)
    for _ in range(100):
        pair = env.sample_context_pair(rng)
        assert not env.is_pareto_optimal((0, 0), pair)


def test_pareto_matches_independent_oracle():
    rng = np.random.default_rng(11)
    for _ in range(500):
        pair = env.sample_context_pair(rng)
        sel_a = Allocation(*(int(rng.integers(c + 1)) for c in pair.counts))
        r_a = sum(u * x for u, x in zip(pair.utilities_a, sel_a))
        r_b = sum(u * (c - x) for u, c, x in zip(pair.utilities_b, pair.counts, sel_a))
        assert env.is_pareto_optimal((r_a, r_b), pair) == _pareto_oracle((r_a, r_b), pair)


def test_standing_agreement_tracks_last_proposal():
    pair = _pair(starter="A")
    t = env.new_transcript(pair)
    t = env.apply_act(t, propose(1, 0, 0))
    assert env.standing_agreement(t) is None
    t = env.apply_act(t, AGREE)
    assert env.standing_agreement(t) == ("A", Allocation(1, 0, 0))
    # a newer proposal supersedes the accepted one and stands unanswered
    t = env.apply_act(t, propose(0, 1, 0))
    assert env.standing_agreement(t) is None
    t = env.apply_act(t, AGREE)
    assert env.standing_agreement(t) == ("A", Allocation(0, 1, 0))


def test_random_legal_rollouts_preserve_invariants():
    rng = np.random.default_rng(21)
    for _ in range(120):
        pair = env.sample_context_pair(rng)
        t = env.new_transcript(pair, t_max=12)
        while not t.terminated:
            acts = env.legal_acts(t)
            t = env.apply_act(t, acts[int(rng.integers(len(acts)))])
        assert len(t) <= 12
        speakers = [who for who, _ in t.acts]
        assert speakers[0] == pair.starter
        assert all(a != b for a, b in zip(speakers, speakers[1:]))
        ends = [act for _, act in t.acts if act.kind is ActKind.END]
        assert len(ends) <= 1
        if ends:
            assert t.acts[-1][1].kind is ActKind.END


def test_max_joint_score_bounds():
    rng = np.random.default_rng(2)
    for _ in range(100):
        pair = env.sample_context_pair(rng)
        best = env.max_joint_score(pair)
        assert 10 <= best <= 20
