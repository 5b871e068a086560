import json

import numpy as np
import pytest

from negolab import corpus, env
from negolab.corpus import Corpus, DialogueRecord
from negolab.env import AGREE, END, Allocation, ContextPair, ItemCounts, Utilities, propose


def make_record(starter="A", acts=None, sel_a=None, counts=(1, 1, 1)):
    counts = ItemCounts(*counts)
    options = env.feasible_utilities(counts)
    pair = ContextPair(counts, options[0], options[-1], starter)
    t = env.new_transcript(pair)
    for act in acts or [propose(1, 0, 0), AGREE, END]:
        t = env.apply_act(t, act)
    if sel_a is None:
        deal = env.standing_agreement(t)
        if deal is not None:
            who, claim = deal
            sel_a = claim if who == "A" else Allocation(*(c - x for c, x in zip(counts, claim)))
        else:
            sel_a = Allocation(*counts)
    sel_b = Allocation(*(c - x for c, x in zip(counts, sel_a)))
    return DialogueRecord(transcript=t, outcome=env.resolve_outcome(t, sel_a, sel_b))


def test_unique_act_ratio_counts_structural_identity():
    rec = make_record(acts=[propose(1, 0, 0), propose(1, 0, 0), AGREE, END])
    # speaker is ignored: the two identical proposals collapse
    assert corpus.unique_act_ratio(rec) == 3 / 4
    rec2 = make_record(acts=[propose(1, 0, 0), propose(0, 1, 0), END])
    assert corpus.unique_act_ratio(rec2) == 1.0


def test_unique_act_ratio_one_repeated_act():
    pair = make_record().pair
    t = env.new_transcript(pair, t_max=5)
    for _ in range(5):
        t = env.apply_act(t, propose(1, 0, 0))
    rec = DialogueRecord(t, env.resolve_outcome(t, Allocation(1, 1, 1), Allocation(1, 1, 1)))
    assert corpus.unique_act_ratio(rec) == 1 / 5


def test_unique_act_ratio_rejects_empty_transcript():
    pair = make_record().pair
    t = env.new_transcript(pair, t_max=0)
    empty = DialogueRecord(
        transcript=env.Transcript(pair=pair, acts=(), terminated=True, t_max=0),
        outcome=env.resolve_outcome(
            env.Transcript(pair=pair, acts=(), terminated=True, t_max=0),
            Allocation(1, 1, 1),
            Allocation(1, 1, 1),
        ),
    )
    with pytest.raises(ValueError):
        corpus.unique_act_ratio(empty)


def test_filter_keeps_only_repetitive_records():
    repetitive = make_record(acts=[propose(1, 0, 0), propose(1, 0, 0), propose(1, 0, 0), AGREE, END])
    diverse = make_record(acts=[propose(1, 0, 0), propose(0, 1, 0), AGREE, END])
    c = Corpus(records=[repetitive, diverse], provenance="synthetic-high")
    low = corpus.filter_by_quality(c, 0.75)
    assert low.records == [repetitive]
    assert low.provenance == "filtered-low(0.75)"
    # strict inequality at the threshold
    exact = corpus.unique_act_ratio(repetitive)
    with pytest.raises(ValueError):
        corpus.filter_by_quality(Corpus([repetitive], "x"), exact)


def test_filter_is_idempotent_and_subset():
    c = corpus.generate_synthetic_corpus(np.random.default_rng(0), 300)
    low = corpus.filter_by_quality(c, 0.5)
    assert set(map(id, low.records)) <= set(map(id, c.records))
    again = corpus.filter_by_quality(low, 0.5)
    assert again.records == low.records


def test_filter_threshold_validation():
    c = corpus.generate_synthetic_corpus(np.random.default_rng(0), 50)
    with pytest.raises(ValueError):
        corpus.filter_by_quality(c, 0.0)
    with pytest.raises(ValueError):
        corpus.filter_by_quality(c, 1.5)


def test_default_mixture_retention_in_band():
    c = corpus.generate_synthetic_corpus(np.random.default_rng(11), 1500)
    low = corpus.filter_by_quality(c, 0.5)
    assert 0.25 <= len(low) / len(c) <= 0.55


def test_lower_threshold_keeps_less_unique_records():
    c = corpus.generate_synthetic_corpus(np.random.default_rng(4), 1200)
    tight = corpus.corpus_stats(corpus.filter_by_quality(c, 0.5))
    loose = corpus.corpus_stats(corpus.filter_by_quality(c, 0.78))
    assert tight.mean_unique_ratio <= loose.mean_unique_ratio


def test_generator_rejects_bad_inputs():
    with pytest.raises(ValueError):
        corpus.generate_synthetic_corpus(np.random.default_rng(0), 0)
    with pytest.raises(ValueError):
        corpus.generate_synthetic_corpus(np.random.default_rng(0), 5, {"compromiser": 0.0})


def test_generated_records_validate_under_env():
    c = corpus.generate_synthetic_corpus(np.random.default_rng(9), 150)
    for record in c.records:
        record.validate()  # raises on mismatch


def test_compromisers_are_more_pareto_than_agreers():
    comp = corpus.corpus_stats(
        corpus.generate_synthetic_corpus(np.random.default_rng(5), 250, {"compromiser": 1.0})
    )
    agre = corpus.corpus_stats(
        corpus.generate_synthetic_corpus(np.random.default_rng(5), 250, {"agreer": 1.0})
    )
    assert comp.pareto_rate > agre.pareto_rate


def test_perspectives_are_lossless_and_aligned():
    rec = make_record(starter="B", acts=[propose(0, 1, 0), propose(1, 0, 0), AGREE, END])
    view_a, view_b = corpus.perspectives(rec)
    assert view_a.context.utilities == rec.pair.utilities_a
    assert view_a.context.counts == rec.pair.counts
    assert len(view_a.acts) == len(view_b.acts) == len(rec.transcript)
    assert view_a.target == rec.outcome.selection_a
    assert view_b.target == rec.outcome.selection_b
    # role markers are complementary
    assert all(a != b for (a, _), (b, _) in zip(view_a.acts, view_b.acts))
    rebuilt = corpus.reconstruct_transcript(view_a, rec.pair)
    assert rebuilt.acts == rec.transcript.acts
    rebuilt_b = corpus.reconstruct_transcript(view_b, rec.pair)
    assert rebuilt_b.acts == rec.transcript.acts


def test_corpus_stats_single_record():
    # taker values every item, so taking everything is Pareto-optimal
    counts = ItemCounts(1, 1, 1)
    pair = ContextPair(counts, Utilities(2, 3, 5), Utilities(10, 0, 0), "A")
    t = env.new_transcript(pair)
    for act in [propose(1, 1, 1), AGREE, END]:
        t = env.apply_act(t, act)
    rec = DialogueRecord(t, env.resolve_outcome(t, Allocation(1, 1, 1), Allocation(0, 0, 0)))
    stats = corpus.corpus_stats(Corpus([rec], "x"))
    assert stats.mean_length == 3
    assert stats.agreement_rate == 1.0
    assert stats.pareto_rate == 1.0
    assert abs(sum(stats.act_histogram.values()) - 1.0) < 1e-9


def test_corpus_stats_rates_bounded():
    c = corpus.generate_synthetic_corpus(np.random.default_rng(2), 120)
    stats = corpus.corpus_stats(c)
    for rate in (stats.pareto_rate, stats.agreement_rate, stats.mean_unique_ratio):
        assert 0.0 <= rate <= 1.0


def test_symmetric_corpus_has_zero_advantage():
    rec = make_record(starter="A", acts=[propose(1, 0, 0), AGREE, END])
    pair = rec.pair
    mirrored_pair = ContextPair(pair.counts, pair.utilities_b, pair.utilities_a, "B")
    t = env.new_transcript(mirrored_pair)
    for act in [propose(1, 0, 0), AGREE, END]:
        t = env.apply_act(t, act)
    mirrored = DialogueRecord(
        t, env.resolve_outcome(t, rec.outcome.selection_b, rec.outcome.selection_a)
    )
    stats = corpus.corpus_stats(Corpus([rec, mirrored], "x"))
    assert stats.mean_advantage == 0.0


def test_corpus_round_trip(tmp_path):
    c = corpus.generate_synthetic_corpus(np.random.default_rng(1), 60)
    path = tmp_path / "corpus.jsonl"
    corpus.save_corpus(c, path)
    loaded = corpus.load_corpus(path, provenance=c.provenance)
    assert loaded.records == c.records
    assert loaded.provenance == c.provenance


def test_load_reports_line_numbers(tmp_path):
    c = corpus.generate_synthetic_corpus(np.random.default_rng(1), 3)
    path = tmp_path / "corpus.jsonl"
    corpus.save_corpus(c, path)
    text = path.read_text().splitlines()
    text[1] = text[1][: len(text[1]) // 2]  # truncate the middle record
    path.write_text("\n".join(text) + "\n")
    with pytest.raises(ValueError, match="line 2"):
        corpus.load_corpus(path)


def test_load_rejects_invalid_records(tmp_path):
    rec = make_record()
    obj = corpus.record_to_json(rec)
    obj["sel_a"] = [9, 9, 9]  # selection outside the item counts
    path = tmp_path / "bad.jsonl"
    path.write_text(json.dumps(obj) + "\n")
    with pytest.raises(ValueError, match="line 1"):
        corpus.load_corpus(path)

    # the format carries no turn cap: a record without a final end act loads
    # as a cap-terminated dialogue whose cap equals its length
    obj = corpus.record_to_json(rec)
    obj["acts"] = obj["acts"][:-1]
    path.write_text(json.dumps(obj) + "\n")
    capped = corpus.load_corpus(path).records[0]
    assert capped.transcript.terminated and capped.transcript.t_max == len(obj["acts"])

    obj = corpus.record_to_json(rec)
    obj["acts"][0]["who"] = "B"  # out of turn
    path.write_text(json.dumps(obj) + "\n")
    with pytest.raises(ValueError, match="line 1"):
        corpus.load_corpus(path)


def test_scores_recomputed_not_trusted(tmp_path):
    rec = make_record()
    path = tmp_path / "c.jsonl"
    corpus.save_corpus(Corpus([rec], "x"), path)
    loaded = corpus.load_corpus(path)
    recomputed = env.resolve_outcome(
        loaded.records[0].transcript, rec.outcome.selection_a, rec.outcome.selection_b
    )
    assert loaded.records[0].outcome == recomputed
