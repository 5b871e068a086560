import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from negolab import corpus, env, model, training
from negolab.corpus import Corpus
from negolab.env import AGREE, END, Allocation, propose
from negolab.training import BaselineState, RLConfig, Schedule, SLConfig


@pytest.fixture(scope="module")
def tiny_world():
    rng = np.random.default_rng(0)
    full = corpus.generate_synthetic_corpus(rng, 60)
    m = model.init_model(np.random.default_rng(1), hidden=12)
    return full, m


def test_config_validation():
    with pytest.raises(ValueError):
        SLConfig(alpha=-0.1)
    with pytest.raises(ValueError):
        RLConfig(gamma=0.0)
    with pytest.raises(ValueError):
        RLConfig(reward_variant="bogus")
    with pytest.raises(ValueError):
        Schedule(total_episodes=10, period=11)
    Schedule(total_episodes=4086, period=4085)  # paper-scale schedule accepted
    Schedule(total_episodes=4086, period=1)


def test_sl_loss_alpha_decomposition(tiny_world):
    full, m = tiny_world
    example = corpus.perspectives(full.records[0])[0]
    act_only = training.sl_loss(m, example, alpha=0.0)
    with_sel = training.sl_loss(m, example, alpha=1.0)
    half = training.sl_loss(m, example, alpha=0.5)
    assert act_only >= 0.0
    assert with_sel > act_only  # selection NLL is positive
    assert half == pytest.approx(act_only + 0.5 * (with_sel - act_only), rel=1e-9)


def test_sl_loss_is_pure_act_nll_at_alpha_zero(tiny_world):
    full, m = tiny_world
    example = corpus.perspectives(full.records[1])[0]
    stats = model.position_stats(m, example)
    assert training.sl_loss(m, example, alpha=0.0) == pytest.approx(-stats.log_prob.sum(), rel=1e-9)


def test_sl_train_loss_decreases(tiny_world):
    full, _ = tiny_world
    m = model.init_model(np.random.default_rng(2), hidden=16)
    _, curve = training.sl_train(m, full, SLConfig(epochs=4), np.random.default_rng(3))
    assert len(curve) == 4
    assert curve[-1] < curve[0]


def test_sl_train_overfits_single_dialogue():
    rng = np.random.default_rng(4)
    record = corpus.generate_synthetic_corpus(rng, 1).records[0]
    single = Corpus(records=[record], provenance="x")
    m = model.init_model(np.random.default_rng(5), hidden=24)
    training.sl_train(m, single, SLConfig(epochs=120, lr=0.5, anneal=0.9), np.random.default_rng(6))
    for view in corpus.perspectives(record):
        session = model.Session(m, view.context, self_starts=view.acts[0][0])
        for own, act in view.acts:
            probs = session.distribution()
            assert model.act_to_id(act) == int(np.argmax(probs))
            session.observe(act, own)


def test_sl_train_is_reproducible(tiny_world):
    full, _ = tiny_world
    runs = []
    for _ in range(2):
        m = model.init_model(np.random.default_rng(7), hidden=8)
        training.sl_train(m, full, SLConfig(epochs=2), np.random.default_rng(8))
        runs.append(m)
    assert runs[0].params_equal(runs[1])


def test_sl_train_rejects_empty_corpus(tiny_world):
    _, m = tiny_world
    with pytest.raises(ValueError):
        training.sl_train(m.clone(), Corpus(records=[], provenance="x"), SLConfig(), np.random.default_rng(0))


def test_sl_train_reports_divergence(tiny_world):
    full, _ = tiny_world
    m = model.init_model(np.random.default_rng(9), hidden=8)
    m.params["w_z"][0, 0] = np.nan
    with pytest.raises(FloatingPointError):
        training.sl_train(m, full, SLConfig(epochs=1), np.random.default_rng(0))


def test_self_play_episode_record_is_valid(tiny_world):
    _, m = tiny_world
    rng = np.random.default_rng(10)
    for _ in range(15):
        pair = env.sample_context_pair(rng)
        record, log_probs = training.self_play_episode(m, m, pair, rng, t_max=10)
        record.validate()
        assert len(record.transcript) <= 10
        n_alice = sum(1 for who, _ in record.transcript.acts if who == "A")
        assert len(log_probs) == n_alice
        assert np.all(log_probs <= 0.0)


def test_baseline_running_mean_exact():
    b = BaselineState()
    assert b.mean == 0.0
    b.update(4.0)
    b.update(6.0)
    assert b.mean == 5.0


@given(st.lists(st.integers(0, 10), min_size=1, max_size=40))
@settings(max_examples=60, deadline=None)
def test_baseline_matches_arithmetic_mean(rewards):
    b = BaselineState()
    for r in rewards:
        b.update(float(r))
    assert b.mean == sum(rewards) / len(rewards)


def _agreed_record(t_max=20, n_acts=3):
    pair = env.ContextPair(
        env.ItemCounts(1, 1, 1),
        env.feasible_utilities(env.ItemCounts(1, 1, 1))[0],
        env.feasible_utilities(env.ItemCounts(1, 1, 1))[-1],
        "A",
    )
    t = env.new_transcript(pair, t_max=t_max)
    acts = [propose(1, 0, 0), AGREE, END][:n_acts]
    for act in acts:
        t = env.apply_act(t, act)
    sel_a = Allocation(1, 0, 0)
    sel_b = Allocation(0, 1, 1)
    return corpus.DialogueRecord(t, env.resolve_outcome(t, sel_a, sel_b))


def test_reinforce_coefficients_discounting():
    record = _agreed_record(n_acts=3)  # acts: A, B, A with T=3
    coeffs = training.reinforce_coefficients(record, reward=7.0, baseline_mean=2.0, gamma=0.95)
    assert coeffs[0] == pytest.approx(0.95**2 * 5.0)  # t=1
    assert coeffs[1] == 0.0  # Bob's act carries no credit
    assert coeffs[2] == pytest.approx(5.0)  # t=T
    # single-act negotiation: gamma^0 = 1
    one = _agreed_record(t_max=1, n_acts=1)
    single = training.reinforce_coefficients(one, 4.0, 1.0, 0.5)
    assert single[0] == pytest.approx(3.0)


def test_reinforce_coefficients_grow_with_t():
    record = _agreed_record(n_acts=3)
    coeffs = training.reinforce_coefficients(record, reward=8.0, baseline_mean=1.0, gamma=0.9)
    alice_coeffs = [c for c, (who, _) in zip(coeffs, record.transcript.acts) if who == "A"]
    assert alice_coeffs == sorted(alice_coeffs)
    assert alice_coeffs[0] < alice_coeffs[-1]


def test_reinforce_update_at_baseline_is_noop(tiny_world):
    _, m = tiny_world
    alice = m.clone()
    record = _agreed_record()
    reward = training.engineered_reward(record.outcome, record.pair, "plain")
    baseline = BaselineState()
    baseline.update(reward)  # mean now equals the incoming reward
    log_probs = np.zeros(2)
    training.reinforce_update(alice, record, log_probs, baseline, RLConfig(lr=0.5))
    assert alice.params_equal(m)
    assert baseline.count == 2


def test_engineered_reward_variants():
    record = _agreed_record()
    out = record.outcome
    assert out.agreed
    plain = training.engineered_reward(out, record.pair, "plain")
    bonus = training.engineered_reward(out, record.pair, "pareto-bonus")
    norm = training.engineered_reward(out, record.pair, "pareto-bonus-normalized")
    p = 1.0 if out.pareto else 0.0
    assert bonus == plain + p
    assert norm == pytest.approx(plain / 10 + p)
    # disagreement scores zero under every variant
    pair = record.pair
    t = env.apply_act(env.new_transcript(pair), END)
    dis = env.resolve_outcome(t, Allocation(1, 1, 1), Allocation(1, 1, 1))
    for variant in training.REWARD_VARIANTS:
        assert training.engineered_reward(dis, pair, variant) == 0.0


def test_rl_train_keeps_bob_frozen(tiny_world):
    full, _ = tiny_world
    m = model.init_model(np.random.default_rng(20), hidden=12)
    training.sl_train(m, full, SLConfig(epochs=2), np.random.default_rng(21))
    alice = m.clone()
    bob = m.clone()
    bob_before = bob.clone()
    training.rl_train(
        alice, bob, Schedule(total_episodes=40), RLConfig(), None, None,
        np.random.default_rng(11), episodes_per_epoch=20, t_max=12,
    )
    assert bob.params_equal(bob_before)
    assert not alice.params_equal(m)  # some episodes scored, so Alice moved


def test_trailing_sl_pass_approximates_pure_rl(tiny_world):
    full, m = tiny_world
    pure = m.clone()
    training.rl_train(pure, m.clone(), Schedule(total_episodes=20), RLConfig(), None, None,
                      np.random.default_rng(12), episodes_per_epoch=20, t_max=8)
    trailing = m.clone()
    _, trace = training.rl_train(
        trailing, m.clone(), Schedule(total_episodes=20, period=20), RLConfig(),
        SLConfig(epochs=1), full, np.random.default_rng(12), episodes_per_epoch=20, t_max=8,
    )
    # identical episode stream; they differ only by the one trailing SL pass
    assert not trailing.params_equal(pure)
    stats = trace[0]
    assert stats.mean_reward >= 0.0


def test_rl_with_period_requires_corpus(tiny_world):
    _, m = tiny_world
    with pytest.raises(ValueError):
        training.rl_train(m.clone(), m.clone(), Schedule(total_episodes=10, period=2),
                          RLConfig(), SLConfig(), None, np.random.default_rng(0))


def test_rl_train_epoch_trace(tiny_world):
    _, m = tiny_world
    seen = []
    training.rl_train(
        m.clone(), m.clone(), Schedule(total_episodes=20), RLConfig(), None, None,
        np.random.default_rng(13), episodes_per_epoch=10, t_max=8,
        on_epoch=lambda e, mm, s: seen.append((e, s.mean_length)),
    )
    assert [e for e, _ in seen] == [1, 2]
    assert all(1 <= length <= 8 for _, length in seen)
