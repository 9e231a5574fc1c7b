import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nftincentive.env import (
    FEATURES,
    PENDING,
    ActionTuple,
    NftMarketEnv,
    Observation,
    observation_size,
    reward,
    validate_action,
)
from nftincentive.ledger import GENESIS_PUBLISHER, DagLedger, Kind
from nftincentive.market import MarketParams

from oracles import income_loop, outcome_loop


def small(**kw):
    base = dict(n_publishers=3, candidate_size=4, d_hat=3)
    base.update(kw)
    return MarketParams(**base)


def idle(n):
    return [ActionTuple.idle()] * n


def test_bootstrap_population():
    p = small()
    env = NftMarketEnv(p, seed=0)
    nfts = list(env.ledger.nfts.values())
    assert len(nfts) == 2 * p.candidate_size
    kinds = [n.kind for n in nfts]
    assert kinds.count(Kind.DATASET) == kinds.count(Kind.MODEL) == p.candidate_size
    assert all(0 < n.price <= p.psi_max and n.publisher == GENESIS_PUBLISHER for n in nfts)
    assert env.height == 0


def test_empty_ledger_observation():
    p = small()
    env = NftMarketEnv(p, seed=0)
    env.ledger = DagLedger(p)
    obs = env.observe(0)
    assert not obs.mask.any() and not obs.features.any()
    assert obs.vector().shape == (observation_size(p.candidate_size),)


def test_price_feature_scaled_to_cap():
    p = small()
    env = NftMarketEnv(p, seed=0)
    top = env.ledger.get(0)
    top.price = p.psi_max
    cands = env.ledger.candidate_set(env.rng, size=2 * p.candidate_size)
    only_top = type(cands)(tuple(e for e in cands if e.id == top.id))
    obs = env.encode(only_top, 0)
    assert obs.features[0, FEATURES.index("price")] == 1.0
    assert obs.mask.tolist() == [1.0, 0.0, 0.0, 0.0]


def test_observation_roundtrip():
    env = NftMarketEnv(small(), seed=1)
    obs = env.observe(1)
    back = Observation.from_vector(obs.vector(), env.params.candidate_size)
    np.testing.assert_array_equal(back.features, obs.features)
    np.testing.assert_array_equal(back.mask, obs.mask)
    np.testing.assert_array_equal(back.scalars, obs.scalars)
    with pytest.raises(ValueError):
        Observation.from_vector(obs.vector()[:-1], env.params.candidate_size)


def test_features_within_unit_box():
    env = NftMarketEnv(small(), seed=2)
    for _ in range(8):
        res = env.step([ActionTuple(True, 0.3, 0.2, (0.6, 0.4), 0.8)] * 3)
        for o in res.observations:
            v = o.vector()
            assert v.min() >= 0 and v.max() <= 1


def test_all_idle_advances_without_mints():
    env = NftMarketEnv(small(), seed=0)
    res = env.step(idle(3))
    assert res.height == 1 and env.height == 1
    assert res.mints == [] and res.rewards() == {}


def test_wrong_number_of_actions():
    env = NftMarketEnv(small(), seed=0)
    with pytest.raises(ValueError):
        env.step(idle(2))


@pytest.mark.parametrize("action,needle", [
    (ActionTuple(True, lam=1.2), "lambda"),
    (ActionTuple(True, pi_r=2.0), "pi_r"),
    (ActionTuple(True, price=0.0), "price"),
    (ActionTuple(True, ref_weights=(-0.1, 0.5)), "negative"),
    (ActionTuple(True, lam=1.0, pi_r=0.5), "excludes"),
    (ActionTuple(True, lam=float("nan")), "non-finite"),
])
def test_malformed_action_rejected_for_that_publisher_only(action, needle):
    env = NftMarketEnv(small(), seed=0)
    res = env.step([action, ActionTuple(True, 0.5), ActionTuple.idle()])
    assert [r.publisher for r in res.rejections] == [0]
    assert needle in res.rejections[0].reason
    assert [m.publisher for m in res.mints] == [1]


def test_full_down_payment_reward_is_income_minus_p0():
    p = small()
    env = NftMarketEnv(p, seed=3)
    res = env.step([ActionTuple(True, 1.0, 0.0, (0.5, 0.5), 0.5), ActionTuple.idle(), ActionTuple.idle()])
    nft = env.ledger.get(res.mints[0].nft_id)
    events = []
    for _ in range(p.d_hat):
        events += env.step(idle(3)).settlements
    (ev,) = [e for e in events if e.nft_id == nft.id]
    assert ev.height == nft.height + p.d_hat
    assert reward(ev) == pytest.approx(nft.income_total - nft.p0_total, abs=1e-12)
    assert env.reward_for(nft.id) == reward(ev)


def test_reward_pending_then_null_past_horizon():
    p = small(d_hat=5)
    env = NftMarketEnv(p, seed=0, horizon=2)
    nid = env.step([ActionTuple(True, 0.5)] + idle(2)).mints[0].nft_id
    assert env.reward_for(nid) is PENDING
    env.step(idle(3))
    assert env.reward_for(nid) is None


def test_rewards_equal_closed_form():
    p = small(n_publishers=4)
    env = NftMarketEnv(p, seed=5)
    rng = np.random.default_rng(0)
    settled = []
    for _ in range(20):
        acts = [ActionTuple(bool(rng.random() < 0.7), float(rng.uniform(0, 0.99)), float(rng.uniform(0, 1)),
                            (float(rng.random()), float(rng.random())), float(rng.uniform(0.01, 1)))
                for _ in range(4)]
        settled += env.step(acts).settlements
    mine = [e for e in settled if e.publisher >= 0]
    assert mine
    for ev in mine:
        nft = env.ledger.get(ev.nft_id)
        d = nft.derived
        assert ev.height == nft.height + d.d
        want = income_loop(p.k, d.sigma, nft.quality, [c for _, c, _ in nft.income_rounds], nft.bonus) - \
            outcome_loop(nft.lam, nft.pi_r, nft.p0_total, nft.quality, d.d, d.growth)
        assert reward(ev) == pytest.approx(want, rel=1e-9, abs=1e-12)


def test_same_seed_same_ledger():
    def play(seed):
        env = NftMarketEnv(small(), seed=seed)
        acts = [ActionTuple(True, 0.4, 0.1, (0.5, 0.5), 0.6), ActionTuple(True, 0.4, 0.1, (0.5, 0.5), 0.6),
                ActionTuple.idle()]
        for _ in range(6):
            env.step(acts)
        return [(n.id, n.publisher, n.theta, n.quality, n.payoff) for n in env.ledger.nfts.values()]
    assert play(11) == play(11)
    assert play(11) != play(12)


def test_published_nfts_reference_one_per_slot():
    env = NftMarketEnv(small(), seed=4)
    res = env.step([ActionTuple(True, 0.5, 0.0, (0.7, 0.3), 0.5)] * 3)
    for m in res.mints:
        nft = env.ledger.get(m.nft_id)
        assert nft.kind == Kind.COMPOSITE and len(nft.theta) <= 2
        assert nft.weights.w0 == env.params.w0
        assert sum(nft.weights.as_list()) == pytest.approx(1.0, abs=1e-12)


def test_reference_choice_prefers_quality_minus_price():
    env = NftMarketEnv(small(), seed=0, price_sensitivity=1.0)
    cands = env.ledger.candidate_set(env.rng, size=8)
    chosen = dict((slot, e) for slot, e in env._choose_refs(cands))
    for slot, e in chosen.items():
        pool = [c for c in cands if c.kind in (slot, Kind.COMPOSITE)]
        assert e.quality - e.price == max(c.quality - c.price for c in pool)


@settings(max_examples=60, deadline=None)
@given(st.booleans(), st.floats(0, 1), st.floats(0, 1), st.floats(0, 5), st.floats(0, 5), st.floats(0, 1))
def test_sanitized_actions_keep_invariants(trigger, lam, pi, wd, wm, price):
    p = small()
    act = ActionTuple(trigger, lam, pi, (wd, wm), price)
    if validate_action(p, act) is not None:
        return
    env = NftMarketEnv(p, seed=0)
    res = env.step([act] + idle(2))
    for m in res.mints:
        nft = env.ledger.get(m.nft_id)
        assert abs(sum(nft.weights.as_list()) - 1) <= 1e-9 and min(nft.weights.as_list()) >= 0
        assert 0 < nft.price <= p.psi_max


def test_bonus_decided_against_cached_candidates():
    env = NftMarketEnv(small(), seed=9)
    cached = dict(env._candidates)
    res = env.step([ActionTuple(True, 0.5)] * 3)
    assert res.mints
    for m in res.mints:
        nft = env.ledger.get(m.nft_id)
        assert nft.bonus_awarded == (nft.quality > cached[m.publisher].max_quality())
