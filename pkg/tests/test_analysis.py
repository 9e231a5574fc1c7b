import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nftincentive import analysis as an
from nftincentive.errors import FinalityError, GuardError, SimplexError
from nftincentive.market import MarketParams


# ---- finality

def test_partial_sum_example():
    assert an.geometric_partial_sum(0.5, 3) == 1.875
    assert an.geometric_closed_form(0.5, 3) == 1.875


@settings(max_examples=200)
@given(st.floats(1e-6, 1 - 1e-6), st.integers(1, 500))
def test_partial_sum_identity(sigma, d):
    assert math.isclose(an.geometric_partial_sum(sigma, d), an.geometric_closed_form(sigma, d), rel_tol=1e-12)


def test_verify_finality_passes(params):
    report = an.verify_finality(params, seed=3)
    assert report.passed and report.lifecycles == 100 and report.pairs == 100
    assert report.max_overrun == 0


def test_one_round_decay_has_one_income_round():
    led = an.random_lifecycles(MarketParams(d_hat=1, kappa_d=0.0), np.random.default_rng(0), 20)
    assert all(len(n.income_rounds) == 1 for n in led.nfts.values())


def test_finality_counterexample_is_named(params, monkeypatch):
    monkeypatch.setattr(an, "geometric_closed_form", lambda s, d: an.geometric_partial_sum(s, d) + 1.0)
    report = an.verify_finality(params, n_pairs=5)
    assert not report.passed and {"sigma", "d"} <= set(report.counterexamples[0])
    with pytest.raises(FinalityError) as err:
        an.verify_finality(params, n_pairs=5, raise_on_failure=True)
    assert err.value.sigma == report.counterexamples[0]["sigma"]


# ---- Hessians

def test_hessian_of_quadratic_form():
    rng = np.random.default_rng(0)
    m = rng.normal(size=(3, 3))
    Q = m + m.T
    H = an.hessian(lambda x: 0.5 * x @ Q @ x + x.sum(), rng.normal(size=3))
    assert np.abs(H - Q).max() < 1e-5


def test_hessian_terms_match_analytic():
    A, B, C = an.hessian_terms(lambda s, q: s ** 3 + 2 * s * q - q ** 2, 0.7, 0.2)
    assert A == pytest.approx(6 * 0.7, abs=1e-5)
    assert B == pytest.approx(2.0, abs=1e-5)
    assert C == pytest.approx(-2.0, abs=1e-5)


def test_convex_control_has_no_witness(params):
    sg, qg = an.default_grids(params)
    assert not an.nonconvexity_witness(lambda s, q: -s ** 2 - q ** 2, sg, qg).found


def test_saddle_witness_at_first_point(params):
    sg, qg = an.default_grids(params)
    w = an.nonconvexity_witness(lambda s, q: s * q, sg, qg)
    assert w.point == (sg[0], qg[0])
    assert w.determinant == pytest.approx(-1.0, abs=1e-6)
    assert w.n_negative == sg.size * qg.size


def test_default_surface_has_witness(params):
    sg, qg = an.default_grids(params)
    w = an.nonconvexity_witness(an.default_surface(params), sg, qg)
    assert w.found and w.determinant < -1e-8
    A, B, C = w.hessian
    assert A * C - B * B == pytest.approx(w.determinant)


def test_non_finite_points_are_excluded():
    sg = np.linspace(0, 1, 5)
    w = an.nonconvexity_witness(lambda s, q: np.where(s > 0.6, np.nan, s * q), sg, sg)
    assert w.excluded and all(s > 0.5 for s, _ in w.excluded)
    assert w.found


def test_surface_matches_closed_form(params):
    from nftincentive import market
    surf = an.default_surface(params)
    for s, q in [(0.6, 0.1), (0.9, 0.5)]:
        derived = market.DerivedTerms(surf.d, 1 + q, s)
        terms = market.NftTerms(surf.lam, surf.pi_r, surf.p0_total, surf.epsilon, derived,
                                referral_counts=(1.0,) * surf.d)
        assert float(surf(s, q)) == pytest.approx(market.closed_form_payoff(params, terms), rel=1e-12)


# ---- games

def matching_pennies():
    a = np.array([[1.0, -1.0], [-1.0, 1.0]])
    return an.DiscretizedGame.from_tables([a, -a])


def test_mixed_strategy_validation():
    an.MixedStrategy([0.25, 0.75])
    with pytest.raises(SimplexError):
        an.MixedStrategy([0.5, 0.6])
    with pytest.raises(SimplexError):
        an.MixedStrategy([1.2, -0.2])
    with pytest.raises(ValueError):
        an.MixedStrategy([])


def test_profile_shape_checked():
    g = matching_pennies()
    with pytest.raises(ValueError):
        an.exploitability(g, [np.array([1.0]), np.array([0.5, 0.5])])
    with pytest.raises(ValueError):
        an.exploitability(g, [np.array([0.5, 0.5])])


def test_matching_pennies_uniform_is_equilibrium():
    g = matching_pennies()
    assert an.exploitability(g, an.uniform_profile(g)) == pytest.approx(0.0, abs=1e-9)


def test_pure_equilibria_of_coordination_game():
    a = np.array([[2.0, 0.0], [0.0, 1.0]])
    g = an.DiscretizedGame.from_tables([a, a])
    assert an.exploitability(g, an.pure_profile(g, [0, 0])) == pytest.approx(0.0, abs=1e-9)
    assert an.exploitability(g, an.pure_profile(g, [1, 1])) == pytest.approx(0.0, abs=1e-9)
    # at (0, 1) player 1 gains 2 by switching to action 0
    assert an.exploitability(g, an.pure_profile(g, [0, 1])) == pytest.approx(2.0)
    # mixed equilibrium: each plays (1/3, 2/3)
    mix = [np.array([1 / 3, 2 / 3])] * 2
    assert an.exploitability(g, mix) == pytest.approx(0.0, abs=1e-9)


def test_profitable_deviation_of_one():
    a = np.array([[0.0, 0.0], [1.0, 1.0]])
    b = np.zeros((2, 2))
    g = an.DiscretizedGame.from_tables([a, b])
    assert an.exploitability(g, an.pure_profile(g, [0, 0])) == pytest.approx(1.0)


def test_single_action_best_response():
    g = an.DiscretizedGame.from_tables([np.array([[3.0]]), np.array([[4.0]])])
    assert an.best_response(g, 0, an.uniform_profile(g)) == (0, 3.0)


def test_best_response_separable_price():
    params = MarketParams()
    psi = np.linspace(0.1, 1.0, 10) * params.psi_max
    own = -(psi - 0.7 * params.psi_max) ** 2
    t0 = np.repeat(own[:, None], 10, axis=1)
    g = an.DiscretizedGame.from_tables([t0, t0.T])
    for opp in ([1.0] + [0.0] * 9, [0.1] * 10):
        idx, _ = an.best_response(g, 0, [np.full(10, 0.1), np.array(opp)])
        assert psi[idx] == pytest.approx(0.7)


def test_best_response_ties_to_lowest_index():
    g = an.DiscretizedGame.from_tables([np.ones((3, 2)), np.ones((3, 2))])
    assert an.best_response(g, 0, an.uniform_profile(g))[0] == 0
    assert an.best_response(g, 1, an.uniform_profile(g))[0] == 0


def test_best_response_dominates_exhaustively():
    rng = np.random.default_rng(0)
    g = an.DiscretizedGame.from_tables([rng.normal(size=(10, 10, 10)) for _ in range(3)])
    for _ in range(20):
        prof = [rng.dirichlet(np.ones(10)) for _ in range(3)]
        for p in range(3):
            idx, val = an.best_response(g, p, prof)
            for a in range(10):
                pure = list(prof)
                pure[p] = np.eye(10)[a]
                assert val >= an.expected_value(g, p, pure) - 1e-12
            assert an.exploitability(g, prof) >= 0


def test_expected_value_matches_brute_force():
    rng = np.random.default_rng(1)
    tables = [rng.normal(size=(2, 3, 4)) for _ in range(3)]
    g = an.DiscretizedGame.from_tables(tables)
    prof = [rng.dirichlet(np.ones(n)) for n in (2, 3, 4)]
    want = sum(tables[1][i, j, k] * prof[0][i] * prof[1][j] * prof[2][k]
               for i in range(2) for j in range(3) for k in range(4))
    assert an.expected_value(g, 1, prof) == pytest.approx(want, rel=1e-12)


def test_enumeration_guard():
    grid = list(range(10))
    with pytest.raises(GuardError, match=str(an.MAX_JOINT_EVALUATIONS)):
        an.DiscretizedGame.from_evaluator([grid] * 8, lambda prof: [0.0] * 8)
    with pytest.raises(GuardError):
        an.pricing_game(MarketParams(), [list(range(40))] * 5)


def test_from_evaluator_layout():
    g = an.DiscretizedGame.from_evaluator([[1, 2], [10, 20, 30]], lambda prof: [prof[0] * prof[1], -prof[1]])
    assert g.payoffs.shape == (2, 2, 3)
    assert g.payoffs[0, 1, 2] == 60 and g.payoffs[1, 0, 1] == -20


def test_pricing_game_matches_direct_terms():
    params = MarketParams()
    grid = an.pricing_grid(params)
    assert all(not (a.lam == 1.0 and a.pi_r > 0) for a in grid)
    g = an.pricing_game(params, [grid, grid])
    assert g.payoffs.shape == (2, len(grid), len(grid))
    i, j = 5, 17
    gi, ci, ei, pi = an._action_terms(params, an.GameContext(), grid[i])
    gj, cj, ej, pj = an._action_terms(params, an.GameContext(), grid[j])
    rank = int(pj < pi)
    want = gi * (2 - rank) + params.fixed_reward * (ei > ej) - ci
    assert g.payoffs[0, i, j] == pytest.approx(want, rel=1e-12)


def test_fictitious_play_finds_pennies_equilibrium():
    res = an.fictitious_play(matching_pennies(), 1000)
    assert len(res.exploitability) == 1000
    assert res.exploitability[-1] < 0.05
    np.testing.assert_allclose(res.profile[0], [0.5, 0.5], atol=0.05)


def test_fictitious_play_trend_on_pricing_game():
    params = MarketParams()
    grid = an.pricing_grid(params)
    g = an.pricing_game(params, [grid, grid])
    trace = an.fictitious_play(g, 1000).exploitability
    assert np.mean(trace[-100:]) < np.mean(trace[:100])
    assert an.fictitious_play(g, 50).exploitability == trace[:50]


def test_simulated_evaluator_is_deterministic():
    params = MarketParams(d_hat=3)
    grid = an.pricing_grid(params, lam_levels=(0.5,), pi_levels=(0.0,), share_levels=(0.5,), price_levels=(0.5, 1.0))
    ev = an.simulated_payoffs(params, seed=2)
    a = an.DiscretizedGame.from_evaluator([grid, grid], ev)
    b = an.DiscretizedGame.from_evaluator([grid, grid], an.simulated_payoffs(params, seed=2))
    np.testing.assert_array_equal(a.payoffs, b.payoffs)
    assert np.isfinite(a.payoffs).all()


def test_report_is_json():
    params = MarketParams()
    sg, qg = an.default_grids(params, 11)
    w = an.nonconvexity_witness(an.default_surface(params), sg, qg)
    buf = io.StringIO()
    an.write_report(buf, {"witness": w.to_dict(), "arr": np.arange(3), "x": np.float64(1.5)})
    data = json.loads(buf.getvalue())
    assert data["witness"]["found"] and data["arr"] == [0, 1, 2]
