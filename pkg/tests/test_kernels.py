import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nftincentive import kernels

from oracles import income_loop, outcome_loop

needs_compiled = pytest.mark.skipif(kernels.compiled is None, reason="compiled extension not built")

fb, cy = kernels.fallback, kernels.compiled


@needs_compiled
def test_active_backend_is_compiled():
    assert kernels.BACKEND == "cython"


@needs_compiled
@given(st.floats(1.0, 2.0), st.integers(1, 200), st.floats(0, 1))
def test_installment_sum_parity(growth, d, eps):
    assert cy.installment_sum(growth, d, eps) == pytest.approx(fb.installment_sum(growth, d, eps), rel=1e-13)


@needs_compiled
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0.01, 5), st.floats(0, 1), st.integers(1, 60), st.floats(1, 1.5))
def test_outcome_total_parity_and_oracle(lam, pi, p0, eps, d, growth):
    a = cy.outcome_total(lam, pi, p0, eps, d, growth)
    assert a == pytest.approx(fb.outcome_total(lam, pi, p0, eps, d, growth), rel=1e-13)
    assert a == pytest.approx(outcome_loop(lam, pi, p0, eps, d, growth), rel=1e-9)


@needs_compiled
@given(st.floats(0, 2), st.floats(0.5, 1), st.floats(0, 1),
       st.lists(st.integers(0, 10), min_size=1, max_size=60), st.floats(0, 20))
def test_income_total_parity_and_oracle(k, sigma, eps, counts, bonus):
    c = np.array(counts, dtype=float)
    a = cy.income_total(k, sigma, eps, c, bonus)
    assert a == fb.income_total(k, sigma, eps, c, bonus)
    assert a == pytest.approx(income_loop(k, sigma, eps, counts, bonus), rel=1e-9, abs=1e-12)


@needs_compiled
def test_payoff_surface_parity():
    rng = np.random.default_rng(0)
    s, q = rng.uniform(0.5, 1, 500), rng.uniform(0, 1, 500)
    counts = rng.integers(0, 4, 12).astype(float)
    args = (0.3, 0.6, 0.4, 0.2, 0.8, 12, counts, 2.0)
    np.testing.assert_allclose(cy.payoff_sigma_q(s, q, *args), fb.payoff_sigma_q(s, q, *args), rtol=1e-13)


@needs_compiled
def test_game_table_parity():
    rng = np.random.default_rng(1)
    sizes = [3, 4, 2]
    lists = [[rng.uniform(0, 1, n) for n in sizes] for _ in range(4)]
    lists[3][1][0] = lists[3][0][0]  # equal prices exercise the strict comparison
    a = kernels.game_payoff_table(*lists, 2.0, impl=cy)
    b = kernels.game_payoff_table(*lists, 2.0, impl=fb)
    assert a.shape == (3, 3, 4, 2)
    np.testing.assert_allclose(a, b, rtol=1e-14, atol=1e-15)


def test_game_table_by_hand():
    # two players, one action each: player 0 cheaper and better
    t = kernels.game_payoff_table([[1.0], [1.0]], [[0.5], [0.25]], [[0.9], [0.4]], [[0.2], [0.6]], 2.0)
    assert t[0, 0, 0] == pytest.approx(1.0 * 2 + 2.0 - 0.5)
    assert t[1, 0, 0] == pytest.approx(1.0 * 1 - 0.25)


def test_environment_switch_selects_fallback():
    env = {**os.environ, "NFTINC_PURE_PYTHON": "1"}
    out = subprocess.run([sys.executable, "-c", "from nftincentive import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
