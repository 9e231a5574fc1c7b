"""Hot numeric kernels with a compiled core and a pure-Python fallback.

The compiled extension is used when it imports; set ``NFTINC_PURE_PYTHON=1``
to force the fallback. ``BACKEND`` names the active implementation.
"""
import os

import numpy as np

from . import _fallback

fallback = _fallback

compiled = None
if not os.environ.get("NFTINC_PURE_PYTHON"):
    try:
        from . import _ckernels as compiled
    except ImportError:  # extension not built
        compiled = None

_impl = compiled if compiled is not None else _fallback
BACKEND = "cython" if compiled is not None else "python"

installment_sum = _impl.installment_sum
outcome_total = _impl.outcome_total
payoff_sigma_q = _impl.payoff_sigma_q


def income_total(k, sigma, eps, counts, bonus=0.0):
    return _impl.income_total(k, sigma, eps, np.asarray(counts, dtype=np.float64), bonus)


def game_payoff_table(gain, cost, eps, psi, fixed_reward, impl=None):
    """Payoff tensor of shape ``(n_players, A_0, ..., A_{n-1})``.

    Each argument except ``fixed_reward`` is a list with one 1-d array per
    player, indexed by that player's action. In a joint profile, player ``p``
    receives ``gain * (n - rank) - cost``, where ``rank`` counts opponents
    with a strictly lower price, plus ``fixed_reward`` when its quality
    strictly exceeds every opponent's.
    """
    impl = impl or _impl
    sizes = np.array([len(a) for a in gain], dtype=np.int64)
    flat = impl.game_payoff_table(
        np.concatenate(gain).astype(np.float64),
        np.concatenate(cost).astype(np.float64),
        np.concatenate(eps).astype(np.float64),
        np.concatenate(psi).astype(np.float64),
        sizes,
        float(fixed_reward),
    )
    return np.asarray(flat).reshape((len(sizes), *sizes.tolist()))
