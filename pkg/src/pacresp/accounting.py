"""MI budget -> membership-inference success bounds and DP-equivalent epsilon.

Budgets here are in nats, the unit the KL bound is written in. The
power-of-two budgets quoted in guarantee tables are plugged in directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .core import LN2, InvalidParameter

BISECT_TOL = 1e-12
UPPER_BRACKET = 1.0 - 1e-15


def bernoulli_kl(success: float, prior_success: float) -> float:
    """``KL(Bern(success) || Bern(prior_success))`` in nats, with ``0 log 0 = 0``."""
    a, a0 = success, prior_success
    out = 0.0
    if a > 0:
        out += a * math.log(a / a0)
    if a < 1:
        out += (1 - a) * math.log((1 - a) / (1 - a0))
    return out


def mia_bound_from_mi(B: float, delta0: float = 0.5) -> float:
    """Largest success rate ``1 - delta_A`` whose posterior advantage fits in ``B`` nats.

    Bisection on ``[1 - delta0, 1 - 1e-15]`` where the Bernoulli KL is
    increasing. Returns 1.0 when even the upper bracket fits (vacuous bound).
    """
    if not 0 < delta0 < 1:
        raise InvalidParameter(f"delta0 must lie in (0, 1), got {delta0!r}")
    if B < 0 or math.isnan(B):
        raise InvalidParameter(f"MI budget must be nonnegative, got {B!r}")
    lo = 1.0 - delta0
    if B == 0:
        return lo
    if bernoulli_kl(UPPER_BRACKET, lo) <= B:
        return 1.0
    hi = UPPER_BRACKET
    while hi - lo > BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if bernoulli_kl(mid, 1.0 - delta0) <= B:
            lo = mid
        else:
            hi = mid
    return lo


def dp_mia_bound(eps: float, delta: float = 0.0) -> float:
    """MIA success ceiling implied by ``(eps, delta)``-DP: ``1 - (1 - delta) / (1 + e^eps)``."""
    if eps < 0:
        raise InvalidParameter("eps must be nonnegative")
    return 1.0 - (1.0 - delta) / (1.0 + math.exp(eps))


def dp_epsilon_for_bound(mia_bound: float, delta: float = 1e-5) -> float:
    """Invert :func:`dp_mia_bound` in ``eps``."""
    if not 0 <= delta < 1:
        raise InvalidParameter("delta must lie in [0, 1)")
    floor = dp_mia_bound(0.0, delta)
    if not floor <= mia_bound < 1:
        raise InvalidParameter(
            f"bound {mia_bound!r} not achievable at delta={delta}: need [{floor}, 1)"
        )
    ratio = (1.0 - delta) / (1.0 - mia_bound) - 1.0
    return max(math.log(ratio), 0.0)


def dp_epsilon_equiv(B: float, delta: float = 1e-5, delta0: float = 0.5) -> float:
    """DP epsilon with the same MIA ceiling as budget ``B``; ``inf`` once the bound is vacuous."""
    bound = mia_bound_from_mi(B, delta0)
    if bound >= 1.0:
        return math.inf
    if bound <= dp_mia_bound(0.0, delta):
        return 0.0
    return dp_epsilon_for_bound(bound, delta)


def max_queries_for_epsilon(b: float, eps: float, delta: float = 1e-5) -> int:
    """Largest ``T`` with ``mia_bound_from_mi(T * b) <= dp_mia_bound(eps, delta)``."""
    if not b > 0:
        raise InvalidParameter("per-step budget must be positive")
    target = dp_mia_bound(eps, delta)

    def ok(T: int) -> bool:
        return mia_bound_from_mi(T * b, 0.5) <= target

    if not ok(1):
        return 0
    lo, hi = 1, 2
    while ok(hi):
        lo, hi = hi, hi * 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def static_composition_bound(b: float, b_prime: float, T: int, cap: bool = True) -> float:
    """Cumulative MI bound of static (prior-calibrated) composition after ``T`` steps.

    ``B_1 = b`` and ``B_t = B_{t-1} + min(b' sqrt(2 B_{t-1}) + b, b')``. With
    ``cap=False`` the ``min`` is dropped, which is the recurrence obtained
    when ``b' >> b`` is assumed to keep the first branch active.
    """
    if T < 1:
        raise InvalidParameter("T must be >= 1")
    if cap and b_prime <= b:
        # the cap is always the smaller branch: B_T = b + (T - 1) b', written so b' = b gives b * T
        return b_prime * T + (b - b_prime)
    B = b
    for _ in range(T - 1):
        inc = b_prime * math.sqrt(2.0 * B) + b
        B += min(inc, b_prime) if cap else inc
    return B


def static_composition_path(b: float, b_prime: float, T: int, cap: bool = True) -> list[float]:
    if cap and b_prime <= b:
        return [b_prime * t + (b - b_prime) for t in range(1, T + 1)]
    path = [b]
    for _ in range(T - 1):
        B = path[-1]
        inc = b_prime * math.sqrt(2.0 * B) + b
        path.append(B + (min(inc, b_prime) if cap else inc))
    return path


@dataclass(frozen=True)
class GuaranteeRow:
    b_nats: float
    T: int
    total_mi_nats: float
    mia_bound: float
    dp_epsilon_equiv: float
    prior_failure: float = 0.5
    dp_delta: float = 1e-5

    @property
    def b_bits(self) -> float:
        return self.b_nats / LN2

    @property
    def total_mi_bits(self) -> float:
        return self.total_mi_nats / LN2


def guarantee_row(b: float, T: int, delta0: float = 0.5, dp_delta: float = 1e-5) -> GuaranteeRow:
    total = b * T
    return GuaranteeRow(
        b_nats=b,
        T=T,
        total_mi_nats=total,
        mia_bound=mia_bound_from_mi(total, delta0),
        dp_epsilon_equiv=dp_epsilon_equiv(total, dp_delta, delta0),
        prior_failure=delta0,
        dp_delta=dp_delta,
    )


GRID_BUDGETS = tuple(2.0**-k for k in (4, 8, 12, 16, 20, 24, 28, 32))
GRID_HORIZONS = tuple(10**k for k in range(7))
GRID_DP_TARGETS = (1.0, 8.0)


def guarantee_table(
    budgets: Sequence[float] = GRID_BUDGETS,
    horizons: Sequence[int] = GRID_HORIZONS,
    dp_delta: float = 1e-5,
) -> list[GuaranteeRow]:
    return [guarantee_row(b, T, dp_delta=dp_delta) for T in horizons for b in budgets]


def footer_rows(
    budgets: Iterable[float] = GRID_BUDGETS,
    eps_targets: Iterable[float] = GRID_DP_TARGETS,
    dp_delta: float = 1e-5,
) -> dict[float, list[int]]:
    budgets = list(budgets)
    return {eps: [max_queries_for_epsilon(b, eps, dp_delta) for b in budgets] for eps in eps_targets}
