"""Rules deciding whether a sampled point may start a local run.

A point qualifies only if it passes four checks: it has never started a run
(S4), it is not within tau of the domain boundary (S3), it is not within
omega of an already identified minimum (S2), and no neighbor inside the
current critical radius is probabilistically better (S1). S1 bounds the
probability that a neighbor's estimate exceeds the candidate's by more than
a variance-scaled margin, via Chebyshev's inequality on the difference of
the two independent estimates.

With the plug-in margin eps = sqrt(var_diff / beta) built from the same
estimated variance, the bound lands at or below beta exactly when the
neighbor's sample mean is at or below the candidate's, so the default test
degenerates to a sample-mean comparison. The probability-bound form is kept
as the primitive so alternative margins (``epsilon_multiplier`` != 1)
remain available.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, TYPE_CHECKING

import numpy as np

from .core import BoxDomain, SamplePoint

if TYPE_CHECKING:  # pragma: no cover
    from .driver import MansoState

__all__ = [
    "StartRuleConfig",
    "StartDecision",
    "chebyshev_prob_bound",
    "check_s1",
    "check_s2",
    "check_s3",
    "evaluate_start_conditions",
]


@dataclass(frozen=True)
class StartRuleConfig:
    """Tolerances for the start conditions.

    beta in (0, 1/2) is the probability level of S1, omega the identified-
    minimum exclusion radius of S2, tau the boundary margin of S3, and n the
    sampling effort per point (n >= 2 so variances are defined).
    """

    beta: float
    omega: float
    tau: float
    n: int
    epsilon_multiplier: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.beta < 0.5):
            raise ValueError(f"beta must lie in (0, 1/2), got {self.beta}")
        if self.omega <= 0:
            raise ValueError("omega must be positive")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.n < 2:
            raise ValueError("sampling effort n must be >= 2")
        if self.epsilon_multiplier <= 0:
            raise ValueError("epsilon_multiplier must be positive")


@dataclass(frozen=True)
class StartDecision:
    start: bool
    rejected_by: Optional[str] = None  # one of "S1".."S4" when start is False
    witness: Optional[int] = None  # index of the point that defeated S1

    def __post_init__(self):
        if self.start != (self.rejected_by is None):
            raise ValueError("start must be true exactly when rejected_by is absent")


def chebyshev_prob_bound(
    mean_diff: float,
    var_diff: float,
    beta: float,
    epsilon_multiplier: float = 1.0,
) -> float:
    """Upper bound on P(estimate(z) - estimate(a) > eps).

    eps = epsilon_multiplier * sqrt(var_diff / beta). Returns a value in
    [0, 1]: 1 when the mean difference already reaches eps, otherwise the
    Chebyshev bound var_diff / (eps - mean_diff)^2 clipped to 1. A noiseless
    tie or improvement (var_diff = 0, mean_diff <= 0) yields 0.
    """
    if not (0.0 < beta < 0.5):
        raise ValueError(f"beta must lie in (0, 1/2), got {beta}")
    if var_diff < 0:
        raise ValueError("var_diff must be nonnegative")
    if var_diff == 0.0:
        return 0.0 if mean_diff <= 0 else 1.0
    eps = epsilon_multiplier * math.sqrt(var_diff / beta)
    if mean_diff >= eps:
        return 1.0
    bound = min(1.0, var_diff / (eps - mean_diff) ** 2)
    if epsilon_multiplier == 1.0:
        # Algebraically the plug-in bound sits at or below beta exactly when
        # mean_diff <= 0; keep the float result on the correct side so the
        # witness decision never flips on sqrt/division roundoff.
        if mean_diff <= 0:
            bound = min(bound, beta)
        else:
            bound = max(bound, math.nextafter(beta, 1.0))
    return bound


def check_s1(
    a: SamplePoint,
    candidates: Sequence[SamplePoint],
    r_k: float,
    cfg: StartRuleConfig,
) -> StartDecision:
    """S1: no probabilistically better point inside the ball B(a, r_k).

    A candidate z defeats a when ||z - a|| <= r_k and the Chebyshev bound on
    P(estimate(z) worse than a by more than eps) is at most beta. Estimates
    at distinct points are independent, so the variance of the difference is
    the sum of the two variances.
    """
    if a.stats.n < 2:
        raise ValueError("S1 requires estimates with n >= 2")
    for idx, z in enumerate(candidates):
        if z is a:
            continue
        if z.stats.n < 2:
            raise ValueError("S1 requires estimates with n >= 2")
        if np.linalg.norm(z.x - a.x) > r_k:
            continue
        bound = chebyshev_prob_bound(
            z.stats.mean - a.stats.mean,
            z.stats.var_of_mean + a.stats.var_of_mean,
            cfg.beta,
            cfg.epsilon_multiplier,
        )
        if bound <= cfg.beta:
            return StartDecision(start=False, rejected_by="S1", witness=idx)
    return StartDecision(start=True)


def check_s2(a: np.ndarray, identified: Sequence[np.ndarray], omega: float) -> bool:
    """S2: a lies outside every closed omega-ball around identified minima."""
    a = np.asarray(a, dtype=float)
    for x in identified:
        if np.linalg.norm(a - np.asarray(x, dtype=float)) <= omega:
            return False
    return True


def check_s3(a: np.ndarray, domain: BoxDomain, tau: float) -> bool:
    """S3: a is not within tau of the domain boundary.

    The boundary neighborhood is open (strict inequality), so slack exactly
    equal to tau counts as outside it.
    """
    return domain.boundary_distance(a) >= tau


def evaluate_start_conditions(
    a: SamplePoint,
    state: "MansoState",
    r_k: float,
    cfg: StartRuleConfig,
) -> StartDecision:
    """Apply S4, S3, S2, S1 in that order and report the first failure.

    Constant-time checks run before the O(|S|) neighborhood scan; the order
    does not change the outcome, only the reported reason.
    """
    if state.started_flag(a.index):
        return StartDecision(start=False, rejected_by="S4")
    if not check_s3(a.x, state.domain, cfg.tau):
        return StartDecision(start=False, rejected_by="S3")
    if not check_s2(a.x, state.identified_centers(), cfg.omega):
        return StartDecision(start=False, rejected_by="S2")
    return check_s1(a, state.S, r_k, cfg)
