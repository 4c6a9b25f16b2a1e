"""Noise-intensity and learning-rate schedules, plus per-node noise calibration.

The injected noise at iteration t is alpha(T - t) * sigma, so the multiplier
decays over the run while alpha itself is non-decreasing.  The learning-rate
coefficient beta is piecewise: alpha(t) * alpha(T - t) up to the switch point
Xi*T, alpha(t)^2 afterwards; the step size is eta / beta(t).

Calibration picks the base scale sigma that exhausts a node's (epsilon,
delta) budget over the whole schedule; the moment-generating-function bound
provides the independent accountant-side check of that choice.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Optional, Tuple

import numpy as np

from .errors import CalibrationError, ConfigurationError


@dataclass(frozen=True)
class NoiseSchedule:
    """Noise-intensity multiplier alpha over a horizon of T iterations.

    form "power":    alpha(t) = sqrt(K) * t^s, with alpha(0) defined as
                     alpha(1) so inverse-square sums stay finite.
    form "stepwise": alpha(t) = a1 * (floor(t / tau) + a2)^s, constant on
                     intervals of length tau.

    s >= 0 gives the non-decreasing multiplier the calibration formula
    expects; negative s is accepted to reproduce decreasing-form sums and is
    flagged by is_monotone().
    """

    form: str
    T: int
    s: float
    tau: int = 1
    K: float = 1.0
    a1: float = 1.0
    a2: float = 10.0

    def __post_init__(self):
        if self.form not in ("power", "stepwise"):
            raise ConfigurationError(f"unknown noise schedule form {self.form!r}")
        if self.T < 1:
            raise ConfigurationError(f"T must be >= 1, got {self.T}")
        if self.tau < 1:
            raise ConfigurationError(f"tau must be >= 1, got {self.tau}")
        if self.form == "power" and self.K <= 0:
            raise ConfigurationError(f"K must be > 0, got {self.K}")
        if self.form == "stepwise" and (self.a1 <= 0 or self.a2 <= 0):
            raise ConfigurationError("stepwise form needs a1 > 0 and a2 > 0")

    def is_monotone(self) -> bool:
        return self.s >= 0


@dataclass(frozen=True)
class LrSchedule:
    """Base step size eta and the switch fraction Xi of the beta coefficient.

    p records the exponent when eta was derived as K*sqrt(n)/T^p; it is
    informational here and consumed by the theory calculators.
    """

    eta_base: float
    xi: float
    p: Optional[float] = None

    def __post_init__(self):
        if self.eta_base <= 0:
            raise ConfigurationError(f"eta must be > 0, got {self.eta_base}")
        if not (0.0 < self.xi < 1.0):
            raise ConfigurationError(f"xi must lie in (0,1), got {self.xi}")


def eta_from_exponent(K: float, n: int, T: int, p: float) -> float:
    """Resolve eta = K * sqrt(n) / T^p."""
    return float(K * np.sqrt(n) / float(T) ** p)


def alpha_at(schedule: NoiseSchedule, t: int) -> float:
    """alpha at iteration t.

    Accepts t in [0, T]: the closed end is needed because the injected
    multiplier at iteration 0 is alpha(T).
    """
    if not (0 <= t <= schedule.T):
        raise IndexError(f"t={t} outside [0, {schedule.T}]")
    if schedule.form == "power":
        base = max(t, 1)  # alpha(0) := alpha(1)
        return np.sqrt(schedule.K) * float(base) ** schedule.s
    return schedule.a1 * float(t // schedule.tau + schedule.a2) ** schedule.s


def beta_at(schedule: NoiseSchedule, lr: LrSchedule, t: int) -> float:
    """Piecewise learning-rate coefficient beta(t)."""
    if not (0 <= t < schedule.T):
        raise IndexError(f"t={t} outside [0, {schedule.T})")
    a_t = alpha_at(schedule, t)
    if t <= lr.xi * schedule.T:
        return a_t * alpha_at(schedule, schedule.T - t)
    return a_t * a_t


def lr_at(schedule: NoiseSchedule, lr: LrSchedule, t: int) -> float:
    """Step size at iteration t: eta / beta(t)."""
    return lr.eta_base / beta_at(schedule, lr, t)


@lru_cache(maxsize=256)
def inverse_square_sum(schedule: NoiseSchedule) -> float:
    """Sum of 1/alpha(t)^2 over t = 0..T-1 (the calibration sum)."""
    return float(sum(1.0 / alpha_at(schedule, t) ** 2 for t in range(schedule.T)))


def beta_sum_dominance(schedule: NoiseSchedule, lr: LrSchedule) -> Tuple[float, float]:
    """Return (sum of 1/beta(t), sum of 1/alpha(t)^2) over the horizon.

    The first never exceeds the second for non-decreasing alpha; callers
    assert lhs <= rhs.
    """
    lhs = float(sum(1.0 / beta_at(schedule, lr, t) for t in range(schedule.T)))
    return lhs, inverse_square_sum(schedule)


@dataclass
class PrivacyBudget:
    """Per-node privacy budget plus the calibrated base noise scale.

    sampling_ratio is the per-sample inclusion probability of the node's
    batch draw.  c1 and c2 are the accountant constants; they have no
    canonical values, so both default to 1 and stay configurable.  sigma is
    filled in by calibrate_sigma.
    """

    epsilon: float
    delta: float
    sampling_ratio: float
    c1: float = 1.0
    c2: float = 1.0
    sigma: Optional[float] = None

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ConfigurationError(f"epsilon must be > 0, got {self.epsilon}")
        if not (0.0 < self.delta < 1.0):
            raise ConfigurationError(f"delta must lie in (0,1), got {self.delta}")
        if not (0.0 < self.sampling_ratio <= 1.0):
            raise ConfigurationError(
                f"sampling_ratio must lie in (0,1], got {self.sampling_ratio}"
            )
        if self.c1 <= 0 or self.c2 <= 0:
            raise ConfigurationError("c1 and c2 must be > 0")


def calibrate_sigma(budget: PrivacyBudget, G: float, schedule: NoiseSchedule) -> float:
    """Base noise scale exhausting (epsilon, delta) over the whole schedule.

    sigma = G * c2 * varsigma * sqrt(ln(1/delta)) / epsilon
            * sqrt(sum_t 1/alpha(t)^2)

    The result is stored into budget.sigma and returned.  Requires the
    regime condition epsilon < c1 * varsigma^2 * T.
    """
    if G <= 0:
        raise ValueError(f"clip threshold must be > 0, got {G}")
    limit = budget.c1 * budget.sampling_ratio**2 * schedule.T
    if not (budget.epsilon < limit):
        raise CalibrationError(
            f"epsilon={budget.epsilon:.6g} violates epsilon < c1*varsigma^2*T "
            f"= {limit:.6g}; raise c1, the sampling ratio, or T"
        )
    sigma = (
        G
        * budget.c2
        * budget.sampling_ratio
        * np.sqrt(np.log(1.0 / budget.delta))
        / budget.epsilon
        * np.sqrt(inverse_square_sum(schedule))
    )
    budget.sigma = float(sigma)
    return budget.sigma


def moments_bound(order: float, budget: PrivacyBudget, schedule: NoiseSchedule) -> float:
    """Log-MGF bound of the privacy loss at a given order.

    order*(order+1) * varsigma^2 / (2*sigma^2) * sum_t 1/alpha(t)^2, where
    sigma is read as the sensitivity-normalized noise multiplier.
    """
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    if budget.sigma is None:
        raise CalibrationError("budget.sigma not calibrated; run calibrate_sigma first")
    if budget.sigma == 0:
        raise CalibrationError("moments bound undefined for sigma = 0")
    return (
        order
        * (order + 1)
        * budget.sampling_ratio**2
        / (2.0 * budget.sigma**2)
        * inverse_square_sum(schedule)
    )


DEFAULT_ORDERS = tuple(range(1, 65))


def delta_bound(
    budget: PrivacyBudget,
    schedule: NoiseSchedule,
    epsilon: Optional[float] = None,
    orders: Iterable[int] = DEFAULT_ORDERS,
) -> float:
    """Smallest delta certified at epsilon: min over orders of
    exp(moments_bound(order) - order * epsilon)."""
    eps = budget.epsilon if epsilon is None else epsilon
    # exp is monotone: exponentiate the smallest log to avoid overflow
    best = min(moments_bound(lam, budget, schedule) - lam * eps for lam in orders)
    return float(np.exp(min(best, 700.0)))


def epsilon_spent(
    budget: PrivacyBudget,
    schedule: NoiseSchedule,
    delta: Optional[float] = None,
    orders: Iterable[int] = DEFAULT_ORDERS,
) -> float:
    """Smallest epsilon certified at delta: min over orders of
    (moments_bound(order) + ln(1/delta)) / order."""
    dlt = budget.delta if delta is None else delta
    return min(
        float((moments_bound(lam, budget, schedule) + np.log(1.0 / dlt)) / lam)
        for lam in orders
    )
