"""Closed-form average age of information of a client.

Under instantaneous downlink, with ``Y = c + X_{k:m} + Z_{m:n}`` the length
of one iteration (uplink order statistic ``X`` at rate ``mu_up``, availability
order statistic ``Z`` at rate ``lambda``), the long-run average age of any
client is

    delta1 + delta2 + delta3
    delta1 = (1/k) sum_{i<=k} E[X_{i:m}]          uplink delay of a deliverer
    delta2 = (2n - k)/(2k) * E[Y]                  geometric update spacing
    delta3 = Var[Y] / (2 E[Y])                     iteration-time jitter
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .order_stats import (
    DomainError,
    exp_order_mean,
    exp_order_var,
    mean_order_prefix_avg,
)

__all__ = [
    "AgeBreakdown",
    "ApproxParams",
    "DomainError",
    "SystemParams",
    "UpdateCycleModel",
    "age_approx",
    "age_exact",
    "geometric_moments",
    "iteration_time_moments",
    "mean_conditional_uplink",
]


@dataclass(frozen=True)
class SystemParams:
    """Population and timing parameters of the protocol.

    ``mu_down=None`` means the downlink is instantaneous; that is the only
    setting the closed forms support.  The simulator also accepts a finite
    downlink rate.
    """

    n: int
    m: int
    k: int
    lam: float
    mu_up: float
    c: float
    mu_down: float | None = None

    def __post_init__(self) -> None:
        for name in ("n", "m", "k"):
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v:
                raise DomainError(f"{name} must be an integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if self.n < 1:
            raise DomainError(f"n must be >= 1, got {self.n}")
        if not 1 <= self.k <= self.m <= self.n:
            raise DomainError(
                f"need 1 <= k <= m <= n, got k={self.k}, m={self.m}, n={self.n}"
            )
        for name in ("lam", "mu_up"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise DomainError(f"{name} must be a positive finite rate, got {v}")
        if self.mu_down is not None and not (self.mu_down > 0 and math.isfinite(self.mu_down)):
            raise DomainError(f"mu_down must be a positive finite rate or None, got {self.mu_down}")
        if not (self.c >= 0 and math.isfinite(self.c)):
            raise DomainError(f"c must be >= 0, got {self.c}")

    @property
    def instant_downlink(self) -> bool:
        return self.mu_down is None

    def replace(self, **changes) -> "SystemParams":
        fields = dict(n=self.n, m=self.m, k=self.k, lam=self.lam,
                      mu_up=self.mu_up, c=self.c, mu_down=self.mu_down)
        fields.update(changes)
        return SystemParams(**fields)


@dataclass(frozen=True)
class UpdateCycleModel:
    """Number of iterations between two deliveries of one client (geometric)."""

    p1: float
    p2: float
    p: float
    mean_M: float
    second_moment_M: float

    @property
    def age_coefficient(self) -> float:
        """``E[M^2] / (2 E[M])``, equal to ``(2n - k) / (2k)``."""
        return self.second_moment_M / (2.0 * self.mean_M)


@dataclass(frozen=True)
class AgeBreakdown:
    delta1: float
    delta2: float
    delta3: float
    total: float
    mean_Y: float
    var_Y: float


@dataclass(frozen=True)
class ApproxParams:
    """``alpha = m/n`` and ``beta = k/m``, both strictly inside (0, 1)."""

    alpha: float
    beta: float

    def __post_init__(self) -> None:
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise DomainError(f"{name} must lie strictly in (0, 1), got {v}")

    @classmethod
    def from_counts(cls, n: int, m: int, k: int) -> "ApproxParams":
        return cls(m / n, k / m)


def _require_instant(params: SystemParams) -> None:
    if not params.instant_downlink:
        raise DomainError(
            "closed-form age requires an instantaneous downlink (mu_down=None); "
            "use the simulator for a finite downlink rate"
        )


def iteration_time_moments(params: SystemParams) -> tuple[float, float]:
    """Mean and variance of the iteration length ``c + X_{k:m} + Z_{m:n}``."""
    _require_instant(params)
    n, m, k = params.n, params.m, params.k
    mean = params.c + exp_order_mean(k, m, params.mu_up) + exp_order_mean(m, n, params.lam)
    var = exp_order_var(k, m, params.mu_up) + exp_order_var(m, n, params.lam)
    return float(mean), float(var)


def mean_conditional_uplink(params: SystemParams) -> float:
    """Expected uplink delay of a client given that it is among the earliest k."""
    return float(mean_order_prefix_avg(params.k, params.m, params.mu_up))


def geometric_moments(n: int, k: int, m: int | None = None) -> UpdateCycleModel:
    """Moments of the geometric inter-delivery count ``M`` with ``p = k/n``.

    ``m`` only splits ``p`` into participation (``m/n``) and delivery
    (``k/m``) probabilities; it defaults to ``n``.
    """
    m = n if m is None else m
    if not 1 <= k <= m <= n:
        raise DomainError(f"need 1 <= k <= m <= n, got k={k}, m={m}, n={n}")
    p = k / n
    return UpdateCycleModel(
        p1=m / n,
        p2=k / m,
        p=p,
        mean_M=1.0 / p,
        second_moment_M=(2.0 - p) / (p * p),
    )


def age_exact(params: SystemParams) -> AgeBreakdown:
    _require_instant(params)
    mean_y, var_y = iteration_time_moments(params)
    d1 = mean_conditional_uplink(params)
    d2 = (2 * params.n - params.k) / (2 * params.k) * mean_y
    d3 = var_y / (2.0 * mean_y)
    return AgeBreakdown(
        delta1=d1, delta2=d2, delta3=d3, total=d1 + d2 + d3, mean_Y=mean_y, var_Y=var_y
    )


def age_approx(approx: ApproxParams, lam: float, mu_up: float, c: float) -> float:
    """Large-population approximation of the average age.

    Keeps the first two terms' leading behaviour with ``H_i ~ log i`` and
    drops the variance term.
    """
    if not (lam > 0 and mu_up > 0):
        raise DomainError(f"rates must be > 0, got lam={lam}, mu_up={mu_up}")
    if not c >= 0:
        raise DomainError(f"c must be >= 0, got {c}")
    a, b = approx.alpha, approx.beta
    ab = a * b
    return (
        1.0 / mu_up
        + (2.0 - ab) * c / (2.0 * ab)
        - (2.0 - ab) / (2.0 * ab * lam) * math.log(1.0 - a)
        + (a * (2.0 - b) - 2.0) / (2.0 * ab * mu_up) * math.log(1.0 - b)
    )
