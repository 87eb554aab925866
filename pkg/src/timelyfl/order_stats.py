"""Moments of exponential order statistics via harmonic numbers.

For ``n`` i.i.d. ``Exp(rate)`` variables the ``i``-th smallest has

    E[Z_{i:n}]   = (H_n - H_{n-i}) / rate
    Var[Z_{i:n}] = (G_n - G_{n-i}) / rate**2

with ``H_n = sum 1/j`` and ``G_n = sum 1/j**2``.  Shifted exponentials are
handled by callers: a common additive shift moves every order statistic by
the same constant and leaves variances untouched.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

__all__ = [
    "CapacityError",
    "DomainError",
    "ExpOrderMoments",
    "HarmonicCache",
    "exp_order_mean",
    "exp_order_moments",
    "exp_order_var",
    "get_cache",
    "harmonic",
    "harmonic2",
    "harmonic_prefix_identity",
    "mean_order_prefix_avg",
]


class DomainError(ValueError):
    """An argument lies outside the domain of a formula."""


class CapacityError(IndexError):
    """A harmonic index exceeds the capacity of the cache."""


@dataclass(frozen=True)
class HarmonicCache:
    """Prefix sums ``h[i] = H_i`` and ``g[i] = G_i`` for ``0 <= i <= max_index``.

    Built once by forward summation in double precision; read-only afterwards.
    """

    max_index: int
    h: np.ndarray
    g: np.ndarray

    @classmethod
    def build(cls, max_index: int) -> "HarmonicCache":
        if max_index < 1:
            raise DomainError(f"max_index must be >= 1, got {max_index}")
        j = np.arange(1, max_index + 1, dtype=np.float64)
        h = np.zeros(max_index + 1)
        g = np.zeros(max_index + 1)
        np.cumsum(1.0 / j, out=h[1:])
        np.cumsum(1.0 / (j * j), out=g[1:])
        h.flags.writeable = False
        g.flags.writeable = False
        return cls(max_index, h, g)

    def _check(self, i: int) -> int:
        i = int(i)
        if i < 0:
            raise DomainError(f"harmonic index must be >= 0, got {i}")
        if i > self.max_index:
            raise CapacityError(
                f"harmonic index {i} exceeds cache capacity {self.max_index}"
            )
        return i


_DEFAULT_CAPACITY = 4096
_cache = HarmonicCache.build(_DEFAULT_CAPACITY)
_cache_lock = threading.Lock()


def get_cache(min_index: int = 0) -> HarmonicCache:
    """Shared cache with capacity at least ``min_index``.

    Growing swaps in a new immutable cache, so previously handed-out caches
    stay valid.
    """
    global _cache
    cache = _cache
    if min_index <= cache.max_index:
        return cache
    with _cache_lock:
        if min_index > _cache.max_index:
            size = max(min_index, 2 * _cache.max_index)
            _cache = HarmonicCache.build(size)
        return _cache


def harmonic(cache: HarmonicCache, i: int) -> float:
    """``H_i``, with ``H_0 = 0``."""
    return float(cache.h[cache._check(i)])


def harmonic2(cache: HarmonicCache, i: int) -> float:
    """``G_i = sum_{j<=i} 1/j**2``, with ``G_0 = 0``."""
    return float(cache.g[cache._check(i)])


def _check_order(i: int, n: int, rate: float) -> None:
    if not 1 <= i <= n:
        raise DomainError(f"order statistic index must satisfy 1 <= i <= n, got i={i}, n={n}")
    if not rate > 0:
        raise DomainError(f"rate must be > 0, got {rate}")


def exp_order_mean(i: int, n: int, rate: float) -> float:
    """Mean of the ``i``-th smallest of ``n`` i.i.d. ``Exp(rate)`` draws."""
    _check_order(i, n, rate)
    cache = get_cache(n)
    return (cache.h[n] - cache.h[n - i]) / rate


def exp_order_var(i: int, n: int, rate: float) -> float:
    """Variance of the ``i``-th smallest of ``n`` i.i.d. ``Exp(rate)`` draws."""
    _check_order(i, n, rate)
    cache = get_cache(n)
    return (cache.g[n] - cache.g[n - i]) / (rate * rate)


@dataclass(frozen=True)
class ExpOrderMoments:
    mean: float
    variance: float
    order: int
    sample_size: int
    rate: float


def exp_order_moments(i: int, n: int, rate: float) -> ExpOrderMoments:
    return ExpOrderMoments(
        mean=float(exp_order_mean(i, n, rate)),
        variance=float(exp_order_var(i, n, rate)),
        order=i,
        sample_size=n,
        rate=rate,
    )


def mean_order_prefix_avg(k: int, m: int, rate: float) -> float:
    """Average of the first ``k`` order-statistic means out of ``m`` draws.

    Closed form ``(1/rate) * (1 - (m-k)/k * (H_m - H_{m-k}))``, obtained from
    ``sum_{i<=k} H_i = (k+1)(H_{k+1} - 1)``.
    """
    _check_order(k, m, rate)
    cache = get_cache(m)
    return (1.0 - (m - k) / k * (cache.h[m] - cache.h[m - k])) / rate


def harmonic_prefix_identity(k: int) -> tuple[float, float]:
    """Both sides of ``sum_{i=1}^k H_i = (k+1)(H_{k+1} - 1)``."""
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    cache = get_cache(k + 1)
    lhs = float(np.sum(cache.h[1 : k + 1]))
    rhs = (k + 1) * (float(cache.h[k + 1]) - 1.0)
    return lhs, rhs
