"""Monte-Carlo simulator of the earliest-k-of-m protocol and its baselines.

Iterations are strictly sequential on one timeline.  Each iteration draws
fresh availability delays (memoryless availability), so the simulator does
not carry per-client clocks across iterations.  Random draws are produced a
block of iterations at a time; the block size is fixed, so a given seed
always yields the same numbers.

Age bookkeeping is exact: between two deliveries of a client its age grows
with slope one, so the area over any interval is a trapezoid computed from
the delivery and generation timestamps.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .age_model import SystemParams
from .order_stats import DomainError
from .rng import STREAM_SIM, check_seed, substream

__all__ = [
    "ClientAgeTracker",
    "IterationRecord",
    "IterationTimeComparison",
    "SchemeKind",
    "SimResult",
    "SimTrace",
    "compare_iteration_time",
    "default_warmup",
    "draw_block",
    "simulate",
]

BLOCK = 2048


class SchemeKind(str, enum.Enum):
    EARLIEST_K_OF_M = "earliest"
    RANDOM_K = "random"
    FIRST_K = "first"

    @property
    def stream_id(self) -> int:
        return _SCHEME_STREAM[self]

    @classmethod
    def parse(cls, text: "str | SchemeKind") -> "SchemeKind":
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower().replace("_", "-")
        aliases = {
            "earliest": cls.EARLIEST_K_OF_M,
            "earliest-k-of-m": cls.EARLIEST_K_OF_M,
            "proposed": cls.EARLIEST_K_OF_M,
            "random": cls.RANDOM_K,
            "random-k": cls.RANDOM_K,
            "first": cls.FIRST_K,
            "first-k": cls.FIRST_K,
        }
        try:
            return aliases[key]
        except KeyError:
            raise DomainError(f"unknown scheme {text!r}") from None


_SCHEME_STREAM = {
    SchemeKind.EARLIEST_K_OF_M: 0,
    SchemeKind.RANDOM_K: 1,
    SchemeKind.FIRST_K: 2,
}

RANDOM_K_WAITS = ("common", "independent")


class ClientAgeTracker:
    """Age of one client at the server, updated event by event.

    Starts fresh at ``t = 0`` (age zero).  ``advance`` integrates the age up to
    a time; ``deliver`` registers an update generated at ``generation`` that
    arrives at ``time``.
    """

    def __init__(self, start: float = 0.0):
        self.last_delivery_generation_time = start
        self.last_delivery_receipt_time = start
        self.accumulated_area = 0.0
        self._clock = start

    def age_at(self, t: float) -> float:
        return t - self.last_delivery_generation_time

    def advance(self, t: float) -> None:
        if t < self._clock:
            raise ValueError(f"time went backwards: {t} < {self._clock}")
        g = self.last_delivery_generation_time
        s = self._clock
        self.accumulated_area += (t - s) * (t + s - 2.0 * g) / 2.0
        self._clock = t

    def deliver(self, time: float, generation: float) -> None:
        if generation > time:
            raise ValueError("update delivered before it was generated")
        if generation < self.last_delivery_generation_time:
            raise ValueError("delivered update is older than the current one")
        self.advance(time)
        self.last_delivery_generation_time = generation
        self.last_delivery_receipt_time = time

    def reset_area(self) -> None:
        self.accumulated_area = 0.0


@dataclass(frozen=True)
class IterationRecord:
    index: int
    start_time: float
    wait_duration: float
    service_duration: float
    participants: tuple[int, ...]
    deliverers: tuple[int, ...]
    end_time: float


@dataclass
class SimTrace:
    """Per-iteration arrays; row ``i`` is iteration ``i`` (warmup included).

    ``generation`` and ``delivery`` are absolute times aligned column-wise with
    ``deliverers``.
    """

    start: np.ndarray
    wait: np.ndarray
    service: np.ndarray
    end: np.ndarray
    participants: np.ndarray
    deliverers: np.ndarray
    generation: np.ndarray
    delivery: np.ndarray

    def __len__(self) -> int:
        return len(self.start)

    def records(self) -> Iterator[IterationRecord]:
        for i in range(len(self.start)):
            yield IterationRecord(
                index=i,
                start_time=float(self.start[i]),
                wait_duration=float(self.wait[i]),
                service_duration=float(self.service[i]),
                participants=tuple(int(x) for x in self.participants[i]),
                deliverers=tuple(int(x) for x in self.deliverers[i]),
                end_time=float(self.end[i]),
            )


@dataclass
class SimResult:
    scheme: SchemeKind
    per_client_avg_age: np.ndarray
    mean_avg_age: float
    mean_iteration_time: float
    iteration_time_variance: float
    mean_wait: float
    mean_service: float
    empirical_inter_delivery_moments: tuple[float, float]
    delivery_counts: np.ndarray
    measured_iterations: int
    iterations_run: int
    warmup: int
    seed: int
    measured_time: float
    trace: SimTrace | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme.value,
            "mean_avg_age": self.mean_avg_age,
            "mean_iteration_time": self.mean_iteration_time,
            "iteration_time_variance": self.iteration_time_variance,
            "mean_wait": self.mean_wait,
            "mean_service": self.mean_service,
            "inter_delivery_mean": self.empirical_inter_delivery_moments[0],
            "inter_delivery_second_moment": self.empirical_inter_delivery_moments[1],
            "iterations_run": self.iterations_run,
            "warmup": self.warmup,
            "measured_time": self.measured_time,
            "seed": self.seed,
            "per_client_avg_age": [float(x) for x in self.per_client_avg_age],
            "delivery_counts": [int(x) for x in self.delivery_counts],
        }


@dataclass
class _Block:
    wait: np.ndarray          # (B,)
    duration: np.ndarray      # (B,)
    participants: np.ndarray  # (B, m) or (B, k)
    deliverers: np.ndarray    # (B, k)
    gen_offset: np.ndarray    # (B, k), relative to the iteration start
    del_offset: np.ndarray    # (B, k)


def default_warmup(iterations: int) -> int:
    """1% of the horizon, at least 100 iterations, and always below half of it."""
    return min(max(100, iterations // 100), iterations // 2)


def _check_random_k_wait(mode: str) -> None:
    if mode not in RANDOM_K_WAITS:
        raise DomainError(f"random_k_wait must be one of {RANDOM_K_WAITS}, got {mode!r}")


def draw_block(
    rng: np.random.Generator,
    params: SystemParams,
    scheme: SchemeKind,
    size: int,
    random_k_wait: str = "common",
) -> _Block:
    """Draw ``size`` independent iterations of ``scheme``.

    Ties between continuous delays are broken by client index.
    """
    n, m, k, c = params.n, params.m, params.k, params.c

    def downlink(shape):
        if params.mu_down is None:
            return np.zeros(shape)
        return rng.exponential(1.0 / params.mu_down, shape)

    if scheme is SchemeKind.EARLIEST_K_OF_M:
        avail = rng.exponential(1.0 / params.lam, (size, n))
        part = np.argsort(avail, axis=1, kind="stable")[:, :m]
        wait = np.take_along_axis(avail, part[:, m - 1 : m], axis=1)[:, 0]
        gen = wait[:, None] + downlink((size, m)) + c
        dlv = gen + rng.exponential(1.0 / params.mu_up, (size, m))
        first = np.lexsort((part, dlv), axis=-1)[:, :k]
        deliverers = np.take_along_axis(part, first, axis=1)
        gen = np.take_along_axis(gen, first, axis=1)
        dlv = np.take_along_axis(dlv, first, axis=1)
        return _Block(wait, dlv[:, -1], part, deliverers, gen, dlv)

    if scheme is SchemeKind.FIRST_K:
        avail = rng.exponential(1.0 / params.lam, (size, n))
        part = np.argsort(avail, axis=1, kind="stable")[:, :k]
        wait = np.take_along_axis(avail, part[:, k - 1 : k], axis=1)[:, 0]
        gen = wait[:, None] + downlink((size, k)) + c
        dlv = gen + rng.exponential(1.0 / params.mu_up, (size, k))
        return _Block(wait, dlv.max(axis=1), part, part, gen, dlv)

    if scheme is SchemeKind.RANDOM_K:
        _check_random_k_wait(random_k_wait)
        chosen = np.argsort(rng.random((size, n)), axis=1, kind="stable")[:, :k]
        avail = rng.exponential(1.0 / params.lam, (size, k))
        wait = avail.max(axis=1)
        if random_k_wait == "common":
            # model goes out once every chosen client is available
            ready = np.broadcast_to(wait[:, None], (size, k))
        else:
            ready = avail
        gen = ready + downlink((size, k)) + c
        dlv = gen + rng.exponential(1.0 / params.mu_up, (size, k))
        return _Block(wait, dlv.max(axis=1), chosen, chosen, gen, dlv)

    raise DomainError(f"unknown scheme {scheme!r}")


def simulate(
    params: SystemParams,
    scheme: SchemeKind | str = SchemeKind.EARLIEST_K_OF_M,
    iterations: int = 100_000,
    warmup: int | None = None,
    seed: int = 0,
    *,
    stream: tuple[int, ...] = (),
    random_k_wait: str = "common",
    trace: bool = False,
) -> SimResult:
    """Run ``iterations`` iterations and measure age and iteration time.

    The first ``warmup`` iterations only advance the state; both the age
    area and the elapsed time are measured from the start of iteration
    ``warmup`` to the end of the last iteration.  The random stream is
    ``substream(seed, STREAM_SIM, scheme.stream_id, *stream)``.
    """
    scheme = SchemeKind.parse(scheme)
    seed = check_seed(seed)
    iterations = int(iterations)
    if warmup is None:
        warmup = default_warmup(iterations)
    if warmup < 0 or iterations <= warmup:
        raise DomainError(
            f"need iterations > warmup >= 0, got iterations={iterations}, warmup={warmup}"
        )
    _check_random_k_wait(random_k_wait)
    rng = substream(seed, STREAM_SIM, scheme.stream_id, *stream)
    n = params.n

    last_gen = np.zeros(n)
    last_del = np.zeros(n)
    last_iter = np.full(n, -1, dtype=np.int64)
    area = np.zeros(n)
    counts = np.zeros(n, dtype=np.int64)
    m_sum = 0.0
    m_sq = 0.0
    m_cnt = 0
    durations, waits = [], []
    pieces: list[tuple] = []

    t0 = 0.0
    window_start = math.nan
    done = 0
    while done < iterations:
        size = min(BLOCK, iterations - done)
        blk = draw_block(rng, params, scheme, size, random_k_wait)
        # chained sum so that end[i] == start[i] + duration[i] exactly
        chain = np.cumsum(np.concatenate(([t0], blk.duration)))
        starts, ends = chain[:-1], chain[1:]
        idx = np.arange(done, done + size)
        if done <= warmup < done + size:
            window_start = float(starts[warmup - done])
        gen_abs = starts[:, None] + blk.gen_offset
        del_abs = starts[:, None] + blk.del_offset
        if trace:
            pieces.append((starts, blk.wait, ends - starts - blk.wait, ends,
                           blk.participants, blk.deliverers, gen_abs, del_abs))

        # per-client event processing, chronological within each client
        ids = blk.deliverers.ravel()
        order = np.argsort(ids, kind="stable")
        ids = ids[order]
        g = gen_abs.ravel()[order]
        d = del_abs.ravel()[order]
        it = np.repeat(idx, blk.deliverers.shape[1])[order]
        head = np.ones(len(ids), dtype=bool)
        head[1:] = ids[1:] != ids[:-1]
        tail = np.ones(len(ids), dtype=bool)
        tail[:-1] = head[1:]
        prev_g = np.roll(g, 1)
        prev_d = np.roll(d, 1)
        prev_it = np.roll(it, 1)
        prev_g[head] = last_gen[ids[head]]
        prev_d[head] = last_del[ids[head]]
        prev_it[head] = last_iter[ids[head]]

        measured = it >= warmup
        if measured.any():
            s = np.maximum(prev_d[measured], window_start)
            e = d[measured]
            seg = (e - s) * (e + s - 2.0 * prev_g[measured]) / 2.0
            area += np.bincount(ids[measured], weights=seg, minlength=n)
            counts += np.bincount(ids[measured], minlength=n)
            valid = measured & (prev_it >= 0)
            gaps = (it[valid] - prev_it[valid]).astype(np.float64)
            m_sum += gaps.sum()
            m_sq += (gaps * gaps).sum()
            m_cnt += gaps.size

        last_gen[ids[tail]] = g[tail]
        last_del[ids[tail]] = d[tail]
        last_iter[ids[tail]] = it[tail]

        keep = idx >= warmup
        durations.append(blk.duration[keep])
        waits.append(blk.wait[keep])
        t0 = float(ends[-1])
        done += size

    end_time = t0
    s = np.maximum(last_del, window_start)
    area += (end_time - s) * (end_time + s - 2.0 * last_gen) / 2.0
    elapsed = end_time - window_start
    per_client = area / elapsed

    dur = np.concatenate(durations)
    wt = np.concatenate(waits)
    tr = None
    if trace:
        cols = list(zip(*pieces))
        tr = SimTrace(*(np.concatenate(col) for col in cols))
    return SimResult(
        scheme=scheme,
        per_client_avg_age=per_client,
        mean_avg_age=float(per_client.mean()),
        mean_iteration_time=float(dur.mean()),
        iteration_time_variance=float(dur.var(ddof=1)) if dur.size > 1 else 0.0,
        mean_wait=float(wt.mean()),
        mean_service=float((dur - wt).mean()),
        empirical_inter_delivery_moments=(
            (m_sum / m_cnt, m_sq / m_cnt) if m_cnt else (math.nan, math.nan)
        ),
        delivery_counts=counts,
        measured_iterations=int(dur.size),
        iterations_run=iterations,
        warmup=int(warmup),
        seed=seed,
        measured_time=float(elapsed),
        trace=tr,
    )


@dataclass
class IterationTimeComparison:
    mean_iteration_time: dict[SchemeKind, float]
    results: dict[SchemeKind, SimResult] = field(repr=False)

    def improvement_over(self, baseline: SchemeKind) -> float:
        """Relative reduction ``(Y_base - Y_prop) / Y_base`` of the proposed scheme."""
        y = self.mean_iteration_time
        return (y[baseline] - y[SchemeKind.EARLIEST_K_OF_M]) / y[baseline]

    @property
    def improvement_over_random(self) -> float:
        return self.improvement_over(SchemeKind.RANDOM_K)

    def to_rows(self) -> list[dict]:
        return [
            {"scheme": s.value, "mean_iteration_time": self.mean_iteration_time[s]}
            for s in SchemeKind
        ]


def compare_iteration_time(
    params: SystemParams,
    iterations: int = 50_000,
    seed: int = 0,
    warmup: int | None = None,
    random_k_wait: str = "common",
) -> IterationTimeComparison:
    """Mean iteration time of all three schemes under the same parameters.

    Each scheme runs on its own stream derived from ``seed``.
    """
    results = {
        s: simulate(params, s, iterations, warmup, seed, random_k_wait=random_k_wait)
        for s in SchemeKind
    }
    return IterationTimeComparison(
        {s: r.mean_iteration_time for s, r in results.items()}, results
    )
