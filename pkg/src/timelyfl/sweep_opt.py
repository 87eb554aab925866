"""Grid search for age-optimal ``(m, k)`` operating points."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .age_model import SystemParams, age_exact
from .order_stats import DomainError
from .protocol_sim import SchemeKind, simulate
from .rng import STREAM_SWEEP, check_seed

__all__ = [
    "FIGURES",
    "FigureCurve",
    "SweepResult",
    "SweepRow",
    "SweepSpec",
    "reproduce_figure",
    "sweep",
]

OBJECTIVES = ("analytic", "simulated")


@dataclass(frozen=True)
class SweepSpec:
    """Fixed system parameters plus the swept ``m`` and ``k`` values.

    ``k_values=None`` sweeps every ``k <= m`` for each ``m``; explicit
    ``k`` values larger than ``m`` are skipped for that ``m``.
    """

    n: int
    lam: float
    mu_up: float
    c: float
    m_values: tuple[int, ...] | None = None
    k_values: tuple[int, ...] | None = None
    mu_down: float | None = None
    objective: str = "analytic"
    sim_iterations: int = 100_000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n < 1:
            raise DomainError(f"n must be >= 1, got {self.n}")
        if self.objective not in OBJECTIVES:
            raise DomainError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.objective == "analytic" and self.mu_down is not None:
            raise DomainError("analytic objective needs an instantaneous downlink")
        for name in ("m_values", "k_values"):
            vals = getattr(self, name)
            if vals is None:
                continue
            vals = tuple(sorted({int(v) for v in vals}))
            if not vals or vals[0] < 1 or vals[-1] > self.n:
                raise DomainError(f"{name} must lie in [1, n={self.n}], got {vals}")
            object.__setattr__(self, name, vals)
        check_seed(self.seed)

    def grid(self) -> list[tuple[int, int]]:
        ms = self.m_values or tuple(range(1, self.n + 1))
        pts = []
        for m in ms:
            ks = range(1, m + 1) if self.k_values is None else [k for k in self.k_values if k <= m]
            pts.extend((m, k) for k in ks)
        if not pts:
            raise DomainError("sweep grid is empty (every k exceeds every m)")
        return pts

    def params(self, m: int, k: int) -> SystemParams:
        return SystemParams(self.n, m, k, self.lam, self.mu_up, self.c, self.mu_down)


@dataclass(frozen=True)
class SweepRow:
    m: int
    k: int
    age: float
    mean_iteration_time: float


@dataclass
class SweepResult:
    rows: list[SweepRow]
    argmin: SweepRow
    objective_kind: str
    spec: SweepSpec | None = field(default=None, repr=False)

    def age_at(self, m: int, k: int) -> float:
        for r in self.rows:
            if r.m == m and r.k == k:
                return r.age
        raise KeyError((m, k))

    def curve(self, m: int) -> "SweepResult":
        rows = [r for r in self.rows if r.m == m]
        if not rows:
            raise KeyError(m)
        return SweepResult(rows, _argmin(rows), self.objective_kind, self.spec)


def _argmin(rows: Sequence[SweepRow]) -> SweepRow:
    # equal ages resolve to the smaller k, then the smaller m
    return min(rows, key=lambda r: (r.age, r.k, r.m))


def sweep(spec: SweepSpec) -> SweepResult:
    rows = []
    for m, k in sorted(spec.grid()):
        p = spec.params(m, k)
        if spec.objective == "analytic":
            b = age_exact(p)
            rows.append(SweepRow(m, k, b.total, b.mean_Y))
        else:
            r = simulate(p, SchemeKind.EARLIEST_K_OF_M, spec.sim_iterations,
                         seed=spec.seed, stream=(STREAM_SWEEP, m, k))
            rows.append(SweepRow(m, k, r.mean_avg_age, r.mean_iteration_time))
    return SweepResult(rows, _argmin(rows), spec.objective, spec)


# (varied parameter, values, fixed parameters)
FIGURES: dict[str, tuple[str, tuple[float, ...], dict[str, float]]] = {
    "fig3": ("mu_up", (0.1, 0.2, 0.5, 1.0, 5.0), {"lam": 1.0, "c": 1.0}),
    "fig4": ("lam", (0.1, 0.2, 0.5, 1.0, 5.0), {"mu_up": 1.0, "c": 1.0}),
    "fig5": ("c", (0.1, 1.0, 5.0, 10.0), {"lam": 1.0, "mu_up": 1.0}),
    "fig6": ("m", (20, 40, 60, 80, 100), {"lam": 1.0, "mu_up": 1.0, "c": 1.0}),
}


@dataclass
class FigureCurve:
    """One age-vs-k curve of a figure family.

    ``optimum`` is the best row over the full grid (figs 3-5) or over the
    fixed ``m`` (fig 6); ``curve`` holds all ``k`` at the optimum's ``m``.
    """

    figure: str
    parameter: str
    value: float
    optimum: SweepRow
    curve: SweepResult


def _fig6_m_values(n: int) -> tuple[int, ...]:
    if n == 100:
        return FIGURES["fig6"][1]
    return tuple(sorted({max(1, round(n * f)) for f in (0.2, 0.4, 0.6, 0.8, 1.0)}))


def reproduce_figure(figure_id: str, n: int = 100, seed: int = 0) -> list[FigureCurve]:
    """Analytic curves for one of ``fig3``..``fig6``.

    For ``n != 100`` the fixed-``m`` family of fig6 is rescaled to
    ``m = 0.2n, 0.4n, ..., n``.  ``seed`` is only recorded; analytic sweeps
    draw no random numbers.
    """
    if figure_id not in FIGURES:
        raise DomainError(f"unknown figure {figure_id!r}; expected one of {sorted(FIGURES)}")
    if n < 2:
        raise DomainError(f"n must be >= 2, got {n}")
    param, values, fixed = FIGURES[figure_id]
    out = []
    if figure_id == "fig6":
        for m in _fig6_m_values(n):
            res = sweep(SweepSpec(n=n, m_values=(m,), seed=seed, **fixed))
            out.append(FigureCurve(figure_id, "m", m, res.argmin, res))
        return out
    for v in values:
        kw = dict(fixed, **{param: v})
        full = sweep(SweepSpec(n=n, seed=seed, **kw))
        out.append(FigureCurve(figure_id, param, v, full.argmin, full.curve(full.argmin.m)))
    return out
