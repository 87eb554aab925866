"""Age of information analysis and simulation for earliest-k-of-m federated learning."""

__version__ = "0.1.0"

from .age_model import (  # noqa: E402
    AgeBreakdown,
    ApproxParams,
    SystemParams,
    age_approx,
    age_exact,
    geometric_moments,
    iteration_time_moments,
    mean_conditional_uplink,
)
from .order_stats import CapacityError, DomainError  # noqa: E402
from .protocol_sim import SchemeKind, SimResult, compare_iteration_time, simulate  # noqa: E402
from .sweep_opt import SweepSpec, reproduce_figure, sweep  # noqa: E402

__all__ = [
    "AgeBreakdown",
    "ApproxParams",
    "CapacityError",
    "DomainError",
    "SchemeKind",
    "SimResult",
    "SweepSpec",
    "SystemParams",
    "age_approx",
    "age_exact",
    "compare_iteration_time",
    "geometric_moments",
    "iteration_time_moments",
    "mean_conditional_uplink",
    "reproduce_figure",
    "simulate",
    "sweep",
]
