"""redsim: latency/cost analysis and simulation of replicated queues.

Replicating a job across several queues and keeping only the first
copy to finish trades computing time for latency.  This package
quantifies that trade-off: closed forms where they exist, seeded
discrete-event simulation everywhere, and decision helpers keyed to
whether the service-time tail is log-concave or log-convex.
"""

from .analysis import (
    AnalyticMetrics,
    ConfigurationError,
    LatencyKind,
    NoBoundAvailableError,
    Policy,
    SystemSpec,
    UnstableSystemError,
    analytic_metrics,
    capacity,
    cost_bounds,
    cost_decomposition,
    early_cancel_metrics,
    erlang_c_wait,
    fork_join_metrics,
    group_fork_metrics,
)
from .distributions import (
    Concavity,
    Exponential,
    GenericTail,
    HyperExp,
    NbuReport,
    NonFiniteMomentError,
    ServiceDistribution,
    ShiftedExp,
    from_config,
    nbu_check,
    to_config,
)
from .experiments import (
    ComparisonRow,
    ConjectureReport,
    Load,
    Recommendation,
    analyze_scenarios,
    conjecture_probe,
    decision_report,
    emit_csv,
    read_csv,
    run_scenario,
    run_scenarios,
)
from .scenarios import Scenario, load_config, parse_dist_literal
from .simulator import (
    JobRecord,
    MetricsSummary,
    RunResult,
    StabilityVerdict,
    run,
    stability_probe,
    write_trace,
)

__version__ = "0.1.0"

__all__ = [
    "AnalyticMetrics", "ComparisonRow", "Concavity", "ConfigurationError",
    "ConjectureReport", "Exponential", "GenericTail", "HyperExp", "JobRecord",
    "LatencyKind", "Load", "MetricsSummary", "NbuReport", "NoBoundAvailableError",
    "NonFiniteMomentError", "Policy", "Recommendation", "RunResult", "Scenario",
    "ServiceDistribution", "ShiftedExp", "StabilityVerdict", "SystemSpec",
    "UnstableSystemError", "analytic_metrics", "analyze_scenarios", "capacity",
    "conjecture_probe", "cost_bounds", "cost_decomposition", "decision_report",
    "early_cancel_metrics", "emit_csv", "erlang_c_wait", "fork_join_metrics",
    "from_config", "group_fork_metrics", "load_config", "nbu_check",
    "parse_dist_literal", "read_csv", "run", "run_scenario", "run_scenarios",
    "stability_probe", "to_config", "write_trace",
]
