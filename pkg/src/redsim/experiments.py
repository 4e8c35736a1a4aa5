"""Experiment harness: sweeps, CSV emission, and policy recommendations.

Ties the other layers together: expands scenario sweeps into seeded
points, simulates each point (optionally across a worker pool),
attaches whatever the analysis layer can say about the same system,
and renders rows, decision reports, and the fork-degree-optimality
probe for log-convex service laws.
"""

from __future__ import annotations

import concurrent.futures
import enum
import math
import os
from dataclasses import dataclass, fields, replace

from .analysis import Policy, analytic_metrics
from .distributions import Concavity, ServiceDistribution
from .scenarios import Scenario, derive_seeds, load_config
from .simulator import MetricsSummary, run

_CSV_HEADER = ("scenario,policy,n,r,lambda,ET_sim,ET_ci,EC_sim,EC_ci,"
               "ET_analytic,ET_kind,EC_analytic_lo,EC_analytic_hi,capacity,stable")


@dataclass(frozen=True)
class ComparisonRow:
    """One sweep point: simulated estimates next to analytic values.

    Simulation fields are None for analyze-only rows; analytic latency
    is None when the policy has no formula or the model is unstable.
    """

    scenario: str
    policy: str
    n: int
    r: int
    lam: float
    et_sim: float | None
    et_ci: float | None
    ec_sim: float | None
    ec_ci: float | None
    et_analytic: float | None
    et_kind: str
    ec_analytic_lo: float | None
    ec_analytic_hi: float | None
    capacity: float | None
    stable: bool | None


def _none_if_nan(x: float | None) -> float | None:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return None
    return x


def _make_row(point: Scenario, summary: MetricsSummary | None) -> ComparisonRow:
    spec = point.single_spec()
    sim_cost = summary.mean_cost if summary is not None else None
    metrics = analytic_metrics(spec, simulated_cost=sim_cost)
    return ComparisonRow(
        scenario=point.name,
        policy=spec.policy.value,
        n=spec.n,
        r=spec.r,
        lam=spec.lam,
        et_sim=_none_if_nan(summary.mean_latency) if summary else None,
        et_ci=_none_if_nan(summary.latency_ci) if summary else None,
        ec_sim=_none_if_nan(summary.mean_cost) if summary else None,
        ec_ci=_none_if_nan(summary.cost_ci) if summary else None,
        et_analytic=metrics.expected_latency,
        et_kind=metrics.latency_kind.value,
        ec_analytic_lo=_none_if_nan(metrics.cost_lo),
        ec_analytic_hi=_none_if_nan(metrics.cost_hi),
        capacity=metrics.capacity,
        stable=summary.stable if summary else None,
    )


def _sim_summary(point: Scenario) -> MetricsSummary:
    return run(point).summary


def _map_points(points, workers: int | None):
    """Run points in order, fanning out to processes when it pays off."""
    if workers is None:
        workers = os.cpu_count() or 1
    workers = min(workers, len(points))
    if workers <= 1 or len(points) <= 1:
        return [_sim_summary(p) for p in points]
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sim_summary, points))


def run_scenarios(scenarios, jobs: int | None = None, seed: int | None = None,
                  workers: int | None = None) -> list[ComparisonRow]:
    """Simulate every sweep point of every scenario and build rows."""
    points = []
    for sc in scenarios:
        if jobs is not None or seed is not None:
            sc = replace(sc, jobs=jobs if jobs is not None else sc.jobs,
                         seed=seed if seed is not None else sc.seed)
        points.extend(sc.points())
    summaries = _map_points(points, workers)
    return [_make_row(p, s) for p, s in zip(points, summaries)]


def run_scenario(path, jobs: int | None = None, seed: int | None = None,
                 workers: int | None = None) -> list[ComparisonRow]:
    """Load a config file, run all its sweep points, and return rows."""
    return run_scenarios(load_config(path), jobs=jobs, seed=seed, workers=workers)


def analyze_scenarios(scenarios) -> list[ComparisonRow]:
    """Closed-forms-only rows (no simulation fields)."""
    return [_make_row(p, None) for sc in scenarios for p in sc.points()]


# --- CSV ---------------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float) and math.isnan(value):
        return ""
    if isinstance(value, (int, float)):
        return f"{value:.6g}"
    return str(value)


def emit_csv(rows, path) -> None:
    """Write comparison rows as CSV; None serializes as an empty field."""
    if not rows:
        raise ValueError("no rows to emit")
    lines = [_CSV_HEADER]
    for row in rows:
        lines.append(",".join(_fmt(getattr(row, f.name)) for f in fields(ComparisonRow)))
    text = "\n".join(lines) + "\n"
    if hasattr(path, "write"):
        path.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def read_csv(path) -> list[ComparisonRow]:
    """Parse a file produced by :func:`emit_csv` back into rows."""
    if hasattr(path, "read"):
        text = path.read()
    else:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    lines = [ln for ln in text.splitlines() if ln]
    if not lines or lines[0] != _CSV_HEADER:
        raise ValueError("not a redsim comparison CSV (bad header)")

    def opt_float(s: str) -> float | None:
        return None if s == "" else float(s)

    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 15:
            raise ValueError(f"malformed row: {ln!r}")
        rows.append(ComparisonRow(
            scenario=parts[0], policy=parts[1], n=int(parts[2]), r=int(parts[3]),
            lam=float(parts[4]), et_sim=opt_float(parts[5]), et_ci=opt_float(parts[6]),
            ec_sim=opt_float(parts[7]), ec_ci=opt_float(parts[8]),
            et_analytic=opt_float(parts[9]), et_kind=parts[10],
            ec_analytic_lo=opt_float(parts[11]), ec_analytic_hi=opt_float(parts[12]),
            capacity=opt_float(parts[13]),
            stable=None if parts[14] == "" else parts[14] == "true",
        ))
    return rows


# --- decision report ---------------------------------------------------------


class Load(str, enum.Enum):
    LOW = "low"
    HIGH = "high"


@dataclass(frozen=True)
class OptionMetrics:
    label: str
    expected_cost: float
    capacity: float


@dataclass(frozen=True)
class Recommendation:
    """Which redundancy strategy to run, given the tail class and load.

    ``keep_redundancy`` is None (with an explanatory note) when the
    tail is neither log-concave nor log-convex, where no rule exists.
    """

    classification: Concavity
    load: Load
    keep_redundancy: bool | None
    fork_degree: int | None
    options: tuple[OptionMetrics, ...]
    note: str

    def render(self) -> str:
        lines = [f"service-time tail class: {self.classification.value}",
                 f"load regime: {self.load.value}"]
        if self.keep_redundancy is None:
            lines.append("recommendation: none")
        else:
            action = ("keep redundant replicas until first completion"
                      if self.keep_redundancy else
                      "cancel redundant replicas at first service start")
            lines.append(f"recommendation: {action}; fork degree r = {self.fork_degree}")
        lines.append(f"note: {self.note}")
        lines.append("supporting numbers:")
        for opt in self.options:
            lines.append(f"  {opt.label}: E[C] = {opt.expected_cost:.6g}, "
                         f"capacity = {opt.capacity:.6g}")
        return "\n".join(lines)


def decision_report(dist: ServiceDistribution, n: int, load: Load | str) -> Recommendation:
    """Recommend a redundancy strategy for n servers and a load regime.

    Log-concave tails: replicate everywhere at low load, cancel early /
    fork to one at high load.  Log-convex tails: maximum replication
    wins at any load.  The exponential is cost-neutral either way.
    """
    load = Load(load)
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    shape = dist.classify()
    mean = dist.mean()
    min_n = dist.min_moment(n, 1)
    options = (
        OptionMetrics("replicate at all n, cancel on first completion",
                      n * min_n, n / (n * min_n)),
        OptionMetrics("replicate at all n, cancel on first service start",
                      mean, n / mean),
        OptionMetrics("fork to a single server (r = 1)", mean, n / mean),
    )
    if shape is Concavity.NEITHER:
        return Recommendation(
            classification=shape, load=load, keep_redundancy=None, fork_degree=None,
            options=options,
            note=("no rule for this tail: it is neither log-concave nor "
                  "log-convex, so the class-based cost comparison does not apply"))
    if shape is Concavity.BOTH:
        return Recommendation(
            classification=shape, load=load, keep_redundancy=True, fork_degree=n,
            options=options,
            note=("replication is cost-neutral here (r * E[X_1:r] is constant in r), "
                  "so redundancy reduces latency at no extra computing cost"))
    if shape is Concavity.LOG_CONVEX:
        return Recommendation(
            classification=shape, load=load, keep_redundancy=True, fork_degree=n,
            options=options,
            note="log-convex tail: maximum replication lowers both latency and cost")
    # log-concave
    if load is Load.LOW:
        return Recommendation(
            classification=shape, load=load, keep_redundancy=True, fork_degree=n,
            options=options,
            note=("log-concave tail at low load: replica diversity still wins; "
                  "expect higher computing cost in exchange for latency"))
    return Recommendation(
        classification=shape, load=load, keep_redundancy=False, fork_degree=1,
        options=options,
        note=("log-concave tail at high load: a single served replica maximizes "
              "capacity, so cancel early / fork to one server"))


# --- fork-degree optimality probe (log-convex tails) --------------------------


@dataclass(frozen=True)
class ProbeEntry:
    lam: float
    r_values: tuple[int, ...]
    latency: tuple[float, ...]
    latency_ci: tuple[float, ...]
    cost: tuple[float, ...]
    cost_ci: tuple[float, ...]
    full_fork_best_latency: bool
    full_fork_best_cost: bool
    counterexamples: tuple[str, ...]


@dataclass(frozen=True)
class ConjectureReport:
    """Does forking to all n servers minimize latency and cost?

    Checked per arrival rate over r = 1..n with the uniform-random
    placement policy.  ``consistent`` is False when some r < n beats
    r = n beyond CI overlap (a counterexample, which is reported, not
    suppressed).
    """

    n: int
    entries: tuple[ProbeEntry, ...]
    consistent: bool

    def render(self) -> str:
        lines = [f"fork-degree probe, n = {self.n}, policy = uniform random"]
        for e in self.entries:
            lines.append(f"lambda = {e.lam:.6g}:")
            for i, r in enumerate(e.r_values):
                lines.append(
                    f"  r = {r}: E[T] = {e.latency[i]:.4f} +- {e.latency_ci[i]:.4f}, "
                    f"E[C] = {e.cost[i]:.4f} +- {e.cost_ci[i]:.4f}")
            verdict = ("r = n best for latency and cost"
                       if e.full_fork_best_latency and e.full_fork_best_cost
                       else "; ".join(e.counterexamples) or "r = n not strictly best")
            lines.append(f"  -> {verdict}")
        lines.append("overall: " + ("consistent: forking to all n servers was optimal "
                                    "at every probed rate" if self.consistent
                                    else "COUNTEREXAMPLE found, see entries above"))
        return "\n".join(lines)


def conjecture_probe(dist: ServiceDistribution, n: int, lambdas,
                     jobs: int = 50_000, seed: int = 777,
                     workers: int | None = None) -> ConjectureReport:
    """Probe whether r = n minimizes E[T] and E[C] for a log-convex law.

    Simulates uniform-random partial forking for every r in 1..n at
    each arrival rate.  r = n counts as best unless some smaller r
    beats it beyond the 95% CI overlap.
    """
    if dist.classify() is not Concavity.LOG_CONVEX:
        raise ValueError("the full-fork optimality probe applies to log-convex tails")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    lambdas = [float(l) for l in lambdas]
    if not lambdas:
        raise ValueError("need at least one arrival rate")
    r_values = tuple(range(1, n + 1))

    points = []
    seeds = derive_seeds(seed, len(lambdas) * len(r_values))
    for i, lam in enumerate(lambdas):
        for j, r in enumerate(r_values):
            points.append(Scenario(
                name=f"probe-lam{lam:g}-r{r}",
                policy=Policy.PARTIAL_UNIFORM_RANDOM,
                n=(n,), r=(r,), lambdas=(lam,), dist=dist,
                jobs=jobs, seed=seeds[i * len(r_values) + j]))
    summaries = _map_points(points, workers)

    entries = []
    idx = 0
    for lam in lambdas:
        batch = summaries[idx: idx + len(r_values)]
        idx += len(r_values)
        lat = tuple(s.mean_latency for s in batch)
        lat_ci = tuple(s.latency_ci for s in batch)
        cost = tuple(s.mean_cost for s in batch)
        cost_ci = tuple(s.cost_ci for s in batch)
        problems = []
        full = len(r_values) - 1  # index of r = n
        for i, r in enumerate(r_values[:-1]):
            if lat[i] + lat_ci[i] < lat[full] - lat_ci[full]:
                problems.append(
                    f"lambda={lam:g}: r={r} beats r={n} on E[T] "
                    f"({lat[i]:.4f} vs {lat[full]:.4f}) beyond CI")
            if cost[i] + cost_ci[i] < cost[full] - cost_ci[full]:
                problems.append(
                    f"lambda={lam:g}: r={r} beats r={n} on E[C] "
                    f"({cost[i]:.4f} vs {cost[full]:.4f}) beyond CI")
        entries.append(ProbeEntry(
            lam=lam, r_values=r_values, latency=lat, latency_ci=lat_ci,
            cost=cost, cost_ci=cost_ci,
            full_fork_best_latency=not any("E[T]" in p for p in problems),
            full_fork_best_cost=not any("E[C]" in p for p in problems),
            counterexamples=tuple(problems)))
    return ConjectureReport(
        n=n, entries=tuple(entries),
        consistent=all(not e.counterexamples for e in entries))
