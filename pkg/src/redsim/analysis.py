"""Closed-form latency, cost, capacity, and cost-bound calculators.

Each redundancy policy gets the sharpest analytic handle available:
fork-join and group-based partial forking have exact mean latency and
cost; fork-early-cancel has exact cost plus a standard multi-server
latency approximation; the remaining partial policies carry cost
bounds driven by the log-concavity class of the service law.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .distributions import Concavity, ServiceDistribution


class ConfigurationError(ValueError):
    """A system description violates a policy constraint."""


class UnstableSystemError(ValueError):
    """Arrival rate at or above the service capacity of the model."""


class NoBoundAvailableError(ValueError):
    """No cost bound exists for this distribution class."""


class Policy(str, enum.Enum):
    """Replica placement/cancellation rules for one incoming job."""

    FORK_JOIN = "forkjoin"                 # replicate at all n, cancel on first finish
    FORK_EARLY_CANCEL = "earlycancel"      # replicate at all n, cancel on first start
    PARTIAL_GROUP_RANDOM = "group"         # r replicas at a random group of r servers
    PARTIAL_UNIFORM_RANDOM = "uniform"     # r replicas at a uniform random r-subset
    PARTIAL_ROUND_ROBIN = "roundrobin"     # r replicas at consecutive servers, rotating
    PARTIAL_CANCELLATION = "partialcancel" # replicate at all n, keep first r to start


PARTIAL_POLICIES = frozenset({
    Policy.PARTIAL_GROUP_RANDOM,
    Policy.PARTIAL_UNIFORM_RANDOM,
    Policy.PARTIAL_ROUND_ROBIN,
    Policy.PARTIAL_CANCELLATION,
})

#: Policies with an exact or approximate closed-form mean latency.
ANALYTIC_LATENCY_POLICIES = frozenset({
    Policy.FORK_JOIN,
    Policy.FORK_EARLY_CANCEL,
    Policy.PARTIAL_GROUP_RANDOM,
})


@dataclass(frozen=True)
class SystemSpec:
    """One replicated-queue system: n servers, fork degree r, load, law."""

    n: int
    r: int
    lam: float
    policy: Policy
    dist: ServiceDistribution

    def __post_init__(self):
        if self.n < 1:
            raise ConfigurationError(f"n must be >= 1, got {self.n}")
        if not 1 <= self.r <= self.n:
            raise ConfigurationError(f"need 1 <= r <= n, got r={self.r}, n={self.n}")
        if self.lam < 0:
            raise ConfigurationError(f"lambda must be >= 0, got {self.lam}")
        if self.policy in (Policy.FORK_JOIN, Policy.FORK_EARLY_CANCEL) and self.r != self.n:
            raise ConfigurationError(f"{self.policy.value} requires r = n")
        if self.policy is Policy.PARTIAL_GROUP_RANDOM and self.n % self.r != 0:
            raise ConfigurationError(
                f"group policy requires r to divide n, got n={self.n}, r={self.r}")


class LatencyKind(str, enum.Enum):
    EXACT = "Exact"
    APPROXIMATION = "Approximation"
    BOUNDS_ONLY = "BoundsOnly"


@dataclass(frozen=True)
class AnalyticMetrics:
    """Model predictions for one system.

    ``expected_latency`` is None when the model is unstable (lambda at
    or above capacity) or when no latency formula exists for the
    policy.  Cost is carried as an interval [cost_lo, cost_hi] that
    collapses to a point for policies with exact cost.  ``capacity``
    and ``utilization`` are None for bounds-only policies unless a
    simulated cost was supplied to derive them.
    """

    expected_latency: float | None
    latency_kind: LatencyKind
    cost_lo: float
    cost_hi: float
    capacity: float | None
    utilization: float | None

    @property
    def expected_cost(self) -> float | None:
        """The exact expected cost, or None when only bounds are known."""
        return self.cost_lo if self.cost_lo == self.cost_hi else None


def capacity(spec: SystemSpec, expected_cost: float) -> float:
    """Largest stable arrival rate of a symmetric policy: n / E[C]."""
    if expected_cost <= 0:
        raise ValueError(f"expected cost must be > 0, got {expected_cost}")
    return spec.n / expected_cost


def _pk_wait(lam: float, m1: float, m2: float) -> float | None:
    """Mean queueing wait of an M/G/1 queue (None when unstable)."""
    rho = lam * m1
    if rho >= 1.0:
        return None
    return lam * m2 / (2.0 * (1.0 - rho))


def fork_join_metrics(spec: SystemSpec) -> AnalyticMetrics:
    """Exact mean latency and cost when every job is forked to all n.

    The system behaves as a single M/G/1 queue with service X_{1:n}:
    latency is the Pollaczek-Khinchine mean, cost is n * E[X_{1:n}].
    """
    if spec.policy is not Policy.FORK_JOIN:
        raise ConfigurationError(f"expected forkjoin policy, got {spec.policy.value}")
    m1 = spec.dist.min_moment(spec.n, 1)
    m2 = spec.dist.min_moment(spec.n, 2)
    cost = spec.n * m1
    wait = _pk_wait(spec.lam, m1, m2)
    latency = None if wait is None else m1 + wait
    return AnalyticMetrics(
        expected_latency=latency,
        latency_kind=LatencyKind.EXACT,
        cost_lo=cost,
        cost_hi=cost,
        capacity=spec.n / cost,
        utilization=spec.lam * cost / spec.n,
    )


def erlang_c_wait(n: int, lam: float, mean_service: float) -> float:
    """Mean wait in an M/M/n queue with the given mean service time.

    Uses the Erlang-B recurrence B_j = a B_{j-1} / (j + a B_{j-1}) and
    converts to the Erlang-C delay probability, which stays numerically
    stable for thousands of servers (no raw factorials).
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if mean_service <= 0:
        raise ValueError(f"mean service must be > 0, got {mean_service}")
    a = lam * mean_service
    rho = a / n
    if rho >= 1.0:
        raise UnstableSystemError(f"offered load rho = {rho:.4f} >= 1")
    if lam == 0.0:
        return 0.0
    b = 1.0
    for j in range(1, n + 1):
        b = a * b / (j + a * b)
    p_queue = b / (1.0 - rho * (1.0 - b))
    return p_queue / (n / mean_service - lam)


def early_cancel_metrics(spec: SystemSpec) -> AnalyticMetrics:
    """Cost and approximate latency when replicas are canceled at first start.

    Exactly one replica per job is ever served, so E[C] = E[X] exactly
    and the system is an M/G/n queue.  Mean M/G/n latency has no exact
    form; the standard approximation scales the M/M/n wait by
    E[X^2] / (2 E[X]^2).
    """
    if spec.policy is not Policy.FORK_EARLY_CANCEL:
        raise ConfigurationError(f"expected earlycancel policy, got {spec.policy.value}")
    m1 = spec.dist.mean()
    m2 = spec.dist.moment2()
    try:
        wait = erlang_c_wait(spec.n, spec.lam, m1)
        latency = m1 + (m2 / (2.0 * m1 * m1)) * wait
    except UnstableSystemError:
        latency = None
    return AnalyticMetrics(
        expected_latency=latency,
        latency_kind=LatencyKind.APPROXIMATION,
        cost_lo=m1,
        cost_hi=m1,
        capacity=spec.n / m1,
        utilization=spec.lam * m1 / spec.n,
    )


def group_fork_metrics(spec: SystemSpec) -> AnalyticMetrics:
    """Exact metrics for forking to one of n/r fixed groups of r servers.

    Each group is an independent fork-join system over r servers fed a
    thinned Poisson stream of rate lam * r / n.
    """
    if spec.policy is not Policy.PARTIAL_GROUP_RANDOM:
        raise ConfigurationError(f"expected group policy, got {spec.policy.value}")
    m1 = spec.dist.min_moment(spec.r, 1)
    m2 = spec.dist.min_moment(spec.r, 2)
    cost = spec.r * m1
    wait = _pk_wait(spec.lam * spec.r / spec.n, m1, m2)
    latency = None if wait is None else m1 + wait
    return AnalyticMetrics(
        expected_latency=latency,
        latency_kind=LatencyKind.EXACT,
        cost_lo=cost,
        cost_hi=cost,
        capacity=spec.n / cost,
        utilization=spec.lam * cost / spec.n,
    )


def cost_bounds(spec: SystemSpec) -> tuple[float, float]:
    """Distribution-class cost bounds for partial forking to r of n servers.

    Whatever the relative replica start times, a log-concave law pins
    E[C] into [E[X], r E[X_{1:r}]] and a log-convex law into
    [r E[X_{1:r}], E[X]].  At r = 1 and r = n the interval collapses to
    the exact value.
    """
    if spec.policy not in PARTIAL_POLICIES:
        raise ConfigurationError(
            f"cost bounds apply to partial policies, got {spec.policy.value}")
    shape = spec.dist.classify()
    if shape is Concavity.NEITHER:
        raise NoBoundAvailableError(
            "no cost bound for a tail that is neither log-concave nor log-convex")
    r_min_cost = spec.r * spec.dist.min_moment(spec.r, 1)
    if spec.r == 1 or spec.r == spec.n:
        return (r_min_cost, r_min_cost)
    mean = spec.dist.mean()
    if shape is Concavity.LOG_CONCAVE:
        return (mean, r_min_cost)
    if shape is Concavity.LOG_CONVEX:
        return (r_min_cost, mean)
    return (r_min_cost, r_min_cost)  # BOTH: replication is cost-neutral


def analytic_metrics(spec: SystemSpec, simulated_cost: float | None = None) -> AnalyticMetrics:
    """Best available analytic metrics for any policy.

    For the policies without a latency formula (uniform random, round
    robin, partial cancellation) the result is bounds-only; capacity
    and utilization are then derived from ``simulated_cost`` when one
    is supplied, since capacity = n / E[C] needs the true cost.
    """
    if spec.policy is Policy.FORK_JOIN:
        return fork_join_metrics(spec)
    if spec.policy is Policy.FORK_EARLY_CANCEL:
        return early_cancel_metrics(spec)
    if spec.policy is Policy.PARTIAL_GROUP_RANDOM:
        return group_fork_metrics(spec)
    try:
        lo, hi = cost_bounds(spec)
    except NoBoundAvailableError:
        lo = hi = math.nan
    cap = None
    util = None
    if simulated_cost is not None and simulated_cost > 0:
        cap = spec.n / simulated_cost
        util = spec.lam * simulated_cost / spec.n
    return AnalyticMetrics(
        expected_latency=None,
        latency_kind=LatencyKind.BOUNDS_ONLY,
        cost_lo=lo,
        cost_hi=hi,
        capacity=cap,
        utilization=util,
    )


@dataclass(frozen=True)
class CostDecomposition:
    """Monte-Carlo estimates of the span S and cost C of one forked job.

    S is the time from the first replica's service start until any
    replica finishes; C charges every started replica for its overlap
    with S.  ``span_tail`` is the exact Pr(S > s) for cross-checks.
    """

    mean_span: float
    span_se: float
    mean_cost: float
    cost_se: float
    samples: int
    start_times: tuple[float, ...]
    dist: ServiceDistribution

    def span_tail(self, s: float) -> float:
        """Exact Pr(S > s) = prod_i Pr(X > s - t_i)."""
        out = 1.0
        for t in self.start_times:
            out *= self.dist.tail(s - t) if math.isfinite(t) else 1.0
        return out


def cost_decomposition(start_times, dist: ServiceDistribution, samples: int,
                       rng: np.random.Generator | int | None = None) -> CostDecomposition:
    """Estimate E[S] and E[C] for replicas starting at the given offsets.

    ``start_times`` are relative service start times t_1 = 0 <= t_2 <=
    ... (math.inf marks a replica that never starts).  With replica
    service draws X_i, S = min_i (X_i + t_i) and
    C = S + sum_{i>=2} max(S - t_i, 0).
    """
    times = [float(t) for t in start_times]
    if not times or times[0] != 0.0:
        raise ValueError("start times must begin at t_1 = 0")
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("start times must be non-decreasing")
    if samples < 1:
        raise ValueError("need at least one sample")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)

    finite = [t for t in times if math.isfinite(t)]
    offsets = np.asarray(finite)
    draws = dist.sample_array(rng, (samples, len(finite)))
    span = (draws + offsets).min(axis=1)
    cost = span + np.clip(span[:, None] - offsets[None, 1:], 0.0, None).sum(axis=1)

    return CostDecomposition(
        mean_span=float(span.mean()),
        span_se=float(span.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0,
        mean_cost=float(cost.mean()),
        cost_se=float(cost.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0,
        samples=samples,
        start_times=tuple(times),
        dist=dist,
    )
