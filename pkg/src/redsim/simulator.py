"""Seeded discrete-event simulation of replicated FCFS multi-server queues.

One engine covers every placement/cancellation policy.  Each arriving
job is replicated according to its policy; replicas wait in per-server
FCFS queues; the first replica to finish completes the job and every
other live replica is removed instantly (replicas removed while queued
cost nothing, replicas removed mid-service are charged for the time
already spent).  Event ordering is (time, seq) with seq assigned at
scheduling time, so identical (scenario, seed) inputs replay the exact
same event stream.
"""

from __future__ import annotations

import math
import random
from collections import deque, namedtuple
from dataclasses import dataclass
from heapq import heappop, heappush
from typing import Iterable, Sequence

import numpy as np
from scipy import stats as _stats

from .analysis import Policy, SystemSpec
from .scenarios import Scenario

# Task lifecycle states (list-of-int state machine in the hot loop).
_QUEUED, _IN_SERVICE, _DONE, _CANCELED = 0, 1, 2, 3

JobRecord = namedtuple(
    "JobRecord", ["job_id", "arrival", "start_times", "completion", "latency", "cost"])
JobRecord.__doc__ = """Per-job timeline.

``start_times`` has one entry per replica in placement order; None
marks a replica that never began service.  ``cost`` is the total
in-service seconds summed over the job's replicas (queued-only
replicas contribute zero).
"""


@dataclass(frozen=True)
class StabilityVerdict:
    """Linear-trend diagnosis of total queue length over a run."""

    stable: bool
    slope: float
    slope_se: float
    t_stat: float


@dataclass(frozen=True)
class MetricsSummary:
    """Batch-means point estimates from one simulation run."""

    mean_latency: float
    latency_ci: float
    mean_cost: float
    cost_ci: float
    jobs_counted: int
    warmup_discarded: int
    stable: bool
    batches: int


@dataclass(frozen=True)
class RunResult:
    summary: MetricsSummary
    records: list
    started_per_server: tuple[int, ...]
    stability: StabilityVerdict


def _batch_means_ci(values: np.ndarray, batches: int = 20) -> tuple[float, float, int]:
    """Mean and 95% CI half-width via batch means (autocorrelation-safe)."""
    n = values.size
    if n == 0:
        return math.nan, math.nan, 0
    mean = float(values.mean())
    b = min(batches, n)
    size = n // b
    if b < 2 or size < 1:
        return mean, 0.0, max(b, 1)
    means = values[: b * size].reshape(b, size).mean(axis=1)
    spread = float(means.std(ddof=1))
    half = float(_stats.t.ppf(0.975, b - 1)) * spread / math.sqrt(b)
    return mean, half, b


def _queue_trend(samples: Sequence[int]) -> StabilityVerdict:
    """Fit a line to batched queue-length samples; growth beyond 3 sigma
    of the regression slope flags instability.

    The first quarter of the samples is dropped as transient, the rest
    is reduced to 20 batch means so the residuals are roughly
    independent.
    """
    arr = np.asarray(samples, dtype=float)
    if arr.size < 8:
        return StabilityVerdict(stable=True, slope=0.0, slope_se=0.0, t_stat=0.0)
    arr = arr[arr.size // 4:]
    b = min(20, arr.size)
    size = arr.size // b
    y = arr[: b * size].reshape(b, size).mean(axis=1)
    x = np.arange(b, dtype=float)
    xc = x - x.mean()
    denom = float((xc * xc).sum())
    slope = float((xc * y).sum() / denom)
    resid = y - y.mean() - slope * xc
    dof = max(b - 2, 1)
    se = math.sqrt(float((resid * resid).sum()) / dof / denom)
    if se == 0.0:
        return StabilityVerdict(stable=slope <= 0.0, slope=slope, slope_se=0.0,
                                t_stat=math.inf if slope > 0 else 0.0)
    t = slope / se
    return StabilityVerdict(stable=not (slope > 0 and t > 3.0), slope=slope,
                            slope_se=se, t_stat=t)


def _simulate(spec: SystemSpec, jobs: int, seed) -> dict:
    """Run the event loop and return raw per-job arrays.

    Single-threaded and deterministic: one stdlib random stream drives
    arrivals, service draws, placement choices, and the random ordering
    used to break simultaneous service starts.
    """
    n = spec.n
    policy = spec.policy
    lam = spec.lam
    rng = random.Random(seed)
    draw = spec.dist.sampler(rng)
    expo = rng.expovariate
    shuffle = rng.shuffle

    all_servers = tuple(range(n))
    if policy is Policy.PARTIAL_GROUP_RANDOM:
        groups = tuple(tuple(range(g * spec.r, (g + 1) * spec.r))
                       for g in range(n // spec.r))
        randrange = rng.randrange
        n_groups = len(groups)
    sample_servers = rng.sample
    rr_offset = 0

    # cancel-on-start policies: early-cancel keeps the first replica to
    # start, partial-cancellation drops never-started replicas once r
    # have started.
    start_threshold = 0
    if policy is Policy.FORK_EARLY_CANCEL:
        start_threshold = 1
    elif policy is Policy.PARTIAL_CANCELLATION:
        start_threshold = spec.r

    # flat per-task state
    task_job: list[int] = []
    task_server: list[int] = []
    task_start: list[float] = []
    task_state: list[int] = []

    # flat per-job state
    job_arrival: list[float] = []
    job_first: list[int] = []
    job_ntasks: list[int] = []
    job_started: list[int] = []
    job_completion: list[float] = []
    job_cost: list[float] = []

    srv_queue = [deque() for _ in range(n)]
    srv_current = [-1] * n
    srv_started = [0] * n

    queued_total = 0
    queue_samples: list[int] = []

    heap: list[tuple[float, int, int]] = []
    seq = 0
    created = 0

    def start_next(sid: int, now: float) -> None:
        """Pop the first live queued task of a server and begin service."""
        nonlocal seq, queued_total
        q = srv_queue[sid]
        while q:
            tid = q.popleft()
            if task_state[tid] == _QUEUED:
                break
        else:
            return
        task_state[tid] = _IN_SERVICE
        task_start[tid] = now
        srv_current[sid] = tid
        srv_started[sid] += 1
        queued_total -= 1
        heappush(heap, (now + draw(), seq, tid))
        seq += 1
        jid = task_job[tid]
        started = job_started[jid] + 1
        job_started[jid] = started
        if started == start_threshold:
            first = job_first[jid]
            for sib in range(first, first + job_ntasks[jid]):
                if task_state[sib] == _QUEUED:
                    task_state[sib] = _CANCELED
                    queued_total -= 1

    if lam > 0.0 and jobs > 0:
        heappush(heap, (expo(lam), seq, -1))
        seq += 1

    while heap:
        now, _, tid = heappop(heap)

        if tid >= 0:
            if task_state[tid] != _IN_SERVICE:
                continue  # canceled while in service; event is stale
            sid = task_server[tid]
            task_state[tid] = _DONE
            srv_current[sid] = -1
            jid = task_job[tid]
            job_completion[jid] = now
            job_cost[jid] += now - task_start[tid]
            freed = [sid]
            first = job_first[jid]
            for sib in range(first, first + job_ntasks[jid]):
                state = task_state[sib]
                if state == _QUEUED:
                    task_state[sib] = _CANCELED
                    queued_total -= 1
                elif state == _IN_SERVICE:
                    task_state[sib] = _CANCELED
                    job_cost[jid] += now - task_start[sib]
                    sib_srv = task_server[sib]
                    srv_current[sib_srv] = -1
                    freed.append(sib_srv)
            if len(freed) > 1:
                shuffle(freed)
            for s in freed:
                if srv_current[s] < 0:
                    start_next(s, now)
            continue

        # arrival
        jid = created
        created += 1
        if created < jobs:
            heappush(heap, (now + expo(lam), seq, -1))
            seq += 1
        queue_samples.append(queued_total)

        if policy is Policy.PARTIAL_UNIFORM_RANDOM:
            chosen = sample_servers(all_servers, spec.r)
        elif policy is Policy.PARTIAL_GROUP_RANDOM:
            chosen = groups[randrange(n_groups)]
        elif policy is Policy.PARTIAL_ROUND_ROBIN:
            chosen = [(rr_offset + i) % n for i in range(spec.r)]
            rr_offset = (rr_offset + spec.r) % n
        else:  # fork-join, early-cancel, partial-cancellation: all servers
            chosen = all_servers

        first = len(task_job)
        job_arrival.append(now)
        job_first.append(first)
        job_ntasks.append(len(chosen))
        job_started.append(0)
        job_completion.append(-1.0)
        job_cost.append(0.0)

        tid_next = first
        for s in chosen:
            task_job.append(jid)
            task_server.append(s)
            task_start.append(-1.0)
            task_state.append(_QUEUED)
            srv_queue[s].append(tid_next)
            tid_next += 1
        queued_total += len(chosen)

        idle = [s for s in chosen if srv_current[s] < 0]
        if len(idle) > 1:
            shuffle(idle)
        for s in idle:
            if srv_current[s] < 0:
                start_next(s, now)

    return {
        "arrival": job_arrival,
        "completion": job_completion,
        "cost": job_cost,
        "first": job_first,
        "ntasks": job_ntasks,
        "task_start": task_start,
        "started_per_server": tuple(srv_started),
        "queue_samples": queue_samples,
    }


def _assemble_records(raw: dict) -> list:
    task_start = raw["task_start"]
    records = []
    for jid, (arr, comp, cost, first, ntasks) in enumerate(zip(
            raw["arrival"], raw["completion"], raw["cost"],
            raw["first"], raw["ntasks"])):
        starts = tuple(
            (task_start[t] if task_start[t] >= 0.0 else None)
            for t in range(first, first + ntasks))
        records.append(JobRecord(jid, arr, starts, comp, comp - arr, cost))
    return records


def run(scenario: Scenario) -> RunResult:
    """Simulate one scenario point and summarize it.

    The scenario must resolve to a single (n, r, lambda) point; sweeps
    are expanded by the experiments layer.  Identical (scenario, seed)
    pairs produce bit-identical results.
    """
    spec = scenario.single_spec()
    warmup = scenario.resolved_warmup()
    raw = _simulate(spec, scenario.jobs, scenario.seed)

    arrivals = np.asarray(raw["arrival"])
    completions = np.asarray(raw["completion"])
    costs = np.asarray(raw["cost"])
    latency = completions - arrivals

    trend = _queue_trend(raw["queue_samples"])
    mean_t, ci_t, b = _batch_means_ci(latency[warmup:])
    mean_c, ci_c, _ = _batch_means_ci(costs[warmup:])
    summary = MetricsSummary(
        mean_latency=mean_t,
        latency_ci=ci_t,
        mean_cost=mean_c,
        cost_ci=ci_c,
        jobs_counted=int(latency[warmup:].size),
        warmup_discarded=min(warmup, len(raw["arrival"])),
        stable=trend.stable,
        batches=b,
    )
    return RunResult(
        summary=summary,
        records=_assemble_records(raw),
        started_per_server=raw["started_per_server"],
        stability=trend,
    )


def stability_probe(scenario: Scenario, horizon: int | None = None) -> StabilityVerdict:
    """Judge stability from queue growth over a dedicated horizon run."""
    jobs = horizon if horizon is not None else max(scenario.jobs, 20_000)
    if jobs < 10_000:
        raise ValueError(f"stability probe needs a horizon of >= 10^4 jobs, got {jobs}")
    raw = _simulate(scenario.single_spec(), jobs, scenario.seed)
    return _queue_trend(raw["queue_samples"])


def write_trace(records: Iterable, path) -> None:
    """Write per-job records as CSV; never-started replicas appear as '-'."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("job_id,arrival,start_times,completion,latency,cost\n")
        for rec in records:
            starts = ";".join(
                "-" if s is None else f"{s:.10g}" for s in rec.start_times)
            fh.write(f"{rec.job_id},{rec.arrival:.10g},{starts},"
                     f"{rec.completion:.10g},{rec.latency:.10g},{rec.cost:.10g}\n")
