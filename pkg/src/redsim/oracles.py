"""Independent reference queues for validating the event-driven engine.

These simulators share no code with :mod:`redsim.simulator`: the
single-server queue uses the Lindley waiting-time recursion and the
multi-server queue uses the earliest-available-server recursion.  They
exist so the engine's policy equivalences (fork-join vs. M/G/1 on the
minimum service time, early cancel vs. M/G/n) can be checked against a
structurally different implementation.
"""

from __future__ import annotations

import heapq

import numpy as np

from .distributions import ServiceDistribution


def mg1_latencies(dist: ServiceDistribution, lam: float, jobs: int, seed,
                  warmup: int = 0, min_of: int = 1) -> np.ndarray:
    """Sojourn times of an M/G/1 FCFS queue via the Lindley recursion.

    With ``min_of`` = m, each service time is the minimum of m i.i.d.
    draws from ``dist`` (the effective service law of m simultaneous
    replicas).
    """
    if lam <= 0 or jobs < 1:
        raise ValueError("need lam > 0 and jobs >= 1")
    rng = np.random.default_rng(seed)
    gaps = rng.exponential(1.0 / lam, jobs)
    if min_of == 1:
        services = dist.sample_array(rng, jobs)
    else:
        services = dist.sample_array(rng, (jobs, min_of)).min(axis=1)
    waits = np.empty(jobs)
    w = 0.0
    for i in range(jobs):
        waits[i] = w
        w = max(0.0, w + services[i] - gaps[i])
    # waits[i] was the wait of job i computed before its own service;
    # shift: job i waits max(0, w_{i-1} + S_{i-1} - A_i).
    return (waits + services)[warmup:]


def mgn_latencies(dist: ServiceDistribution, lam: float, n: int, jobs: int,
                  seed, warmup: int = 0) -> np.ndarray:
    """Sojourn times of an M/G/n FCFS queue (one shared queue, n servers).

    Each job takes the earliest server to free up; its start time is the
    max of its arrival and that server's availability.
    """
    if lam <= 0 or jobs < 1 or n < 1:
        raise ValueError("need lam > 0, jobs >= 1, n >= 1")
    rng = np.random.default_rng(seed)
    arrivals = np.cumsum(rng.exponential(1.0 / lam, jobs))
    services = dist.sample_array(rng, jobs)
    avail = [0.0] * n
    heapq.heapify(avail)
    out = np.empty(jobs)
    push, pop = heapq.heappush, heapq.heappop
    for i in range(jobs):
        t = arrivals[i]
        free_at = pop(avail)
        done = (t if t > free_at else free_at) + services[i]
        push(avail, done)
        out[i] = done - t
    return out[warmup:]
