"""Service-time distributions and their order-statistic machinery.

Every distribution exposes the tail Pr(X > x), scalar and vectorized
sampling, moments of the minimum of r i.i.d. copies, and a classifier
that decides whether log Pr(X > x) is concave, convex, both (the
exponential), or neither.  The minimum moments E[X_{1:r}] and
E[X_{1:r}^2] are the quantities every closed-form latency/cost formula
in :mod:`redsim.analysis` is built from.
"""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
from scipy import integrate, optimize


class NonFiniteMomentError(ArithmeticError):
    """Raised when a requested moment integral fails to converge."""


class Concavity(enum.Enum):
    """Shape class of the log-tail log Pr(X > x) on [0, inf)."""

    LOG_CONCAVE = "log-concave"
    LOG_CONVEX = "log-convex"
    BOTH = "both"
    NEITHER = "neither"


# Absolute tolerance for moment integrals.
_QUAD_TOL = 1e-9


def _moment_from_tail(tail: Callable[[float], float], r: int, k: int,
                      upper_hint: float | None = None) -> float:
    """E[X_{1:r}^k] = k * integral of x^(k-1) * tail(x)^r over [0, inf).

    Adaptive quadrature over doubling windows [x, 2x].  The sum stops
    once a window contributes less than the 1e-9 tolerance and the tail
    has genuinely decayed; if the contributions never shrink (a
    diverging moment, e.g. tail ~ 1/x), NonFiniteMomentError is raised
    instead of silently truncating.
    """
    if r < 1:
        raise ValueError(f"r must be >= 1, got {r}")
    if k not in (1, 2):
        raise ValueError(f"moment order must be 1 or 2, got {k}")

    def integrand(x: float) -> float:
        return k * x ** (k - 1) * tail(x) ** r

    hi = upper_hint if upper_hint and upper_hint > 0 else 1.0
    total, _ = integrate.quad(integrand, 0.0, hi, epsabs=1e-10, epsrel=1e-10,
                              limit=500)
    lo = hi
    for _ in range(90):
        hi = 2.0 * lo
        piece, _ = integrate.quad(integrand, lo, hi, epsabs=1e-10, epsrel=1e-10,
                                  limit=200)
        total += piece
        if not math.isfinite(total):
            break
        if piece < max(_QUAD_TOL, 1e-12 * total) and tail(hi) ** r < 1e-9:
            return total
        lo = hi
    raise NonFiniteMomentError(
        f"moment integral fails to converge (reached x = {hi:.3g}, "
        f"last window contributed {piece:.3g})")


def _tail_quantile(tail: Callable[[float], float], prob: float,
                   start: float = 1.0) -> float:
    """Smallest x with tail(x) <= prob, found by doubling plus brentq."""
    x_hi = max(start, 1e-9)
    for _ in range(200):
        if tail(x_hi) <= prob:
            break
        x_hi *= 2.0
    else:
        raise NonFiniteMomentError(f"tail never reaches {prob}")
    return float(optimize.brentq(lambda x: tail(x) - prob, 0.0, x_hi,
                                 xtol=1e-12, rtol=1e-12))


def _classify_from_grid(tail: Callable[[float], float], mean: float) -> Concavity:
    """Numerically classify a tail by the sign of log-tail curvature.

    Evaluates g = log tail on a geometric grid of 200 points between
    1e-4 * E[X] and the 1e-6 quantile (geometric so the region near 0,
    where shifted distributions kink, is well resolved), then inspects
    successive slope differences with a 1e-9 relative tolerance.
    """
    x_lo = 1e-4 * mean
    x_hi = _tail_quantile(tail, 1e-6, start=mean)
    if x_hi <= x_lo:
        x_hi = 2.0 * x_lo
    xs = np.geomspace(x_lo, x_hi, 200)
    g = np.log(np.clip([tail(float(x)) for x in xs], 1e-300, None))
    slopes = np.diff(g) / np.diff(xs)
    deltas = np.diff(slopes)
    tol = 1e-9 * max(1.0, float(np.max(np.abs(slopes))))
    concave = bool(np.all(deltas <= tol))
    convex = bool(np.all(deltas >= -tol))
    if concave and convex:
        return Concavity.BOTH
    if concave:
        return Concavity.LOG_CONCAVE
    if convex:
        return Concavity.LOG_CONVEX
    return Concavity.NEITHER


class ServiceDistribution:
    """A positive service-time law X. Immutable; safe to share."""

    def tail(self, x: float) -> float:
        """Pr(X > x); equals 1 for any x <= 0."""
        raise NotImplementedError

    def sample(self, rng: random.Random) -> float:
        """One draw of X from a stdlib random stream (simulation path)."""
        raise NotImplementedError

    def sample_array(self, rng: np.random.Generator, size) -> np.ndarray:
        """Vectorized draws of X (Monte-Carlo / oracle path)."""
        raise NotImplementedError

    def sampler(self, rng: random.Random) -> Callable[[], float]:
        """Zero-argument draw closure bound to ``rng`` (hot-loop helper)."""
        return lambda: self.sample(rng)

    def min_moment(self, r: int = 1, k: int = 1) -> float:
        """E[X_{1:r}^k], the k-th moment of the minimum of r i.i.d. copies."""
        raise NotImplementedError

    def mean(self) -> float:
        return self.min_moment(1, 1)

    def moment2(self) -> float:
        return self.min_moment(1, 2)

    def classify(self) -> Concavity:
        raise NotImplementedError


@dataclass(frozen=True)
class Exponential(ServiceDistribution):
    """Exp(mu): the memoryless law, log-concave and log-convex at once."""

    mu: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"rate mu must be > 0, got {self.mu}")

    def tail(self, x: float) -> float:
        return 1.0 if x <= 0.0 else math.exp(-self.mu * x)

    def sample(self, rng: random.Random) -> float:
        return rng.expovariate(self.mu)

    def sample_array(self, rng: np.random.Generator, size) -> np.ndarray:
        return rng.exponential(1.0 / self.mu, size)

    def sampler(self, rng: random.Random) -> Callable[[], float]:
        expo, mu = rng.expovariate, self.mu
        return lambda: expo(mu)

    def min_moment(self, r: int = 1, k: int = 1) -> float:
        if r < 1 or k not in (1, 2):
            raise ValueError("need r >= 1 and k in {1, 2}")
        rate = r * self.mu
        return 1.0 / rate if k == 1 else 2.0 / (rate * rate)

    def classify(self) -> Concavity:
        return Concavity.BOTH


@dataclass(frozen=True)
class ShiftedExp(ServiceDistribution):
    """delta + Exp(mu): constant setup time plus exponential remainder.

    Log-concave for delta > 0; degenerates to Exponential(mu) at
    delta = 0.
    """

    delta: float
    mu: float

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError(f"shift delta must be >= 0, got {self.delta}")
        if not self.mu > 0:
            raise ValueError(f"rate mu must be > 0, got {self.mu}")

    def tail(self, x: float) -> float:
        return 1.0 if x <= self.delta else math.exp(-self.mu * (x - self.delta))

    def sample(self, rng: random.Random) -> float:
        return self.delta + rng.expovariate(self.mu)

    def sample_array(self, rng: np.random.Generator, size) -> np.ndarray:
        return self.delta + rng.exponential(1.0 / self.mu, size)

    def sampler(self, rng: random.Random) -> Callable[[], float]:
        expo, mu, delta = rng.expovariate, self.mu, self.delta
        return lambda: delta + expo(mu)

    def min_moment(self, r: int = 1, k: int = 1) -> float:
        # X_{1:r} ~ delta + Exp(r * mu)
        if r < 1 or k not in (1, 2):
            raise ValueError("need r >= 1 and k in {1, 2}")
        rate = r * self.mu
        if k == 1:
            return self.delta + 1.0 / rate
        return self.delta ** 2 + 2.0 * self.delta / rate + 2.0 / (rate * rate)

    def classify(self) -> Concavity:
        return Concavity.BOTH if self.delta == 0.0 else Concavity.LOG_CONCAVE


@dataclass(frozen=True)
class HyperExp(ServiceDistribution):
    """Mixture of Exp(mu1) with probability p and Exp(mu2) otherwise.

    Parameter order is (p, mu1, mu2) throughout this package.
    Log-convex whenever the mixture is non-degenerate.
    """

    p: float
    mu1: float
    mu2: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"weight p must be in [0, 1], got {self.p}")
        if not (self.mu1 > 0 and self.mu2 > 0):
            raise ValueError("rates mu1, mu2 must be > 0")

    def tail(self, x: float) -> float:
        if x <= 0.0:
            return 1.0
        return self.p * math.exp(-self.mu1 * x) + (1.0 - self.p) * math.exp(-self.mu2 * x)

    def sample(self, rng: random.Random) -> float:
        if rng.random() < self.p:
            return rng.expovariate(self.mu1)
        return rng.expovariate(self.mu2)

    def sample_array(self, rng: np.random.Generator, size) -> np.ndarray:
        branch = rng.random(size) < self.p
        draws = rng.exponential(1.0, size)
        return np.where(branch, draws / self.mu1, draws / self.mu2)

    def sampler(self, rng: random.Random) -> Callable[[], float]:
        uni, expo = rng.random, rng.expovariate
        p, mu1, mu2 = self.p, self.mu1, self.mu2
        return lambda: expo(mu1) if uni() < p else expo(mu2)

    def min_moment(self, r: int = 1, k: int = 1) -> float:
        # tail^r expands binomially into exponentials with rates
        # j*mu1 + (r-j)*mu2, which integrate term by term.
        if r < 1 or k not in (1, 2):
            raise ValueError("need r >= 1 and k in {1, 2}")
        p, q = self.p, 1.0 - self.p
        total = 0.0
        for j in range(r + 1):
            weight = math.comb(r, j) * p ** j * q ** (r - j)
            if weight == 0.0:
                continue
            rate = j * self.mu1 + (r - j) * self.mu2
            total += weight / rate if k == 1 else 2.0 * weight / (rate * rate)
        return total

    def classify(self) -> Concavity:
        degenerate = self.p in (0.0, 1.0) or self.mu1 == self.mu2
        return Concavity.BOTH if degenerate else Concavity.LOG_CONVEX


@dataclass(frozen=True)
class GenericTail(ServiceDistribution):
    """A distribution given only by its tail function.

    ``upper_hint`` should point at the scale where the tail has mostly
    decayed; it seeds the doubling searches for quadrature windows and
    quantiles.  Moments come from adaptive quadrature, sampling from
    numeric tail inversion, and classification from the log-tail grid.
    """

    tail_fn: Callable[[float], float]
    upper_hint: float = 1.0
    _mean_cache: list = field(default_factory=list, compare=False, repr=False)

    def tail(self, x: float) -> float:
        if x <= 0.0:
            return 1.0
        return min(1.0, max(0.0, float(self.tail_fn(x))))

    def _invert(self, u: float) -> float:
        # Smallest x with tail(x) <= u; valid for u in (0, 1).
        if u >= 1.0:
            return 0.0
        return _tail_quantile(self.tail, u, start=self.upper_hint)

    def sample(self, rng: random.Random) -> float:
        return self._invert(rng.random())

    def sample_array(self, rng: np.random.Generator, size) -> np.ndarray:
        flat = rng.random(np.prod(size) if not np.isscalar(size) else size)
        out = np.array([self._invert(float(u)) for u in np.atleast_1d(flat)])
        return out.reshape(size)

    def min_moment(self, r: int = 1, k: int = 1) -> float:
        return _moment_from_tail(self.tail, r, k, upper_hint=self.upper_hint)

    def mean(self) -> float:
        if not self._mean_cache:
            self._mean_cache.append(self.min_moment(1, 1))
        return self._mean_cache[0]

    def classify(self) -> Concavity:
        return _classify_from_grid(self.tail, self.mean())


@dataclass(frozen=True)
class NbuReport:
    """Outcome of checking tail(x+t) <= tail(x) * tail(t) over a grid.

    ``nbu_holds`` means the new-better-than-used direction held at every
    evaluated point, ``nwu_holds`` the reversed direction.  Both hold
    simultaneously for the exponential.  Grid points where tail(t) = 0
    are skipped and counted.
    """

    nbu_holds: bool
    nwu_holds: bool
    checked: int
    skipped: int


def nbu_check(dist: ServiceDistribution,
              grid: Iterable[tuple[float, float]]) -> NbuReport:
    """Test the used-vs-fresh inequality of residual service times.

    Each grid entry is an (x, t) pair with x, t >= 0; the comparison is
    Pr(X > x + t) vs Pr(X > x) * Pr(X > t), which avoids dividing by
    small tails.
    """
    nbu = True
    nwu = True
    checked = 0
    skipped = 0
    for x, t in grid:
        if x < 0 or t < 0:
            raise ValueError(f"grid points must be non-negative, got ({x}, {t})")
        tail_t = dist.tail(t)
        if tail_t == 0.0:
            skipped += 1
            continue
        lhs = dist.tail(x + t)
        rhs = dist.tail(x) * tail_t
        tol = 1e-12 * max(lhs, rhs, 1e-300)
        if lhs > rhs + tol:
            nbu = False
        if lhs < rhs - tol:
            nwu = False
        checked += 1
    return NbuReport(nbu_holds=nbu, nwu_holds=nwu, checked=checked, skipped=skipped)


# --- config-literal support -------------------------------------------------

_KIND_ALIASES = {
    "exp": "exp",
    "exponential": "exp",
    "shiftedexp": "shiftedexp",
    "hyperexp": "hyperexp",
}


def from_config(mapping: dict) -> ServiceDistribution:
    """Build a distribution from a config table.

    Accepted forms: ``{kind = "exp", mu = 1.0}``,
    ``{kind = "shiftedexp", delta = 1.0, mu = 0.5}``,
    ``{kind = "hyperexp", p = 0.1, mu1 = 1.5, mu2 = 0.5}``.
    """
    if not isinstance(mapping, dict) or "kind" not in mapping:
        raise ValueError(f"distribution literal must be a table with a 'kind': {mapping!r}")
    kind = _KIND_ALIASES.get(str(mapping["kind"]).lower())
    extra = {k for k in mapping if k != "kind"}
    try:
        if kind == "exp":
            _require_keys(extra, {"mu"}, mapping)
            return Exponential(mu=float(mapping["mu"]))
        if kind == "shiftedexp":
            _require_keys(extra, {"delta", "mu"}, mapping)
            return ShiftedExp(delta=float(mapping["delta"]), mu=float(mapping["mu"]))
        if kind == "hyperexp":
            _require_keys(extra, {"p", "mu1", "mu2"}, mapping)
            return HyperExp(p=float(mapping["p"]), mu1=float(mapping["mu1"]),
                            mu2=float(mapping["mu2"]))
    except (TypeError, KeyError) as exc:
        raise ValueError(f"bad distribution literal {mapping!r}: {exc}") from exc
    raise ValueError(f"unknown distribution kind {mapping.get('kind')!r}")


def _require_keys(got: set, want: set, mapping: dict) -> None:
    if got != want:
        raise ValueError(
            f"distribution literal {mapping!r}: expected keys {sorted(want)}, got {sorted(got)}")


def to_config(dist: ServiceDistribution) -> dict:
    """Inverse of :func:`from_config` for the parametric kinds."""
    if isinstance(dist, ShiftedExp):
        return {"kind": "shiftedexp", "delta": dist.delta, "mu": dist.mu}
    if isinstance(dist, Exponential):
        return {"kind": "exp", "mu": dist.mu}
    if isinstance(dist, HyperExp):
        return {"kind": "hyperexp", "p": dist.p, "mu1": dist.mu1, "mu2": dist.mu2}
    raise ValueError(f"{type(dist).__name__} has no config representation")
