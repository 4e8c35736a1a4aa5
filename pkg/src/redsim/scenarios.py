"""Scenario descriptions, config-file loading, and sweep expansion.

A scenario bundles a system description with the experiment knobs
(job count, seed, warm-up, replications).  The n, r, and lambda fields
may hold several values; ``points()`` expands the cross product into
single-point scenarios with independently derived seeds, which is what
the simulator consumes.

Config files are TOML or JSON.  A file holds either one scenario at
top level or a list under the key ``scenario`` (TOML ``[[scenario]]``
blocks).  Recognized keys::

    name          optional label (defaults to the file stem)
    policy        one of: forkjoin, earlycancel, group, uniform,
                  roundrobin, partialcancel
    n             server count, int or list of ints
    r             fork degree: int, list of ints, or "n" (track n);
                  defaults to n
    lambda        arrival rate: number or explicit list
    lambda_sweep  {lo, hi, steps} or [lo, hi, steps]; evenly spaced
    dist          {kind = "exp", mu = ...} | {kind = "shiftedexp",
                  delta = ..., mu = ...} | {kind = "hyperexp", p = ...,
                  mu1 = ..., mu2 = ...}
    jobs          simulated jobs per point (default 100000)
    seed          64-bit root seed (default 12345)
    warmup        jobs to discard: int count or fraction in (0, 1);
                  default max(10^4, 10% of jobs), capped at jobs // 2
    replications  independent repeats per point (default 1)
"""

from __future__ import annotations

import itertools
import json
import zlib
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .analysis import ConfigurationError, Policy, SystemSpec
from .distributions import ServiceDistribution, from_config

_ALLOWED_KEYS = {
    "name", "policy", "n", "r", "lambda", "lambda_sweep", "dist",
    "jobs", "seed", "warmup", "replications",
}

DEFAULT_JOBS = 100_000
DEFAULT_SEED = 12345


def default_warmup(jobs: int) -> int:
    """Default warm-up: max(10^4, 10%) of jobs, capped for short runs."""
    return min(max(10_000, jobs // 10), jobs // 2)


@dataclass(frozen=True)
class Scenario:
    """One experiment description, possibly sweeping n, r, or lambda."""

    name: str
    policy: Policy
    n: tuple[int, ...]
    r: tuple[int, ...] | None  # None: r follows n
    lambdas: tuple[float, ...]
    dist: ServiceDistribution
    jobs: int = DEFAULT_JOBS
    seed: int = DEFAULT_SEED
    warmup: int | float | None = None
    replications: int = 1

    def __post_init__(self):
        if self.jobs < 1:
            raise ConfigurationError(f"{self.name}: jobs must be >= 1")
        if self.replications < 1:
            raise ConfigurationError(f"{self.name}: replications must be >= 1")
        if not self.lambdas:
            raise ConfigurationError(f"{self.name}: no arrival rates given")
        if isinstance(self.warmup, float) and not 0.0 <= self.warmup < 1.0:
            raise ConfigurationError(
                f"{self.name}: fractional warmup must be in [0, 1), got {self.warmup}")
        if isinstance(self.warmup, int) and not 0 <= self.warmup < self.jobs:
            raise ConfigurationError(
                f"{self.name}: warmup must satisfy 0 <= warmup < jobs, got {self.warmup}")
        self.system_specs()  # validate every sweep point eagerly

    def _grid(self):
        for nn in self.n:
            r_values = self.r if self.r is not None else (nn,)
            for rr in r_values:
                for lam in self.lambdas:
                    yield nn, rr, lam

    def system_specs(self) -> list[SystemSpec]:
        return [SystemSpec(n=nn, r=rr, lam=lam, policy=self.policy, dist=self.dist)
                for nn, rr, lam in self._grid()]

    def resolved_warmup(self) -> int:
        if self.warmup is None:
            return default_warmup(self.jobs)
        if isinstance(self.warmup, float):
            return int(self.jobs * self.warmup)
        return self.warmup

    def is_single_point(self) -> bool:
        return len(self.n) == 1 and len(self.lambdas) == 1 and \
            (self.r is None or len(self.r) == 1) and self.replications == 1

    def single_spec(self) -> SystemSpec:
        specs = self.system_specs()
        if len(specs) != 1:
            raise ConfigurationError(
                f"{self.name}: expected a single sweep point, found {len(specs)}")
        return specs[0]

    def points(self) -> list["Scenario"]:
        """Expand sweeps x replications into seeded single-point scenarios.

        Seeds are derived from (root seed, scenario name) by index, so
        the expansion is reproducible, independent of evaluation order,
        and distinct across same-seeded scenario blocks in one config.
        """
        grid = list(self._grid())
        seeds = derive_seeds((self.seed, zlib.crc32(self.name.encode())),
                             len(grid) * self.replications)
        out = []
        for idx, ((nn, rr, lam), rep) in enumerate(
                itertools.product(grid, range(self.replications))):
            del rep
            out.append(replace(
                self, n=(nn,), r=(rr,), lambdas=(lam,),
                seed=seeds[idx], replications=1))
        return out


def derive_seeds(entropy, count: int) -> list[int]:
    """Independent per-point seeds from a root entropy value or tuple."""
    children = np.random.SeedSequence(entropy).spawn(count)
    return [int(c.generate_state(2, np.uint64)[0]) for c in children]


# --- parsing -----------------------------------------------------------------


def _as_int_list(value, key: str, name: str) -> tuple[int, ...]:
    if isinstance(value, bool):
        raise ConfigurationError(f"{name}: {key} must be an integer, got {value!r}")
    if isinstance(value, int):
        return (value,)
    if isinstance(value, list) and value and all(
            isinstance(v, int) and not isinstance(v, bool) for v in value):
        return tuple(value)
    raise ConfigurationError(f"{name}: {key} must be an int or list of ints, got {value!r}")


def _parse_lambdas(table: dict, name: str) -> tuple[float, ...]:
    has_plain = "lambda" in table
    has_sweep = "lambda_sweep" in table
    if has_plain == has_sweep:
        raise ConfigurationError(
            f"{name}: give exactly one of 'lambda' or 'lambda_sweep'")
    if has_plain:
        value = table["lambda"]
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return (float(value),)
        if isinstance(value, list) and value and all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            return tuple(float(v) for v in value)
        raise ConfigurationError(f"{name}: lambda must be a number or list, got {value!r}")
    sweep = table["lambda_sweep"]
    if isinstance(sweep, dict):
        missing = {"lo", "hi", "steps"} - set(sweep)
        extra = set(sweep) - {"lo", "hi", "steps"}
        if missing or extra:
            raise ConfigurationError(
                f"{name}: lambda_sweep needs exactly lo/hi/steps, got {sorted(sweep)}")
        lo, hi, steps = sweep["lo"], sweep["hi"], sweep["steps"]
    elif isinstance(sweep, list) and len(sweep) == 3:
        lo, hi, steps = sweep
    else:
        raise ConfigurationError(
            f"{name}: lambda_sweep must be {{lo, hi, steps}} or [lo, hi, steps]")
    if not isinstance(steps, int) or steps < 2:
        raise ConfigurationError(f"{name}: sweep steps must be an int >= 2, got {steps!r}")
    lo, hi = float(lo), float(hi)
    if not lo < hi:
        raise ConfigurationError(f"{name}: sweep needs lo < hi, got [{lo}, {hi}]")
    return tuple(float(x) for x in np.linspace(lo, hi, steps))


def scenario_from_table(table: dict, default_name: str = "scenario") -> Scenario:
    """Validate one config table and build a Scenario from it."""
    if not isinstance(table, dict):
        raise ConfigurationError(f"scenario entry must be a table, got {table!r}")
    name = str(table.get("name", default_name))
    unknown = set(table) - _ALLOWED_KEYS
    if unknown:
        raise ConfigurationError(f"{name}: unknown keys {sorted(unknown)}")
    for key in ("policy", "n", "dist"):
        if key not in table:
            raise ConfigurationError(f"{name}: missing required key '{key}'")
    try:
        policy = Policy(str(table["policy"]).lower())
    except ValueError:
        raise ConfigurationError(
            f"{name}: unknown policy {table['policy']!r}; expected one of "
            f"{[p.value for p in Policy]}") from None
    n = _as_int_list(table["n"], "n", name)
    r = None
    if "r" in table and table["r"] != "n":
        r = _as_int_list(table["r"], "r", name)
    try:
        dist = from_config(table["dist"])
    except ValueError as exc:
        raise ConfigurationError(f"{name}: {exc}") from exc
    jobs = table.get("jobs", DEFAULT_JOBS)
    if not isinstance(jobs, int) or isinstance(jobs, bool):
        raise ConfigurationError(f"{name}: jobs must be an integer, got {jobs!r}")
    seed = table.get("seed", DEFAULT_SEED)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigurationError(f"{name}: seed must be an integer, got {seed!r}")
    warmup = table.get("warmup")
    if warmup is not None and not isinstance(warmup, (int, float)):
        raise ConfigurationError(f"{name}: warmup must be a count or fraction")
    replications = table.get("replications", 1)
    if not isinstance(replications, int) or isinstance(replications, bool):
        raise ConfigurationError(f"{name}: replications must be an integer")
    return Scenario(
        name=name, policy=policy, n=n, r=r,
        lambdas=_parse_lambdas(table, name), dist=dist, jobs=jobs,
        seed=seed, warmup=warmup, replications=replications)


def parse_config_text(text: str, fmt: str, default_name: str = "scenario") -> list[Scenario]:
    """Parse TOML or JSON config text into scenarios."""
    if fmt == "toml":
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"TOML parse error: {exc}") from exc
    elif fmt == "json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(
                f"JSON parse error at line {exc.lineno}: {exc.msg}") from exc
    else:
        raise ValueError(f"unknown config format {fmt!r}")
    if not isinstance(data, dict):
        raise ConfigurationError("config root must be a table/object")
    if "scenario" in data:
        blocks = data["scenario"]
        rest = set(data) - {"scenario"}
        if rest:
            raise ConfigurationError(f"unexpected top-level keys {sorted(rest)}")
        if not isinstance(blocks, list) or not blocks:
            raise ConfigurationError("'scenario' must be a non-empty list of tables")
        return [scenario_from_table(b, f"{default_name}-{i}")
                for i, b in enumerate(blocks)]
    return [scenario_from_table(data, default_name)]


def load_config(path) -> list[Scenario]:
    """Load scenarios from a .toml or .json file."""
    p = Path(path)
    text = p.read_text(encoding="utf-8")
    suffix = p.suffix.lower()
    if suffix == ".json":
        fmt = "json"
    elif suffix in (".toml", ".tml"):
        fmt = "toml"
    else:
        fmt = "json" if text.lstrip().startswith("{") else "toml"
    return parse_config_text(text, fmt, default_name=p.stem)


def parse_dist_literal(text: str) -> ServiceDistribution:
    """Parse a distribution literal in JSON or TOML inline-table form.

    Examples: ``{"kind": "exp", "mu": 1.0}`` or
    ``{kind = "shiftedexp", delta = 1.0, mu = 0.5}``.
    """
    text = text.strip()
    try:
        mapping = json.loads(text)
    except json.JSONDecodeError:
        try:
            mapping = tomllib.loads(f"d = {text}")["d"]
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(
                f"cannot parse distribution literal {text!r}: {exc}") from exc
    try:
        return from_config(mapping)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc
