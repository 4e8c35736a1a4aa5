import io
import math

import pytest

from redsim import (
    Concavity,
    Exponential,
    GenericTail,
    HyperExp,
    Load,
    Policy,
    Scenario,
    ShiftedExp,
    analyze_scenarios,
    conjecture_probe,
    decision_report,
    emit_csv,
    read_csv,
    run_scenarios,
)
from redsim.cli import main as cli_main

from testutil import make_scenario

TINY_TOML = """
[[scenario]]
name = "tiny-fj"
policy = "forkjoin"
n = 2
lambda = [0.1, 0.3]
dist = {{ kind = "shiftedexp", delta = 1.0, mu = 0.5 }}
jobs = {jobs}
seed = 99
warmup = {warmup}

[[scenario]]
name = "tiny-uni"
policy = "uniform"
n = 4
r = 2
lambda = 0.4
dist = {{ kind = "hyperexp", p = 0.1, mu1 = 1.5, mu2 = 0.5 }}
jobs = {jobs}
seed = 100
warmup = {warmup}
"""


@pytest.fixture(scope="module")
def tiny_config(tmp_path_factory):
    p = tmp_path_factory.mktemp("cfg") / "tiny.toml"
    p.write_text(TINY_TOML.format(jobs=4000, warmup=400))
    return p


@pytest.fixture(scope="module")
def tiny_rows(tiny_config):
    from redsim import load_config

    return run_scenarios(load_config(tiny_config))


class TestRows:
    def test_row_population(self, tiny_rows):
        assert len(tiny_rows) == 3
        fj0, fj1, uni = tiny_rows
        assert (fj0.scenario, fj0.policy, fj0.n, fj0.r) == ("tiny-fj", "forkjoin", 2, 2)
        for row in (fj0, fj1):
            assert row.et_kind == "Exact"
            assert row.et_analytic is not None
            assert row.ec_analytic_lo == row.ec_analytic_hi
            assert row.capacity == pytest.approx(0.5)
            assert row.et_sim is not None and row.ec_sim is not None
            assert row.stable is True
        assert uni.et_kind == "BoundsOnly"
        assert uni.et_analytic is None
        assert uni.ec_analytic_lo < uni.ec_analytic_hi
        # capacity for bounds-only policies comes from the simulated cost
        assert uni.capacity == pytest.approx(4.0 / uni.ec_sim)

    def test_simulation_tracks_analytics(self, tiny_rows):
        fj0 = tiny_rows[0]
        assert fj0.et_sim == pytest.approx(fj0.et_analytic, rel=0.15)
        assert fj0.ec_sim == pytest.approx(fj0.ec_analytic_lo, rel=0.05)

    def test_overrides(self, tiny_config):
        from redsim import load_config

        rows = run_scenarios(load_config(tiny_config), jobs=1000, seed=5)
        assert len(rows) == 3

    def test_analyze_rows_have_no_sim_fields(self, tiny_config):
        from redsim import load_config

        rows = analyze_scenarios(load_config(tiny_config))
        assert len(rows) == 3
        for row in rows:
            assert row.et_sim is None and row.ec_sim is None and row.stable is None
        assert rows[2].capacity is None  # bounds-only without simulated cost

    def test_unstable_point_still_rows(self):
        sc = make_scenario(Policy.FORK_JOIN, 2, 3.0, ShiftedExp(1.0, 0.5),
                           jobs=12_000, seed=4, warmup=1_000)  # capacity 0.5
        (row,) = run_scenarios([sc])
        assert row.et_analytic is None          # unstable: no finite prediction
        assert row.et_kind == "Exact"
        assert row.ec_analytic_lo == pytest.approx(4.0)
        assert row.et_sim is not None           # simulation still attempted
        assert row.stable is False


class TestCsv:
    def test_single_row_two_lines(self, tiny_rows, tmp_path):
        out = tmp_path / "one.csv"
        emit_csv(tiny_rows[:1], out)
        lines = out.read_text().splitlines()
        assert len(lines) == 2
        assert lines[0].startswith("scenario,policy,n,r,lambda,ET_sim")

    def test_round_trip_is_exact(self, tiny_rows, tmp_path):
        out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
        emit_csv(tiny_rows, out1)
        emit_csv(read_csv(out1), out2)
        assert out1.read_bytes() == out2.read_bytes()

    def test_unavailable_serializes_empty(self, tiny_config, tmp_path):
        from redsim import load_config

        rows = analyze_scenarios(load_config(tiny_config))
        buf = io.StringIO()
        emit_csv(rows, buf)
        uni_line = buf.getvalue().splitlines()[3]
        parts = uni_line.split(",")
        assert parts[5] == "" and parts[9] == "" and parts[13] == "" and parts[14] == ""

    def test_six_significant_digits(self, tiny_rows, tmp_path):
        out = tmp_path / "c.csv"
        emit_csv(tiny_rows, out)
        cell = out.read_text().splitlines()[1].split(",")[5]
        assert len(cell.replace(".", "").replace("-", "").lstrip("0")) <= 6

    def test_empty_rows_rejected(self):
        with pytest.raises(ValueError):
            emit_csv([], io.StringIO())

    def test_read_rejects_foreign_csv(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ValueError):
            read_csv(p)


class TestDecisionReport:
    def test_log_concave_cells(self):
        d = ShiftedExp(1.0, 0.5)
        high = decision_report(d, 4, Load.HIGH)
        assert high.keep_redundancy is False and high.fork_degree == 1
        low = decision_report(d, 4, Load.LOW)
        assert low.keep_redundancy is True and low.fork_degree == 4

    def test_log_convex_cells(self):
        d = HyperExp(0.1, 1.5, 0.5)
        for load in (Load.LOW, Load.HIGH):
            rec = decision_report(d, 6, load)
            assert rec.keep_redundancy is True and rec.fork_degree == 6

    def test_exponential_cost_neutral(self):
        rec = decision_report(Exponential(0.5), 4, Load.HIGH)
        assert rec.classification is Concavity.BOTH
        assert "cost-neutral" in rec.note
        costs = {opt.expected_cost for opt in rec.options}
        assert max(costs) - min(costs) < 1e-12

    def test_neither_gets_explicit_no_rule(self):
        def tail(x):
            if x <= 1.0:
                return math.exp(-x)
            if x <= 2.0:
                return math.exp(-1.0 - 2.0 * (x - 1.0))
            return math.exp(-3.0 - 0.5 * (x - 2.0))

        rec = decision_report(GenericTail(tail, upper_hint=10.0), 4, "high")
        assert rec.keep_redundancy is None and rec.fork_degree is None
        assert "no rule" in rec.note
        assert "recommendation: none" in rec.render()

    def test_supporting_numbers(self):
        d = ShiftedExp(1.0, 0.5)
        rec = decision_report(d, 4, Load.HIGH)
        by_label = {o.label: o for o in rec.options}
        full = by_label["replicate at all n, cancel on first completion"]
        assert full.expected_cost == pytest.approx(4 * d.min_moment(4, 1))
        assert full.capacity == pytest.approx(1.0 / d.min_moment(4, 1))
        single = by_label["fork to a single server (r = 1)"]
        assert single.expected_cost == pytest.approx(3.0)
        assert single.capacity == pytest.approx(4.0 / 3.0)


class TestConjectureProbe:
    def test_requires_log_convex(self):
        with pytest.raises(ValueError):
            conjecture_probe(Exponential(1.0), 3, [0.5], jobs=1000)
        with pytest.raises(ValueError):
            conjecture_probe(ShiftedExp(1.0, 0.5), 3, [0.5], jobs=1000)

    def test_small_probe_structure(self):
        report = conjecture_probe(HyperExp(0.1, 1.5, 0.5), 3, [0.5, 1.2],
                                  jobs=6_000, seed=3)
        assert report.n == 3
        assert len(report.entries) == 2
        for entry in report.entries:
            assert entry.r_values == (1, 2, 3)
            assert len(entry.latency) == 3
        text = report.render()
        assert "lambda = 0.5" in text and "overall:" in text

    def test_full_fork_wins_moderate_load(self):
        # log-convex: replication helps at every rate; should hold
        # comfortably at these loads and sizes
        report = conjecture_probe(HyperExp(0.1, 1.5, 0.5), 4, [1.0, 1.8],
                                  jobs=30_000, seed=5)
        assert report.consistent


class TestPolicyComparison:
    """Simultaneous starts vs staggered starts at heavy load, n=6, r=2."""

    @staticmethod
    def _run(policy, lam, dist, seed, jobs):
        sc = make_scenario(policy, 6, lam, dist, r=2, jobs=jobs, seed=seed,
                           warmup=jobs // 10)
        from redsim import run

        return run(sc).summary

    def test_log_concave_prefers_staggering(self):
        # uniform-random staggering lowers both cost and latency
        d = ShiftedExp(1.0, 0.5)
        grp = self._run(Policy.PARTIAL_GROUP_RANDOM, 1.4, d, 61, 150_000)
        uni = self._run(Policy.PARTIAL_UNIFORM_RANDOM, 1.4, d, 62, 150_000)
        assert uni.mean_latency + uni.latency_ci < grp.mean_latency - grp.latency_ci
        assert uni.mean_cost + uni.cost_ci < grp.mean_cost - grp.cost_ci

    def test_log_convex_prefers_synchronized(self):
        # group keeps E[C] at the lower bound, so it holds more load:
        # past the uniform policy's capacity only group stays stable
        d = HyperExp(0.1, 1.5, 0.5)
        grp = self._run(Policy.PARTIAL_GROUP_RANDOM, 3.3, d, 81, 300_000)
        uni = self._run(Policy.PARTIAL_UNIFORM_RANDOM, 3.3, d, 82, 300_000)
        assert grp.mean_latency + grp.latency_ci < uni.mean_latency - uni.latency_ci
        assert grp.stable and not uni.stable

    def test_log_convex_cost_ordering_at_stable_load(self):
        d = HyperExp(0.1, 1.5, 0.5)
        grp = self._run(Policy.PARTIAL_GROUP_RANDOM, 3.1, d, 63, 150_000)
        uni = self._run(Policy.PARTIAL_UNIFORM_RANDOM, 3.1, d, 64, 150_000)
        assert grp.mean_cost + grp.cost_ci < uni.mean_cost - uni.cost_ci


class TestCli:
    def test_simulate_to_file(self, tiny_config, tmp_path, capsys):
        out = tmp_path / "rows.csv"
        code = cli_main(["simulate", "--config", str(tiny_config), "--out", str(out),
                         "--jobs", "800"])
        assert code == 0
        rows = read_csv(out)
        assert len(rows) == 3

    def test_simulate_stdout(self, tiny_config, capsys):
        code = cli_main(["simulate", "--config", str(tiny_config), "--jobs", "600"])
        assert code == 0
        header = capsys.readouterr().out.splitlines()[0]
        assert header.startswith("scenario,policy,n,r,lambda")

    def test_analyze_preset_by_name(self, capsys):
        code = cli_main(["analyze", "--config", "fig5"])
        assert code == 0
        out = capsys.readouterr().out.splitlines()
        assert len(out) == 1 + 30  # three blocks x ten n values

    def test_trace_single_point(self, tmp_path, capsys):
        cfg = tmp_path / "single.toml"
        cfg.write_text("""
policy = "forkjoin"
n = 2
lambda = 0.4
dist = { kind = "exp", mu = 1.0 }
jobs = 500
warmup = 50
""")
        trace = tmp_path / "trace.csv"
        code = cli_main(["simulate", "--config", str(cfg), "--trace", str(trace),
                         "--out", str(tmp_path / "rows.csv")])
        assert code == 0
        assert trace.read_text().startswith("job_id,arrival,start_times")

    def test_trace_rejects_sweeps(self, tiny_config, tmp_path, capsys):
        code = cli_main(["simulate", "--config", str(tiny_config),
                         "--trace", str(tmp_path / "t.csv")])
        assert code == 1

    def test_unknown_config(self, capsys):
        code = cli_main(["simulate", "--config", "no-such-thing"])
        assert code == 1
        assert "presets" in capsys.readouterr().err

    def test_invalid_config_content(self, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        bad.write_text('policy = "forkjoin"\nn = 2\n')  # no lambda, no dist
        code = cli_main(["analyze", "--config", str(bad)])
        assert code == 1

    def test_decide(self, capsys):
        code = cli_main(["decide", "--dist", '{"kind": "exp", "mu": 0.5}',
                         "--n", "4", "--load", "low"])
        assert code == 0
        assert "cost-neutral" in capsys.readouterr().out

    def test_decide_bad_literal(self, capsys):
        code = cli_main(["decide", "--dist", "not a dist", "--n", "4", "--load", "low"])
        assert code == 1

    def test_probe_rejects_concave(self, capsys):
        code = cli_main(["probe-conjecture", "--dist",
                         '{"kind": "shiftedexp", "delta": 1.0, "mu": 0.5}',
                         "--n", "3", "--jobs", "1000"])
        assert code == 1

    def test_probe_runs(self, capsys):
        code = cli_main(["probe-conjecture", "--dist",
                         '{"kind": "hyperexp", "p": 0.1, "mu1": 1.5, "mu2": 0.5}',
                         "--n", "2", "--lambdas", "0.6", "--jobs", "3000"])
        assert code == 0
        assert "fork-degree probe" in capsys.readouterr().out

    def test_io_error_exit_code(self, tiny_config, capsys):
        code = cli_main(["analyze", "--config", str(tiny_config),
                         "--out", "/no/such/dir/rows.csv"])
        assert code == 3

    def test_missing_subcommand_is_validation_error(self, capsys):
        assert cli_main([]) == 1

    def test_csv_determinism(self, tiny_config):
        from redsim import load_config

        buf1, buf2 = io.StringIO(), io.StringIO()
        emit_csv(run_scenarios(load_config(tiny_config), jobs=1500), buf1)
        emit_csv(run_scenarios(load_config(tiny_config), jobs=1500), buf2)
        assert buf1.getvalue() == buf2.getvalue()


class TestZeroLoad:
    def test_zero_rate_rows_expose_pure_service_latency(self):
        sc = Scenario(name="idle", policy=Policy.FORK_JOIN, n=(4,), r=None,
                      lambdas=(0.0, 0.0), dist=ShiftedExp(1.0, 0.5),
                      jobs=100, seed=1, warmup=0)
        rows = run_scenarios([sc])
        assert len(rows) == 2
        for row in rows:
            assert row.et_analytic == pytest.approx(1.5)  # E[X_1:4]
            assert row.et_sim is None  # no arrivals ever happen
            assert row.stable is True


class TestDecisionAgreement:
    """The recommended strategy wins the head-to-head simulations at
    0.9x (high) and 0.1x (low) of the candidate capacities."""

    @staticmethod
    def _latency(policy, n, lam, dist, seed, r=None):
        sc = make_scenario(policy, n, lam, dist, r=r, jobs=100_000, seed=seed,
                           warmup=10_000)
        from redsim import run

        s = run(sc).summary
        return s.mean_latency, s.latency_ci

    @pytest.mark.parametrize("dist,load", [
        (ShiftedExp(1.0, 0.5), Load.HIGH),
        (ShiftedExp(1.0, 0.5), Load.LOW),
        (HyperExp(0.1, 1.5, 0.5), Load.HIGH),
        (HyperExp(0.1, 1.5, 0.5), Load.LOW),
        (Exponential(0.5), Load.HIGH),
        (Exponential(0.5), Load.LOW),
    ], ids=lambda v: getattr(v, "value", repr(v)))
    def test_recommendation_matches_empirical_winner(self, dist, load):
        n = 4
        rec = decision_report(dist, n, load)
        cap_fj = 1.0 / dist.min_moment(n, 1)
        cap_ec = n / dist.mean()
        lam = 0.9 * max(cap_fj, cap_ec) if load is Load.HIGH \
            else 0.1 * min(cap_fj, cap_ec)

        fj = self._latency(Policy.FORK_JOIN, n, lam, dist, seed=901)
        ec = self._latency(Policy.FORK_EARLY_CANCEL, n, lam, dist, seed=902)
        winner, loser = (fj, ec) if rec.keep_redundancy else (ec, fj)
        if dist.classify() is Concavity.BOTH:
            # cost-neutral class: the kept-redundancy pick must merely
            # never lose beyond CI
            assert winner[0] - winner[1] < loser[0] + loser[1]
        else:
            assert winner[0] + winner[1] < loser[0] - loser[1]

        r1 = self._latency(Policy.PARTIAL_UNIFORM_RANDOM, n, lam, dist,
                           seed=903, r=1)
        rn = self._latency(Policy.PARTIAL_UNIFORM_RANDOM, n, lam, dist,
                           seed=904, r=n)
        best, worst = (rn, r1) if rec.fork_degree == n else (r1, rn)
        assert best[0] + best[1] < worst[0] - worst[1]


class TestWorkerPool:
    def test_pool_size_does_not_change_results(self, tiny_config):
        # points are independently seeded and ordered by sweep index,
        # so fanning out to processes is invisible in the output
        from redsim import load_config

        serial = run_scenarios(load_config(tiny_config), jobs=1200, workers=1)
        pooled = run_scenarios(load_config(tiny_config), jobs=1200, workers=2)
        assert serial == pooled
