#!/usr/bin/env python3
"""
Tests for the grid-search optimizer
"""

import math
import sys
from pathlib import Path

import pandas as pd
import pytest

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from models.energy import EnergyProfile, energy_report
from models.errors import ConfigError, GridTooLargeError
from models.optimizer import (
    CURVE_COLUMNS,
    LIGHT_TRAFFIC_MIX,
    Constraint,
    LambdaDistribution,
    Mode,
    OptimizationProblem,
    VariableBounds,
    direct_program,
    evaluate_grid,
    feasible,
    optimal_curves,
    optimal_t_min_under_uncertainty,
    solve,
    solve_direct,
    solve_expectation,
    solve_worstcase,
)
from models.service_time import ServiceDistribution
from models.vacation_policy import ProtocolParams, SleepWindowScenario, named_scenario
from models.vacation_queue import series_sums

EXP1 = ServiceDistribution.exponential(1.0)
SCENARIO_NAMES = ["D-I", "D-II", "E-I", "E-II"]
DELAY_BOUND = {"D-I": 50.0, "D-II": 50.0, "E-I": 100.0, "E-II": 100.0}
COLUMNS = ["expectation-hard", "expectation-soft", "worstcase-hard", "worstcase-soft"]

# reference optimal t_min per column
REPORTED_T_MIN = {
    "D-I": [65, 92, 64, 64],
    "D-II": [96, 97, 94, 94],
    "E-I": [22, 50, 21, 21],
    "E-II": [69, 79, 62, 62],
}

# columns where the exact model moves the optimum: (found t_min, allowed gap)
KNOWN_GAPS = {
    ("E-I", "expectation-hard"): (4, 0.05),
    ("E-I", "worstcase-hard"): (4, 0.15),
    ("E-I", "worstcase-soft"): (51, 0.03),
}


@pytest.fixture(scope="module")
def uncertain_outcomes():
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = optimal_t_min_under_uncertainty(
                named_scenario(name), EXP1, t_qos=DELAY_BOUND[name]
            )
        return cache[name]

    return get


def objective_at(name, column, t_min):
    mode, constraint = column.split("-")
    problem = OptimizationProblem(
        mode=Mode(mode),
        scenario=named_scenario(name),
        service=EXP1,
        bounds={"t_min": VariableBounds(t_min, t_min)},
        t_qos=DELAY_BOUND[name],
        constraint=Constraint(constraint),
        distribution=LambdaDistribution.light_traffic_mix(),
    )
    return float(evaluate_grid(problem)["objective"].iloc[0])


class TestLambdaDistribution:
    """Discrete arrival-rate distributions"""

    def test_light_traffic_mix(self):
        dist = LambdaDistribution.light_traffic_mix()
        assert dist.rates == [0.02, 0.05, 0.1, 0.2, 0.5]
        assert dist.probabilities.sum() == pytest.approx(1.0)
        assert dist.support == LIGHT_TRAFFIC_MIX

    @pytest.mark.parametrize(
        "support",
        [
            (),
            ((-0.1, 1.0),),
            ((0.1, 1.5), (0.2, -0.5)),
            ((0.1, 0.5), (0.2, 0.4)),
        ],
    )
    def test_invalid(self, support):
        with pytest.raises(ConfigError):
            LambdaDistribution(support)

    def test_single(self):
        assert LambdaDistribution.single(0.3).support == ((0.3, 1.0),)


class TestVariableBounds:
    """Grid axes"""

    def test_fractional_step(self):
        bounds = VariableBounds(1, 10, 0.25)
        assert len(bounds) == 37
        assert bounds.values()[0] == 1.0
        assert bounds.values()[-1] == 10.0
        assert bounds.values()[1] == 1.25

    def test_single_point(self):
        assert VariableBounds(5, 5).values() == [5.0]

    @pytest.mark.parametrize("args", [(1, 10, 0), (5, 1, 1)])
    def test_invalid(self, args):
        with pytest.raises(ConfigError):
            VariableBounds(*args)


class TestFeasibility:
    """Mean sojourn time against the QoS bound"""

    def test_unbounded(self):
        sc = named_scenario("D-I")
        assert feasible(sc.params, 0.3, sc, EXP1, math.inf)

    def test_plain_queue_at_the_bound(self):
        sc = named_scenario("D-I", t_t=math.inf)
        assert feasible(sc.params, 0.5, sc, EXP1, 2.0 + 1e-9)
        assert not feasible(sc.params, 0.5, sc, EXP1, 1.99)

    def test_long_first_window(self):
        sc = named_scenario("D-I")
        theta = ProtocolParams(t_min=1e4, a=2, l=9, t_t=0, t_w=1, t_l=1)
        assert not feasible(theta, 0.1, sc, EXP1, 50.0)

    def test_unstable_is_infeasible(self):
        sc = named_scenario("D-I")
        assert not feasible(sc.params, 1.0, sc, EXP1, math.inf)


class TestDirect:
    """Single arrival rate"""

    @pytest.fixture(scope="class")
    def p1(self):
        problem = direct_program("P1", named_scenario("D-I"), EXP1, 0.3, 50.0)
        return problem, solve_direct(problem)

    def test_matches_brute_force(self, p1):
        problem, outcome = p1
        frame = outcome.grid
        assert len(frame) == 200
        feasible_rows = frame[frame["feasible"]]
        best = feasible_rows.loc[feasible_rows["objective"].idxmax()]
        assert outcome.feasible
        assert outcome.theta.t_min == best["t_min"]
        assert outcome.objective == pytest.approx(best["objective"], rel=1e-12)
        assert outcome.diagnostics["delay"] <= problem.t_qos

    def test_other_parameters_untouched(self, p1):
        _, outcome = p1
        assert (outcome.theta.a, outcome.theta.l) == (2.0, 9)
        assert outcome.theta.t_t == 0.0

    def test_parallel_matches_sequential(self, p1):
        problem, _ = p1
        sequential = evaluate_grid(problem, n_jobs=1)
        parallel = evaluate_grid(problem, n_jobs=2)
        pd.testing.assert_frame_equal(sequential, parallel)

    def test_energy_scale_leaves_the_optimum(self, p1):
        _, outcome = p1
        scaled = direct_program(
            "P1",
            named_scenario("D-I"),
            EXP1,
            0.3,
            50.0,
            profile=EnergyProfile().scaled(5.0),
        )
        assert solve(scaled).theta == outcome.theta

    def test_minimize_energy_agrees_with_maximize_gain(self, p1):
        _, outcome = p1
        problem = direct_program(
            "P1", named_scenario("D-I"), EXP1, 0.3, 50.0, objective="energy"
        )
        assert solve(problem).theta == outcome.theta

    def test_flat_objective_breaks_ties_low(self):
        sc = named_scenario("D-I", t_min=1e4)
        problem = direct_program("P3", sc, EXP1, 0.1, math.inf)
        outcome = solve(problem)
        assert outcome.theta.l == 0
        configured = SleepWindowScenario(sc.window_law, outcome.theta)
        assert series_sums(0.1, configured).e_zeta < 1 + 1e-6

    def test_infeasible(self):
        problem = direct_program("P1", named_scenario("D-I"), EXP1, 0.3, 1.2)
        outcome = solve(problem)
        assert not outcome.feasible
        assert outcome.theta is None
        assert outcome.objective is None
        assert outcome.diagnostics["n_feasible"] == 0
        assert outcome.summary()["feasible"] is False

    def test_grid_too_large(self):
        problem = OptimizationProblem(
            mode=Mode.DIRECT,
            scenario=named_scenario("D-I"),
            service=EXP1,
            bounds={
                "t_min": VariableBounds(1, 1e6, 1),
                "a": VariableBounds(1, 10, 0.25),
            },
            t_qos=50.0,
            lam=0.1,
        )
        with pytest.raises(GridTooLargeError):
            solve(problem)

    def test_missing_rate(self):
        with pytest.raises(ConfigError):
            OptimizationProblem(
                mode="direct",
                scenario=named_scenario("D-I"),
                service=EXP1,
                bounds={"t_min": VariableBounds(1, 10)},
                t_qos=50.0,
            )

    def test_unknown_variable(self):
        with pytest.raises(ConfigError):
            OptimizationProblem(
                mode="direct",
                scenario=named_scenario("D-I"),
                service=EXP1,
                bounds={"t_t": VariableBounds(0, 10)},
                t_qos=50.0,
                lam=0.1,
            )

    def test_unknown_program(self):
        with pytest.raises(ConfigError):
            direct_program("P9", named_scenario("D-I"), EXP1, 0.1, 50.0)

    def test_wrong_solver(self, p1):
        problem, _ = p1
        with pytest.raises(ConfigError):
            solve_worstcase(problem)


class TestUncertainRate:
    """Expectation and worst-case programs"""

    def test_one_rate_is_direct(self):
        sc = named_scenario("E-I")
        bounds = {"t_min": VariableBounds(1, 100)}
        direct = solve(
            OptimizationProblem(
                mode=Mode.DIRECT,
                scenario=sc,
                service=EXP1,
                bounds=bounds,
                t_qos=100.0,
                lam=0.2,
            )
        )
        worst = solve(
            OptimizationProblem(
                mode=Mode.WORST_CASE,
                scenario=sc,
                service=EXP1,
                bounds=bounds,
                t_qos=100.0,
                distribution=LambdaDistribution.single(0.2),
            )
        )
        assert worst.theta == direct.theta
        assert worst.objective == pytest.approx(direct.objective, rel=1e-12)
        expected = solve_expectation(
            OptimizationProblem(
                mode=Mode.EXPECTATION,
                scenario=sc,
                service=EXP1,
                bounds=bounds,
                t_qos=100.0,
                distribution=LambdaDistribution.single(0.2),
            )
        )
        assert expected.theta == direct.theta
        assert expected.objective == pytest.approx(direct.objective, rel=1e-12)

    def test_columns(self, uncertain_outcomes):
        outcomes = uncertain_outcomes("D-I")
        assert list(outcomes) == COLUMNS
        assert all(o.feasible for o in outcomes.values())

    @pytest.mark.parametrize("name", SCENARIO_NAMES)
    def test_reported_optima(self, uncertain_outcomes, name):
        outcomes = uncertain_outcomes(name)
        for column, reported in zip(COLUMNS, REPORTED_T_MIN[name]):
            outcome = outcomes[column]
            found = outcome.theta.t_min
            _, gap = KNOWN_GAPS.get((name, column), (None, None))
            if gap is None and abs(found - reported) <= 2:
                continue
            # flat optimum: the reference point must score within 1%,
            # or within the measured gap where the exact model moves the optimum
            at_reported = objective_at(name, column, reported)
            assert at_reported == pytest.approx(
                outcome.objective, rel=gap or 0.01
            ), column

    def test_known_gaps_are_real(self, uncertain_outcomes):
        outcomes = uncertain_outcomes("E-I")
        for (_, column), (found, gap) in KNOWN_GAPS.items():
            assert outcomes[column].theta.t_min == found, column
            reported = REPORTED_T_MIN["E-I"][COLUMNS.index(column)]
            at_reported = objective_at("E-I", column, reported)
            gap_found = abs(at_reported / outcomes[column].objective - 1)
            assert 0.01 < gap_found < gap, column

    @pytest.mark.parametrize("name", SCENARIO_NAMES)
    def test_soft_allows_longer_windows(self, uncertain_outcomes, name):
        outcomes = uncertain_outcomes(name)
        for mode in ("expectation", "worstcase"):
            hard = outcomes[f"{mode}-hard"].theta.t_min
            soft = outcomes[f"{mode}-soft"].theta.t_min
            assert soft >= hard

    def test_worstcase_never_beats_expectation(self, uncertain_outcomes):
        outcomes = uncertain_outcomes("D-I")
        for constraint in ("hard", "soft"):
            worst = outcomes[f"worstcase-{constraint}"].objective
            expected = outcomes[f"expectation-{constraint}"].objective
            assert worst <= expected + 1e-12



class TestOptimalCurves:
    """Direct-program optima over a list of arrival rates"""

    @pytest.fixture(scope="class")
    def curves(self):
        return optimal_curves(
            named_scenario("D-I"), EXP1, [0.1, 0.3], 50.0, programs=["P1", "p3"]
        )

    def test_layout(self, curves):
        assert list(curves.columns) == CURVE_COLUMNS
        assert list(curves["program"]) == ["P1", "P3", "P1", "P3"]
        assert list(curves["lambda"]) == [0.1, 0.1, 0.3, 0.3]

    def test_rows_match_direct_solves(self, curves):
        sc = named_scenario("D-I")
        for _, row in curves.iterrows():
            lam = row["lambda"]
            outcome = solve(direct_program(row["program"], sc, EXP1, lam, 50.0))
            theta = outcome.theta
            found = (row["t_min"], row["a"], row["l"])
            assert found == (theta.t_min, theta.a, theta.l)
            assert row["gain"] == pytest.approx(outcome.objective, rel=1e-12)
            configured = SleepWindowScenario(sc.window_law, theta)
            assert row["e_zeta"] == pytest.approx(series_sums(lam, configured).e_zeta)

    def test_default_gain(self, curves):
        sc = named_scenario("D-I")
        for lam, group in curves.groupby("lambda"):
            expected = energy_report(lam, sc, EXP1, EnergyProfile()).gain
            assert group["gain_default"].tolist() == pytest.approx([expected] * 2)
            assert (group["gain"] >= group["gain_default"] - 1e-12).all()

    def test_infeasible_rows_keep_nan(self):
        curves = optimal_curves(
            named_scenario("D-I"), EXP1, [0.3], 1.2, programs=["P1"]
        )
        row = curves.iloc[0]
        assert math.isnan(row["t_min"]) and math.isnan(row["gain"])
        assert not math.isnan(row["gain_default"])

    def test_no_rates(self):
        with pytest.raises(ConfigError):
            optimal_curves(named_scenario("D-I"), EXP1, [], 50.0)


@pytest.mark.integration
class TestJointSearch:
    """Single-variable search against the joint (t_min, a, l) search"""

    @pytest.mark.parametrize("lam", [0.05, 0.1, 0.2, 0.5])
    def test_t_min_alone_is_nearly_optimal(self, lam):
        sc = named_scenario("D-I")
        p1 = solve(direct_program("P1", sc, EXP1, lam, 50.0))
        p4 = solve(
            direct_program(
                "P4",
                sc,
                EXP1,
                lam,
                50.0,
                bounds={
                    "t_min": VariableBounds(1, 150, 1),
                    "a": VariableBounds(1, 4, 0.25),
                    "l": VariableBounds(0, 10, 1),
                },
            ),
            n_jobs=2,
        )
        assert p4.objective == pytest.approx(p1.objective, abs=1e-3)

    def test_fewer_vacations_under_heavier_load(self):
        sc = named_scenario("D-I")
        counts = []
        for lam in (0.02, 0.5):
            theta = solve(direct_program("P1", sc, EXP1, lam, 50.0)).theta
            configured = SleepWindowScenario(sc.window_law, theta)
            counts.append(series_sums(lam, configured).e_zeta)
        assert counts[1] < counts[0]
