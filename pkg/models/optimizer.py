"""
Constrained protocol-parameter optimization.

Every program is solved by exhaustive enumeration of a declared grid over a
subset of (t_min, a, l). A grid point is feasible when its mean sojourn time
meets the QoS bound; the objective is the energy gain (maximized) or the
power-save consumption rate (minimized).

  Direct       single arrival rate
  Expectation  rate drawn from a discrete distribution; objective averaged
  WorstCase    objective taken at the least favourable rate of the support

Hard constraints must hold at every rate of the support, soft constraints only
in expectation. Ties are broken by the smallest (t_min, a, l).
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.model_selection import ParameterGrid
from sklearn.utils.parallel import Parallel, delayed

from models.energy import EnergyProfile, energy_report
from models.errors import ConfigError, GridTooLargeError, InstabilityError
from models.service_time import ServiceDistribution
from models.vacation_policy import ProtocolParams, SleepWindowScenario
from models.vacation_queue import analyze, offered_load, series_sums, sojourn_time

MAX_GRID_POINTS = 10**6
DECISION_VARIABLES = ("t_min", "a", "l")

# default light-traffic rate mix
LIGHT_TRAFFIC_MIX = (
    (0.02, 0.3125),
    (0.05, 0.3125),
    (0.1, 0.1875),
    (0.2, 0.125),
    (0.5, 0.0625),
)

PROGRAMS = {
    "P1": ("t_min",),
    "P2": ("a",),
    "P3": ("l",),
    "P4": ("t_min", "a", "l"),
}

CURVE_COLUMNS = [
    "lambda", "program", "t_min", "a", "l", "gain", "gain_default", "e_zeta",
]  # fmt: skip


class Mode(str, Enum):
    DIRECT = "direct"
    EXPECTATION = "expectation"
    WORST_CASE = "worstcase"


class Objective(str, Enum):
    MAXIMIZE_GAIN = "gain"
    MINIMIZE_ENERGY = "energy"


class Constraint(str, Enum):
    HARD = "hard"
    SOFT = "soft"


@dataclass(frozen=True)
class LambdaDistribution:
    support: Tuple[Tuple[float, float], ...]

    def __post_init__(self) -> None:
        support = tuple((float(lam), float(p)) for lam, p in self.support)
        object.__setattr__(self, "support", support)
        if not support:
            raise ConfigError("Rate distribution needs at least one support point")
        for lam, p in support:
            if not lam > 0:
                raise ConfigError(f"Support rates must be positive, got {lam}")
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"Probabilities must lie in [0, 1], got {p}")
        total = sum(p for _, p in support)
        if abs(total - 1.0) > 1e-12:
            raise ConfigError(f"Probabilities must sum to 1, got {total}")

    @classmethod
    def light_traffic_mix(cls) -> "LambdaDistribution":
        return cls(LIGHT_TRAFFIC_MIX)

    @classmethod
    def single(cls, lam: float) -> "LambdaDistribution":
        return cls(((lam, 1.0),))

    @property
    def rates(self) -> List[float]:
        return [lam for lam, _ in self.support]

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([p for _, p in self.support])

    def check_stable(self, d: ServiceDistribution) -> None:
        for lam in self.rates:
            offered_load(lam, d)


@dataclass(frozen=True)
class VariableBounds:
    lo: float
    hi: float
    step: float = 1.0

    def __post_init__(self) -> None:
        if not self.step > 0:
            raise ConfigError(f"Grid step must be positive, got {self.step}")
        if self.hi < self.lo:
            raise ConfigError(f"Empty grid range [{self.lo}, {self.hi}]")

    def __len__(self) -> int:
        return int(math.floor((self.hi - self.lo) / self.step + 1e-9)) + 1

    def values(self) -> List[float]:
        return [round(self.lo + k * self.step, 10) for k in range(len(self))]


DEFAULT_BOUNDS = {
    "t_min": VariableBounds(1, 200, 1),
    "a": VariableBounds(1, 10, 0.25),
    "l": VariableBounds(0, 10, 1),
}


@dataclass(frozen=True)
class OptimizationProblem:
    """One constrained program.

    ``scenario`` fixes the window law and every parameter that is not a
    decision variable. ``lam`` is used in Direct mode, ``distribution`` in the
    other two.
    """

    mode: Mode
    scenario: SleepWindowScenario
    service: ServiceDistribution
    bounds: Mapping[str, VariableBounds]
    t_qos: float
    objective: Objective = Objective.MAXIMIZE_GAIN
    constraint: Constraint = Constraint.HARD
    profile: EnergyProfile = field(default_factory=EnergyProfile)
    lam: Optional[float] = None
    distribution: Optional[LambdaDistribution] = None

    def __post_init__(self) -> None:
        for name, enum in (
            ("mode", Mode),
            ("objective", Objective),
            ("constraint", Constraint),
        ):
            value = getattr(self, name)
            if not isinstance(value, enum):
                try:
                    object.__setattr__(self, name, enum(str(value).lower()))
                except ValueError as e:
                    raise ConfigError(f"Invalid optimize.{name}: {value!r}") from e
        if not self.bounds:
            raise ConfigError("At least one decision variable is required")
        unknown = set(self.bounds) - set(DECISION_VARIABLES)
        if unknown:
            raise ConfigError(f"Unknown decision variables: {sorted(unknown)}")
        if "t_min" in self.bounds and not self.bounds["t_min"].lo > 0:
            raise ConfigError("t_min bounds must be positive")
        if "a" in self.bounds and self.bounds["a"].lo < 1:
            raise ConfigError("a bounds must be >= 1")
        if "l" in self.bounds:
            b = self.bounds["l"]
            if b.lo < 0 or any(float(v) != int(v) for v in (b.lo, b.hi, b.step)):
                raise ConfigError("l bounds must be nonnegative integers")
        if not self.t_qos > 0:
            raise ConfigError(f"t_qos must be positive, got {self.t_qos}")
        if self.mode == Mode.DIRECT:
            if self.lam is None:
                raise ConfigError("Direct optimization needs traffic.lambda")
            offered_load(self.lam, self.service)
        else:
            if self.distribution is None:
                raise ConfigError(
                    f"{self.mode.value} optimization needs traffic.distribution"
                )
            self.distribution.check_stable(self.service)

    @property
    def decision_vars(self) -> Tuple[str, ...]:
        return tuple(v for v in DECISION_VARIABLES if v in self.bounds)

    @property
    def rate_distribution(self) -> LambdaDistribution:
        if self.mode == Mode.DIRECT:
            assert self.lam is not None
            return LambdaDistribution.single(self.lam)
        assert self.distribution is not None
        return self.distribution

    def grid_size(self) -> int:
        return int(np.prod([len(self.bounds[v]) for v in self.decision_vars]))


@dataclass
class OptimizationOutcome:
    feasible: bool
    theta: Optional[ProtocolParams]
    objective: Optional[float]
    diagnostics: Dict[str, Any]
    grid: pd.DataFrame

    def summary(self) -> Dict[str, Any]:
        row: Dict[str, Any] = {"feasible": self.feasible, "objective": self.objective}
        if self.theta is not None:
            row.update({k: getattr(self.theta, k) for k in DECISION_VARIABLES})
        row.update(
            {
                k: v
                for k, v in self.diagnostics.items()
                if isinstance(v, (int, float, str))
            }
        )
        return row


def _with_theta(
    sc: SleepWindowScenario, point: Mapping[str, float]
) -> SleepWindowScenario:
    changes = {k: (int(v) if k == "l" else float(v)) for k, v in point.items()}
    return sc.with_params(**changes)


def evaluate_point(
    sc: SleepWindowScenario,
    d: ServiceDistribution,
    prof: EnergyProfile,
    rates: Sequence[float],
) -> Dict[str, np.ndarray]:
    """Sojourn time, gain and power-save rate of one parameter set per rate"""
    e_t, g, e_sleep = [], [], []
    for lam in rates:
        ss = series_sums(lam, sc)
        e_t.append(analyze(lam, sc, d, ss).e_t)
        em = energy_report(lam, sc, d, prof, ss)
        g.append(em.gain)
        e_sleep.append(em.e_sleep)
    return {"e_t": np.array(e_t), "gain": np.array(g), "e_sleep": np.array(e_sleep)}


def _score(
    problem: OptimizationProblem, values: Dict[str, np.ndarray]
) -> Tuple[float, float]:
    """(objective, constrained delay) for one grid point"""
    dist = problem.rate_distribution
    probs = dist.probabilities
    maximize = problem.objective == Objective.MAXIMIZE_GAIN
    metric = values["gain" if maximize else "e_sleep"]
    if problem.mode == Mode.WORST_CASE:
        if maximize:
            objective = float(metric.min())
        else:
            objective = float(metric.max())
    else:
        objective = float(np.dot(probs, metric))
    if problem.constraint == Constraint.HARD:
        delay = float(values["e_t"].max())
    else:
        delay = float(np.dot(probs, values["e_t"]))
    return objective, delay


def _evaluate_chunk(
    problem: OptimizationProblem, points: List[Dict[str, float]]
) -> List[Dict[str, Any]]:
    rates = problem.rate_distribution.rates
    rows = []
    for point in points:
        sc = _with_theta(problem.scenario, point)
        values = evaluate_point(sc, problem.service, problem.profile, rates)
        objective, delay = _score(problem, values)
        row: Dict[str, Any] = sc.params.to_dict()
        row.update(
            {
                "objective": objective,
                "delay": delay,
                "feasible": delay <= problem.t_qos,
            }
        )
        rows.append(row)
    return rows


def evaluate_grid(
    problem: OptimizationProblem, n_jobs: int = 1, verbose: bool = False
) -> pd.DataFrame:
    """Objective and constrained delay at every grid point"""
    size = problem.grid_size()
    if size > MAX_GRID_POINTS:
        raise GridTooLargeError(
            f"Grid has {size} points (limit {MAX_GRID_POINTS})", details={"size": size}
        )
    grid = ParameterGrid({v: problem.bounds[v].values() for v in problem.decision_vars})
    points = list(grid)
    if verbose:
        print(f"   🔢 Evaluating {len(points)} grid points ({problem.mode.value})...")

    if n_jobs == 1:
        rows = _evaluate_chunk(problem, points)
    else:
        n_chunks = max(1, min(len(points), 4 * abs(n_jobs)))
        split = np.array_split(np.array(points, dtype=object), n_chunks)
        chunks = [list(c) for c in split]
        parts = Parallel(n_jobs=n_jobs)(
            delayed(_evaluate_chunk)(problem, chunk) for chunk in chunks if len(chunk)
        )
        rows = [row for part in parts for row in part]

    frame = pd.DataFrame(rows)
    frame = frame.sort_values(["t_min", "a", "l"], kind="mergesort")
    return frame.reset_index(drop=True)


def _select(problem: OptimizationProblem, frame: pd.DataFrame) -> OptimizationOutcome:
    feasible = frame[frame["feasible"]]
    default_values = evaluate_point(
        problem.scenario,
        problem.service,
        problem.profile,
        problem.rate_distribution.rates,
    )
    default_objective, _ = _score(problem, default_values)
    diagnostics: Dict[str, Any] = {
        "mode": problem.mode.value,
        "objective_kind": problem.objective.value,
        "constraint": problem.constraint.value,
        "n_points": len(frame),
        "n_feasible": len(feasible),
        "objective_at_default": default_objective,
    }
    if feasible.empty:
        return OptimizationOutcome(False, None, None, diagnostics, frame)

    ascending = problem.objective == Objective.MINIMIZE_ENERGY
    ordered = feasible.sort_values(
        ["objective", "t_min", "a", "l"],
        ascending=[ascending, True, True, True],
        kind="mergesort",
    )
    best = ordered.iloc[0]
    point = {v: best[v] for v in problem.decision_vars}
    theta = _with_theta(problem.scenario, point).params
    values = evaluate_point(
        _with_theta(problem.scenario, point),
        problem.service,
        problem.profile,
        problem.rate_distribution.rates,
    )
    diagnostics["delay"] = float(best["delay"])
    diagnostics["per_rate"] = {
        lam: {"e_t": float(t), "gain": float(g)}
        for lam, t, g in zip(
            problem.rate_distribution.rates, values["e_t"], values["gain"]
        )
    }
    objective = float(best["objective"])
    return OptimizationOutcome(True, theta, objective, diagnostics, frame)


def _solve(
    problem: OptimizationProblem, mode: Mode, n_jobs: int, verbose: bool
) -> OptimizationOutcome:
    if problem.mode != mode:
        raise ConfigError(f"Expected a {mode.value} problem, got {problem.mode.value}")
    frame = evaluate_grid(problem, n_jobs=n_jobs, verbose=verbose)
    outcome = _select(problem, frame)
    if verbose:
        if outcome.feasible:
            assert outcome.theta is not None
            print(
                f"   ✅ t_min={outcome.theta.t_min:g}, a={outcome.theta.a:g}, "
                f"l={outcome.theta.l}, objective={outcome.objective:.6f}"
            )
        else:
            print("   ⚠️ No feasible grid point")
    return outcome


def solve_direct(
    problem: OptimizationProblem, n_jobs: int = 1, verbose: bool = False
) -> OptimizationOutcome:
    return _solve(problem, Mode.DIRECT, n_jobs, verbose)


def solve_expectation(
    problem: OptimizationProblem, n_jobs: int = 1, verbose: bool = False
) -> OptimizationOutcome:
    return _solve(problem, Mode.EXPECTATION, n_jobs, verbose)


def solve_worstcase(
    problem: OptimizationProblem, n_jobs: int = 1, verbose: bool = False
) -> OptimizationOutcome:
    return _solve(problem, Mode.WORST_CASE, n_jobs, verbose)


def solve(
    problem: OptimizationProblem, n_jobs: int = 1, verbose: bool = False
) -> OptimizationOutcome:
    return _solve(problem, problem.mode, n_jobs, verbose)


def feasible(
    theta: ProtocolParams,
    lam: float,
    sc: SleepWindowScenario,
    d: ServiceDistribution,
    t_qos: float,
) -> bool:
    """Mean sojourn time under ``theta`` within the QoS bound"""
    try:
        configured = SleepWindowScenario(sc.window_law, theta, sc.name)
        return sojourn_time(lam, configured, d) <= t_qos
    except InstabilityError:
        return False


def direct_program(
    name: str,
    scenario: SleepWindowScenario,
    service: ServiceDistribution,
    lam: float,
    t_qos: float,
    bounds: Optional[Mapping[str, VariableBounds]] = None,
    **kwargs: Any,
) -> OptimizationProblem:
    """P1 (t_min), P2 (a), P3 (l) or P4 (all three) at a single rate"""
    key = name.upper()
    if key not in PROGRAMS:
        raise ConfigError(f"Unknown program {name!r}; expected P1, P2, P3 or P4")
    chosen = {v: (bounds or {}).get(v, DEFAULT_BOUNDS[v]) for v in PROGRAMS[key]}
    return OptimizationProblem(
        mode=Mode.DIRECT,
        scenario=scenario,
        service=service,
        bounds=chosen,
        t_qos=t_qos,
        lam=lam,
        **kwargs,
    )


def optimal_t_min_under_uncertainty(
    scenario: SleepWindowScenario,
    service: ServiceDistribution,
    t_qos: float,
    distribution: Optional[LambdaDistribution] = None,
    t_min_bounds: VariableBounds = DEFAULT_BOUNDS["t_min"],
    n_jobs: int = 1,
    **kwargs: Any,
) -> Dict[str, OptimizationOutcome]:
    """Optimal t_min under expectation / worst-case with hard / soft constraints"""
    dist = distribution or LambdaDistribution.light_traffic_mix()
    outcomes = {}
    for mode in (Mode.EXPECTATION, Mode.WORST_CASE):
        for constraint in (Constraint.HARD, Constraint.SOFT):
            problem = OptimizationProblem(
                mode=mode,
                scenario=scenario,
                service=service,
                bounds={"t_min": t_min_bounds},
                t_qos=t_qos,
                constraint=constraint,
                distribution=dist,
                **kwargs,
            )
            outcomes[f"{mode.value}-{constraint.value}"] = solve(problem, n_jobs=n_jobs)
    return outcomes


def optimal_curves(
    scenario: SleepWindowScenario,
    service: ServiceDistribution,
    rates: Sequence[float],
    t_qos: float,
    programs: Sequence[str] = tuple(PROGRAMS),
    bounds: Optional[Mapping[str, VariableBounds]] = None,
    n_jobs: int = 1,
    verbose: bool = False,
    **kwargs: Any,
) -> pd.DataFrame:
    """Optimum of each direct program over a list of arrival rates.

    One row per (rate, program): the optimal parameters, the gain there, the
    gain of the unoptimized scenario and E[zeta] at the optimum. Rows with no
    feasible grid point keep NaN in the parameter and optimum columns.
    """
    if not rates:
        raise ConfigError("At least one arrival rate is required")
    prof = kwargs.get("profile") or EnergyProfile()
    rows: List[Dict[str, Any]] = []
    for lam in rates:
        gain_default = energy_report(lam, scenario, service, prof).gain
        for name in programs:
            problem = direct_program(
                name, scenario, service, lam, t_qos, bounds=bounds, **kwargs
            )
            if verbose:
                print(f"   🔍 {name.upper()} at lambda={lam:g}...")
            outcome = solve(problem, n_jobs=n_jobs)
            row: Dict[str, Any] = dict.fromkeys(CURVE_COLUMNS, math.nan)
            row.update(
                {"lambda": lam, "program": name.upper(), "gain_default": gain_default}
            )
            if outcome.feasible:
                assert outcome.theta is not None
                configured = SleepWindowScenario(
                    scenario.window_law, outcome.theta, scenario.name
                )
                row.update(
                    {
                        "t_min": outcome.theta.t_min,
                        "a": outcome.theta.a,
                        "l": outcome.theta.l,
                        "gain": outcome.diagnostics["per_rate"][lam]["gain"],
                        "e_zeta": series_sums(lam, configured).e_zeta,
                    }
                )
            rows.append(row)
    return pd.DataFrame(rows, columns=CURVE_COLUMNS)
