"""
Run configuration: JSON files merged over built-in defaults, dotted
``key=value`` overrides, and builders for the domain objects.
"""

import copy
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import (
    AbstractSet,
    Any,
    Dict,
    Iterable,
    List,
    Mapping,
    Optional,
    Tuple,
    Type,
    TypeVar,
    Union,
)

from models.energy import EnergyProfile
from models.errors import ConfigError, GridTooLargeError
from models.optimizer import (
    DEFAULT_BOUNDS,
    LIGHT_TRAFFIC_MIX,
    MAX_GRID_POINTS,
    PROGRAMS,
    Constraint,
    LambdaDistribution,
    Mode,
    Objective,
    OptimizationProblem,
    VariableBounds,
)
from models.service_time import ServiceDistribution
from models.vacation_policy import (
    SCENARIOS,
    ProtocolParams,
    SleepWindowScenario,
    WindowLaw,
    named_scenario,
)
from utils.simulator import SimConfig

# Network defaults: frame-based timing, exponential unit-mean service
DEFAULTS: Dict[str, Any] = {
    "traffic": {
        "lambda": 0.1,
        "distribution": [list(row) for row in LIGHT_TRAFFIC_MIX],
    },
    "scenario": {
        "scenario": "D-I",
        "t_min": 2.0,
        "a": 2.0,
        "l": 9,
        "t_t": 0.0,
        "t_w": 1.0,
        "t_l": 1.0,
    },
    "service": {"kind": "exponential", "mean": 1.0},
    "energy": {"c_high": 1.0, "c_listen": 0.2, "c_low": 0.2, "c_sleep": 0.0},
    "analyze": {"w": None},
    "simulation": {
        "n_cycles": 100000,
        "seed": 0,
        "batch_count": 30,
        "replications": 1,
        "tail_w": None,
        "pgf_z": None,
        "z_threshold": 3.0,
        "n_jobs": 1,
    },
    "sweep": {
        "variables": {"lambda": {"lo": 0.1, "hi": 0.9, "step": 0.1}},
    },
    "optimize": {
        "mode": "expectation",
        "objective": "gain",
        "constraint": "hard",
        "t_qos": 50.0,
        "program": None,
        "lambda_values": None,
        "bounds": {"t_min": {"lo": 1, "hi": 200, "step": 1}},
        "n_jobs": 1,
    },
}

E = TypeVar("E", bound=Enum)

INFINITY_SPELLINGS = ("inf", "+inf", "infinity")


def parse_float(value: Any, name: str) -> float:
    """Float conversion that accepts the "inf" spelling"""
    if isinstance(value, str) and value.strip().lower() in INFINITY_SPELLINGS:
        return math.inf
    try:
        return float(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid number for {name}: {value!r}") from e


# blocks that a user value replaces wholesale instead of merging into
REPLACED = {("optimize", "bounds"), ("sweep", "variables")}


def deep_merge(
    base: Dict[str, Any],
    update: Mapping[str, Any],
    replaced: AbstractSet[Tuple[str, ...]] = REPLACED,
    path: Tuple[str, ...] = (),
) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in update.items():
        nested = isinstance(value, Mapping) and isinstance(merged.get(key), dict)
        if nested and path + (key,) not in replaced:
            merged[key] = deep_merge(merged[key], value, replaced, path + (key,))
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def parse_override(text: str) -> Dict[str, Any]:
    """'a.b.c=value' -> {"a": {"b": {"c": value}}}; value parsed as JSON"""
    if "=" not in text:
        raise ConfigError(f"Override must look like key=value, got {text!r}")
    key, raw = text.split("=", 1)
    parts = [p for p in key.strip().split(".") if p]
    if not parts:
        raise ConfigError(f"Override has an empty key: {text!r}")
    try:
        value: Any = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    nested: Dict[str, Any] = {parts[-1]: value}
    for part in reversed(parts[:-1]):
        nested = {part: nested}
    return nested


@dataclass
class RunConfig:
    traffic: Dict[str, Any] = field(default_factory=dict)
    scenario: Dict[str, Any] = field(default_factory=dict)
    service: Dict[str, Any] = field(default_factory=dict)
    energy: Dict[str, Any] = field(default_factory=dict)
    analyze: Dict[str, Any] = field(default_factory=dict)
    simulation: Dict[str, Any] = field(default_factory=dict)
    sweep: Dict[str, Any] = field(default_factory=dict)
    optimize: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunConfig":
        unknown = set(data) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"Unknown config blocks: {sorted(unknown)}")
        merged = deep_merge(DEFAULTS, data)
        return cls(**merged)

    def to_dict(self) -> Dict[str, Any]:
        return {name: copy.deepcopy(getattr(self, name)) for name in DEFAULTS}

    def with_overrides(self, overrides: Iterable[str]) -> "RunConfig":
        data = self.to_dict()
        for text in overrides:
            data = deep_merge(data, parse_override(text), replaced=frozenset())
        return RunConfig.from_dict(data)

    def require(self, block: str, key: str) -> Any:
        section = getattr(self, block)
        if not isinstance(section, dict) or section.get(key) is None:
            raise ConfigError(f"Missing config field: {block}.{key}")
        return section[key]

    # Builders

    def arrival_rate(self) -> float:
        return parse_float(self.require("traffic", "lambda"), "traffic.lambda")

    def lambda_distribution(self) -> LambdaDistribution:
        rows = self.require("traffic", "distribution")
        try:
            support = tuple(
                (
                    parse_float(r[0], "traffic.distribution"),
                    parse_float(r[1], "traffic.distribution"),
                )
                for r in rows
            )
        except (TypeError, IndexError, KeyError) as e:
            raise ConfigError(
                "traffic.distribution must be a list of [lambda, p] pairs"
            ) from e
        return LambdaDistribution(support)

    def scenario_params(self) -> SleepWindowScenario:
        values = {
            key: parse_float(self.require("scenario", key), f"scenario.{key}")
            for key in ("t_min", "a", "t_t", "t_w", "t_l")
        }
        l_value = parse_float(self.require("scenario", "l"), "scenario.l")
        if l_value != int(l_value):
            raise ConfigError(f"scenario.l must be an integer, got {l_value}")
        name = self.scenario.get("scenario")
        if name is not None:
            if str(name).upper() not in SCENARIOS:
                raise ConfigError(
                    f"Unknown scenario.scenario {name!r}; "
                    f"expected one of {', '.join(SCENARIOS)}"
                )
            return named_scenario(str(name), l=int(l_value), **values)
        law = self.require("scenario", "window_law")
        try:
            window_law = WindowLaw(str(law).lower())
        except ValueError as e:
            raise ConfigError(f"Invalid scenario.window_law: {law!r}") from e
        params = ProtocolParams(l=int(l_value), **values)
        return SleepWindowScenario(window_law, params)

    def service_distribution(self) -> ServiceDistribution:
        self.require("service", "kind")
        return ServiceDistribution.from_config(self.service)

    def energy_profile(self) -> EnergyProfile:
        levels = {
            key: parse_float(self.require("energy", key), f"energy.{key}")
            for key in ("c_high", "c_listen", "c_low", "c_sleep")
        }
        return EnergyProfile(**levels)

    def sim_config(self, seed: Optional[int] = None) -> SimConfig:
        sim = self.simulation
        tail_w = sim.get("tail_w")
        pgf_z = sim.get("pgf_z")
        return SimConfig(
            lam=self.arrival_rate(),
            scenario=self.scenario_params(),
            service=self.service_distribution(),
            profile=self.energy_profile(),
            n_cycles=int(self.require("simulation", "n_cycles")),
            seed=int(seed if seed is not None else self.require("simulation", "seed")),
            batch_count=int(self.require("simulation", "batch_count")),
            tail_w=None if tail_w is None else parse_float(tail_w, "simulation.tail_w"),
            pgf_z=None if pgf_z is None else parse_float(pgf_z, "simulation.pgf_z"),
        )

    def _choice(self, enum: Type[E], key: str) -> E:
        value = self.require("optimize", key)
        try:
            return enum(str(value).lower())
        except ValueError as e:
            raise ConfigError(f"Invalid optimize.{key}: {value!r}") from e

    def bounds(
        self, raw: Optional[Mapping[str, Any]] = None
    ) -> Dict[str, VariableBounds]:
        block = raw if raw is not None else self.require("optimize", "bounds")
        result = {}
        for name, entry in block.items():
            try:
                result[name] = VariableBounds(
                    float(entry["lo"]), float(entry["hi"]), float(entry.get("step", 1))
                )
            except (KeyError, TypeError) as e:
                raise ConfigError(
                    f"optimize.bounds.{name} needs lo, hi and step"
                ) from e
        return result

    def problem(self) -> OptimizationProblem:
        opt = self.optimize
        mode = str(self.require("optimize", "mode")).lower()
        program = opt.get("program")
        if program is not None:
            key = str(program).upper()
            if key not in PROGRAMS:
                raise ConfigError(f"Invalid optimize.program: {program!r}")
            given = self.bounds(opt.get("bounds") or {})
            bounds = {v: given.get(v, DEFAULT_BOUNDS[v]) for v in PROGRAMS[key]}
            mode = Mode.DIRECT.value
        else:
            bounds = self.bounds()
        try:
            mode_value = Mode(mode)
        except ValueError as e:
            raise ConfigError(f"Invalid optimize.mode: {mode!r}") from e
        direct = mode_value == Mode.DIRECT
        return OptimizationProblem(
            mode=mode_value,
            scenario=self.scenario_params(),
            service=self.service_distribution(),
            bounds=bounds,
            t_qos=parse_float(self.require("optimize", "t_qos"), "optimize.t_qos"),
            objective=self._choice(Objective, "objective"),
            constraint=self._choice(Constraint, "constraint"),
            profile=self.energy_profile(),
            lam=self.arrival_rate() if direct else None,
            distribution=None if direct else self.lambda_distribution(),
        )

    def curve_request(self) -> Optional[Dict[str, Any]]:
        """Arguments of ``optimal_curves`` when optimize.lambda_values is set"""
        opt = self.optimize
        values = opt.get("lambda_values")
        if values is None:
            return None
        if not isinstance(values, list) or not values:
            raise ConfigError("optimize.lambda_values must be a non-empty list")
        program = opt.get("program")
        if program is None:
            programs = list(PROGRAMS)
        elif str(program).upper() in PROGRAMS:
            programs = [str(program).upper()]
        else:
            raise ConfigError(f"Invalid optimize.program: {program!r}")
        return {
            "scenario": self.scenario_params(),
            "service": self.service_distribution(),
            "rates": [parse_float(v, "optimize.lambda_values") for v in values],
            "t_qos": parse_float(self.require("optimize", "t_qos"), "optimize.t_qos"),
            "programs": programs,
            "bounds": self.bounds(opt.get("bounds") or {}),
            "objective": self._choice(Objective, "objective"),
            "profile": self.energy_profile(),
        }

    def sweep_axes(self) -> Dict[str, List[float]]:
        variables = self.require("sweep", "variables")
        if not isinstance(variables, Mapping) or not 1 <= len(variables) <= 2:
            raise ConfigError("sweep.variables must name one or two variables")
        axes: Dict[str, Union[VariableBounds, List[float]]] = {}
        for name, entry in variables.items():
            if name not in ("lambda", "t_min", "a", "l", "t_t"):
                raise ConfigError(f"Cannot sweep {name!r}")
            if isinstance(entry, Mapping) and "values" in entry:
                axes[name] = [parse_float(v, f"sweep.{name}") for v in entry["values"]]
            elif isinstance(entry, Mapping):
                try:
                    axes[name] = VariableBounds(
                        float(entry["lo"]),
                        float(entry["hi"]),
                        float(entry.get("step", 1)),
                    )
                except KeyError as e:
                    raise ConfigError(
                        f"sweep.variables.{name} needs lo/hi/step or values"
                    ) from e
            else:
                axes[name] = [parse_float(v, f"sweep.{name}") for v in entry]

        # size check before any range is expanded into a list
        size = math.prod(len(axis) for axis in axes.values())
        if size > MAX_GRID_POINTS:
            raise GridTooLargeError(
                f"Sweep grid has {size} points (limit {MAX_GRID_POINTS})",
                details={"size": size},
            )
        return {
            name: axis.values() if isinstance(axis, VariableBounds) else axis
            for name, axis in axes.items()
        }


def load_config(
    path: Optional[Union[str, Path]] = None, overrides: Iterable[str] = ()
) -> RunConfig:
    """Defaults, then the JSON file at ``path`` (if any), then overrides"""
    data: Dict[str, Any] = {}
    if path is not None:
        file = Path(path)
        if not file.exists():
            raise ConfigError(f"Config file not found: {file}")
        try:
            with open(file) as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Config file {file} is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"Config file {file} must contain a JSON object")
    return RunConfig.from_dict(data).with_overrides(overrides)
