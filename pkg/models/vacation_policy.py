"""
Protocol parameters and sleep-window scenarios.

A vacation sequence is V_1 = S_1 and V_i = T_l + S_i for i >= 2, where the
sleep window S_i has mean a^min(i-1, l) * T_min and is either deterministic
(D scenarios) or exponential (E scenarios). Indices are 1-based.
"""

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Dict, Optional

import numpy as np

from models.errors import ConfigError, DomainError
from models.service_time import check_order


class WindowLaw(str, Enum):
    DETERMINISTIC = "deterministic"
    EXPONENTIAL = "exponential"


# name -> (window law, type II)
SCENARIOS = {
    "D-I": (WindowLaw.DETERMINISTIC, False),
    "D-II": (WindowLaw.DETERMINISTIC, True),
    "E-I": (WindowLaw.EXPONENTIAL, False),
    "E-II": (WindowLaw.EXPONENTIAL, True),
}


@dataclass(frozen=True)
class ProtocolParams:
    """Protocol tuple (T_min, a, l) plus the timing constants T_t, T_w, T_l.

    ``t_t`` may be ``math.inf``: vacations never trigger and the model is a
    plain M/G/1 queue.
    """

    t_min: float
    a: float = 1.0
    l: int = 0
    t_t: float = 0.0
    t_w: float = 1.0
    t_l: float = 1.0

    def __post_init__(self) -> None:
        if not self.t_min > 0:
            raise ConfigError(f"t_min must be positive, got {self.t_min}")
        if not self.a >= 1:
            raise ConfigError(f"a must be >= 1, got {self.a}")
        if int(self.l) != self.l or self.l < 0:
            raise ConfigError(f"l must be a nonnegative integer, got {self.l}")
        object.__setattr__(self, "l", int(self.l))
        for name in ("t_t", "t_w", "t_l"):
            value = getattr(self, name)
            if math.isnan(value) or value < 0:
                raise ConfigError(f"{name} must be >= 0, got {value}")
        if math.isinf(self.t_w) or math.isinf(self.t_l):
            raise ConfigError("t_w and t_l must be finite")

    @property
    def is_type_two(self) -> bool:
        return self.a == 1 or self.l == 0

    def with_values(self, **changes: Any) -> "ProtocolParams":
        return replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "t_min": self.t_min,
            "a": self.a,
            "l": self.l,
            "t_t": self.t_t,
            "t_w": self.t_w,
            "t_l": self.t_l,
        }


@dataclass(frozen=True)
class SleepWindowScenario:
    """Window law plus protocol parameters; optionally tagged with a D-I.. name"""

    window_law: WindowLaw
    params: ProtocolParams
    name: Optional[str] = None

    def __post_init__(self) -> None:
        if not isinstance(self.window_law, WindowLaw):
            object.__setattr__(self, "window_law", WindowLaw(self.window_law))

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        prefix = "D" if self.window_law == WindowLaw.DETERMINISTIC else "E"
        return f"{prefix}-{'II' if self.params.is_type_two else 'I'}"

    @property
    def saturation_index(self) -> int:
        """First index from which the law of V_i no longer depends on i"""
        return max(self.params.l + 1, 2)

    def with_params(self, **changes: Any) -> "SleepWindowScenario":
        return replace(self, params=self.params.with_values(**changes))

    def window_mean(self, i: int) -> float:
        """E[S_i] = a^min(i-1, l) * T_min"""
        if i < 1:
            raise DomainError(f"Vacation index must be >= 1, got {i}")
        p = self.params
        return p.t_min * p.a ** min(i - 1, p.l)

    def listen_prefix(self, i: int) -> float:
        return self.params.t_l if i >= 2 else 0.0

    def vacation_moment(self, i: int, k: int) -> float:
        """E[V_i^k] for k in {1, 2, 3}"""
        check_order(k)
        m = self.window_mean(i)
        shift = self.listen_prefix(i)
        if self.window_law == WindowLaw.DETERMINISTIC:
            return float((m + shift) ** k)
        # binomial expansion of E[(shift + S)^k] with E[S^j] = j! m^j
        return float(
            sum(
                math.comb(k, j)
                * shift ** (k - j)
                * math.factorial(j)
                * m**j
                for j in range(k + 1)
            )
        )

    def vacation_lst(self, i: int, s: float) -> float:
        """L_i(s) = E[exp(-s V_i)]"""
        if s < 0:
            raise DomainError(f"LST argument must be nonnegative, got {s}")
        m = self.window_mean(i)
        shift = self.listen_prefix(i)
        if self.window_law == WindowLaw.DETERMINISTIC:
            return math.exp(-s * (m + shift))
        return math.exp(-s * shift) / (1.0 + m * s)

    def vacation_lst_complement(self, i: int, s: float) -> float:
        """1 - L_i(s), computed without cancellation for small s"""
        if s < 0:
            raise DomainError(f"LST argument must be nonnegative, got {s}")
        m = self.window_mean(i)
        shift = self.listen_prefix(i)
        if self.window_law == WindowLaw.DETERMINISTIC:
            return -math.expm1(-s * (m + shift))
        return (m * s - math.expm1(-s * shift)) / (1.0 + m * s)

    def sample_vacation(self, i: int, rng: np.random.Generator) -> float:
        m = self.window_mean(i)
        shift = self.listen_prefix(i)
        if self.window_law == WindowLaw.DETERMINISTIC:
            return m + shift
        return shift + float(rng.exponential(m))

    def to_dict(self) -> Dict[str, Any]:
        block = {"scenario": self.label, "window_law": self.window_law.value}
        block.update(self.params.to_dict())
        return block


def vacation_moment(sc: SleepWindowScenario, i: int, k: int) -> float:
    return sc.vacation_moment(i, k)


def vacation_lst(sc: SleepWindowScenario, i: int, s: float) -> float:
    return sc.vacation_lst(i, s)


def sample_vacation(
    sc: SleepWindowScenario, i: int, rng: np.random.Generator
) -> float:
    return sc.sample_vacation(i, rng)


def named_scenario(
    name: str,
    t_min: float = 2.0,
    a: float = 2.0,
    l: int = 9,
    t_t: float = 0.0,
    t_w: float = 1.0,
    t_l: float = 1.0,
) -> SleepWindowScenario:
    """Build one of D-I, D-II, E-I, E-II; type II names pin a = 1 and l = 0"""
    key = name.upper()
    if key not in SCENARIOS:
        raise ConfigError(
            f"Unknown scenario {name!r}; expected one of {', '.join(SCENARIOS)}"
        )
    law, type_two = SCENARIOS[key]
    if type_two:
        a, l = 1.0, 0
    params = ProtocolParams(t_min=t_min, a=a, l=l, t_t=t_t, t_w=t_w, t_l=t_l)
    return SleepWindowScenario(law, params, name=key)
