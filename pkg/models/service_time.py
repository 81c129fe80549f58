"""
Service-time distributions for the M/G/1 sleep-mode model.

Four families are supported (deterministic, exponential, Erlang-k and
two-phase hyperexponential). Each exposes its first three raw moments in
closed form, its Laplace-Stieltjes transform and a sampler. Time is measured
in frames throughout.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Union

import numpy as np
from scipy import stats
from scipy.special import factorial, poch

from models.errors import ConfigError, DomainError, UnsupportedOrderError


class ServiceKind(str, Enum):
    DETERMINISTIC = "deterministic"
    EXPONENTIAL = "exponential"
    ERLANG = "erlang"
    HYPEREXP2 = "hyperexp2"


def check_order(k: int) -> None:
    if k not in (1, 2, 3):
        raise UnsupportedOrderError(f"Unsupported moment order {k}; expected 1, 2 or 3")


@dataclass(frozen=True)
class ServiceDistribution:
    """Service-time law sigma.

    ``mean`` is the deterministic value, the exponential / Erlang mean, or the
    mean of the first hyperexponential branch. ``k`` is the Erlang shape,
    ``p`` the probability of the first hyperexponential branch and ``mean2``
    the mean of its second branch.
    """

    kind: ServiceKind
    mean: float
    k: int = 1
    p: float = 1.0
    mean2: float = 0.0

    def __post_init__(self) -> None:
        if not isinstance(self.kind, ServiceKind):
            object.__setattr__(self, "kind", ServiceKind(self.kind))
        if not self.mean > 0:
            raise ConfigError(f"Service mean must be positive, got {self.mean}")
        if self.kind == ServiceKind.ERLANG and (int(self.k) != self.k or self.k < 1):
            raise ConfigError(f"Erlang shape must be an integer >= 1, got {self.k}")
        if self.kind == ServiceKind.HYPEREXP2:
            if not 0.0 <= self.p <= 1.0:
                raise ConfigError(f"Branch probability must lie in [0, 1]: {self.p}")
            if not self.mean2 > 0:
                raise ConfigError(
                    f"Second branch mean must be positive, got {self.mean2}"
                )

    # Constructors

    @classmethod
    def deterministic(cls, value: float) -> "ServiceDistribution":
        return cls(ServiceKind.DETERMINISTIC, value)

    @classmethod
    def exponential(cls, mean: float) -> "ServiceDistribution":
        return cls(ServiceKind.EXPONENTIAL, mean)

    @classmethod
    def erlang(cls, k: int, mean: float) -> "ServiceDistribution":
        return cls(ServiceKind.ERLANG, mean, k=int(k))

    @classmethod
    def hyperexp2(cls, p: float, mean1: float, mean2: float) -> "ServiceDistribution":
        return cls(ServiceKind.HYPEREXP2, mean1, p=p, mean2=mean2)

    @classmethod
    def from_config(cls, block: Dict[str, Any]) -> "ServiceDistribution":
        """Build from a config block such as {"kind": "exponential", "mean": 1.0}"""
        try:
            kind = ServiceKind(str(block["kind"]).lower())
            if kind == ServiceKind.DETERMINISTIC:
                return cls.deterministic(float(block.get("value", block.get("mean"))))
            if kind == ServiceKind.EXPONENTIAL:
                return cls.exponential(float(block["mean"]))
            if kind == ServiceKind.ERLANG:
                return cls.erlang(int(block["k"]), float(block["mean"]))
            return cls.hyperexp2(
                float(block["p"]), float(block["mean1"]), float(block["mean2"])
            )
        except KeyError as e:
            raise ConfigError(f"Missing service field: service.{e.args[0]}") from e
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Invalid service block {block}: {e}") from e

    def to_dict(self) -> Dict[str, Any]:
        if self.kind == ServiceKind.DETERMINISTIC:
            return {"kind": self.kind.value, "value": self.mean}
        if self.kind == ServiceKind.EXPONENTIAL:
            return {"kind": self.kind.value, "mean": self.mean}
        if self.kind == ServiceKind.ERLANG:
            return {"kind": self.kind.value, "k": self.k, "mean": self.mean}
        return {
            "kind": self.kind.value,
            "p": self.p,
            "mean1": self.mean,
            "mean2": self.mean2,
        }

    # Moments and transform

    def moment(self, k: int) -> float:
        """Exact k-th raw moment E[sigma^k]"""
        check_order(k)
        if self.kind == ServiceKind.DETERMINISTIC:
            return float(self.mean**k)
        if self.kind == ServiceKind.EXPONENTIAL:
            return float(factorial(k, exact=True) * self.mean**k)
        if self.kind == ServiceKind.ERLANG:
            rate = self.k / self.mean
            return float(poch(self.k, k) / rate**k)
        fk = factorial(k, exact=True)
        return float(fk * (self.p * self.mean**k + (1 - self.p) * self.mean2**k))

    @property
    def m1(self) -> float:
        return self.moment(1)

    @property
    def m2(self) -> float:
        return self.moment(2)

    @property
    def m3(self) -> float:
        return self.moment(3)

    @property
    def variance(self) -> float:
        return self.m2 - self.m1**2

    @property
    def scv(self) -> float:
        """Squared coefficient of variation"""
        return self.variance / self.m1**2

    def lst(self, s: float) -> float:
        """E[exp(-s sigma)] for s >= 0"""
        if s < 0:
            raise DomainError(f"LST argument must be nonnegative, got {s}")
        if s == 0:
            return 1.0
        if self.kind == ServiceKind.DETERMINISTIC:
            return float(np.exp(-s * self.mean))
        if self.kind == ServiceKind.EXPONENTIAL:
            return 1.0 / (1.0 + self.mean * s)
        if self.kind == ServiceKind.ERLANG:
            rate = self.k / self.mean
            return float((rate / (rate + s)) ** self.k)
        return self.p / (1.0 + self.mean * s) + (1 - self.p) / (1.0 + self.mean2 * s)

    # Sampling

    def sample_many(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """n i.i.d. draws from the law"""
        if self.kind == ServiceKind.DETERMINISTIC:
            return np.full(n, float(self.mean))
        if self.kind == ServiceKind.EXPONENTIAL:
            return stats.expon(scale=self.mean).rvs(size=n, random_state=rng)
        if self.kind == ServiceKind.ERLANG:
            return stats.gamma(a=self.k, scale=self.mean / self.k).rvs(
                size=n, random_state=rng
            )
        first = rng.random(n) < self.p
        scales = np.where(first, self.mean, self.mean2)
        return rng.exponential(scales)

    def sample(self, rng: np.random.Generator) -> float:
        return float(self.sample_many(rng, 1)[0])


def moment(d: ServiceDistribution, k: int) -> float:
    return d.moment(k)


def lst(d: ServiceDistribution, s: float) -> float:
    return d.lst(s)


def sample(d: ServiceDistribution, rng: Union[np.random.Generator, int]) -> float:
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    return d.sample(rng)
