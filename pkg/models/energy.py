"""
Energy accounting for the power-save cycle.

A regeneration cycle is billed per state:
  low     awake-idle before the vacation trigger (and the whole idle period of
          a cycle whose first arrival comes before T_t)
  sleep   the sleep windows S_i
  listen  the T_l prefix of every vacation after the first, and the warm-up
  high    the busy period
"""

from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional, Tuple

from models.errors import ConfigError, DomainError
from models.service_time import ServiceDistribution
from models.vacation_policy import SleepWindowScenario
from models.vacation_queue import (
    VacationSeriesSums,
    offered_load,
    series_sums,
    trigger_terms,
)

STATES = ("sleep", "listen", "low", "high")


@dataclass(frozen=True)
class EnergyProfile:
    """Power drawn in each state, in normalized units per frame"""

    c_high: float = 1.0
    c_listen: float = 0.2
    c_low: float = 0.2
    c_sleep: float = 0.0

    def __post_init__(self) -> None:
        if not self.c_high > 0:
            raise ConfigError(f"c_high must be positive, got {self.c_high}")
        if min(self.c_listen, self.c_low, self.c_sleep) < 0:
            raise ConfigError("Energy levels must be nonnegative")
        if not self.c_sleep <= self.c_low <= self.c_high:
            raise ConfigError(
                "Energy levels must satisfy c_sleep <= c_low <= c_high, got "
                f"{self.c_sleep}, {self.c_low}, {self.c_high}"
            )
        if self.c_listen > self.c_high:
            raise ConfigError(
                f"c_listen ({self.c_listen}) must not exceed c_high ({self.c_high})"
            )

    def level(self, state: str) -> float:
        return float(getattr(self, f"c_{state}"))

    def scaled(self, factor: float) -> "EnergyProfile":
        return EnergyProfile(
            self.c_high * factor,
            self.c_listen * factor,
            self.c_low * factor,
            self.c_sleep * factor,
        )

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class EnergyMetrics:
    e_no_sleep: float
    e_sleep: float
    gain: float
    gain_simplified: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def energy_no_sleep(rho: float, prof: EnergyProfile) -> float:
    """Consumption rate with power save disabled"""
    if not 0.0 <= rho < 1.0:
        raise DomainError(f"rho must lie in [0, 1), got {rho}")
    return rho * prof.c_high + (1.0 - rho) * prof.c_low


def _busy_and_sums(
    lam: float,
    sc: SleepWindowScenario,
    d: ServiceDistribution,
    sums: Optional[VacationSeriesSums],
) -> Tuple[float, float, VacationSeriesSums]:
    """(rho, E[B], series sums), reusing ``sums`` when given"""
    rho = offered_load(lam, d)
    ss = sums or series_sums(lam, sc)
    e_n = lam * (sc.params.t_w * ss.l_tt + ss.i_tilde_mom)
    return rho, e_n * d.m1 / (1.0 - rho), ss


def cycle_length(
    lam: float,
    sc: SleepWindowScenario,
    d: ServiceDistribution,
    sums: Optional[VacationSeriesSums] = None,
) -> float:
    """E[C] = E[I] + T_w L_Tt + E[B]"""
    _, e_b, ss = _busy_and_sums(lam, sc, d, sums)
    return ss.e_idle + sc.params.t_w * ss.l_tt + e_b


def state_times(
    lam: float, sc: SleepWindowScenario, d: ServiceDistribution
) -> Dict[str, float]:
    """Expected time per cycle spent in each state"""
    _, e_b, ss = _busy_and_sums(lam, sc, d, None)
    _, _, pre_trigger = trigger_terms(lam, sc.params.t_t)
    listen_windows = sc.params.t_l * max(ss.e_zeta - ss.l_tt, 0.0)
    return {
        "sleep": max(ss.l_tt * ss.sum_v - listen_windows, 0.0),
        "listen": listen_windows + sc.params.t_w * ss.l_tt,
        "low": pre_trigger,
        "high": e_b,
    }


def state_time_fractions(
    lam: float, sc: SleepWindowScenario, d: ServiceDistribution
) -> Dict[str, float]:
    """Long-run fraction of time in each state"""
    times = state_times(lam, sc, d)
    total = sum(times.values())
    return {state: t / total for state, t in times.items()}


def energy_sleep(
    lam: float,
    sc: SleepWindowScenario,
    d: ServiceDistribution,
    prof: EnergyProfile,
    sums: Optional[VacationSeriesSums] = None,
) -> float:
    """Consumption rate with power save enabled"""
    _, e_b, ss = _busy_and_sums(lam, sc, d, sums)
    _, tt_ltt, _ = trigger_terms(lam, sc.params.t_t)
    p = sc.params

    # zeta - 1 listen windows in a triggered cycle (V_1 has none)
    cycle_energy = (
        ss.i_trig * prof.c_sleep
        + ss.i_notrig * prof.c_low
        + tt_ltt * (prof.c_low - prof.c_sleep)
        + p.t_l * max(ss.e_zeta - ss.l_tt, 0.0) * (prof.c_listen - prof.c_sleep)
        + p.t_w * ss.l_tt * prof.c_listen
        + e_b * prof.c_high
    )
    e_cycle = ss.e_idle + p.t_w * ss.l_tt + e_b
    return cycle_energy / e_cycle


def simplified_gain(
    lam: float,
    sc: SleepWindowScenario,
    d: ServiceDistribution,
    prof: EnergyProfile,
    sums: Optional[VacationSeriesSums] = None,
) -> float:
    """Gain with c_sleep neglected and the warm-up taken as one listen window"""
    rho, e_b, ss = _busy_and_sums(lam, sc, d, sums)
    _, _, pre_trigger = trigger_terms(lam, sc.params.t_t)
    low = prof.c_low / prof.c_high
    listen = prof.c_listen / prof.c_high
    numerator = (1.0 - rho) * low - rho / e_b * (
        sc.params.t_l * ss.e_zeta * listen + pre_trigger * low
    )
    return numerator / (rho + (1.0 - rho) * low)


def energy_report(
    lam: float,
    sc: SleepWindowScenario,
    d: ServiceDistribution,
    prof: EnergyProfile,
    sums: Optional[VacationSeriesSums] = None,
) -> EnergyMetrics:
    rho, _, ss = _busy_and_sums(lam, sc, d, sums)
    e_no = energy_no_sleep(rho, prof)
    e_s = energy_sleep(lam, sc, d, prof, ss)
    return EnergyMetrics(
        e_no_sleep=e_no,
        e_sleep=e_s,
        gain=(e_no - e_s) / e_no,
        gain_simplified=simplified_gain(lam, sc, d, prof, ss),
    )


def gain(
    lam: float,
    sc: SleepWindowScenario,
    d: ServiceDistribution,
    prof: EnergyProfile,
) -> float:
    """Relative energy saving (E_no_sleep - E_sleep) / E_no_sleep"""
    return energy_report(lam, sc, d, prof).gain
