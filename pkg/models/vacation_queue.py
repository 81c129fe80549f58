"""
Closed-form analysis of the M/G/1 queue with vacation trigger, repeated
inhomogeneous vacations and warm-up.

Idle side: after a busy period the server waits T_t for an arrival; if none
comes it takes vacations V_1, V_2, ... until one ends with work waiting
(zeta vacations), then warms up for T_w. The number of customers N found at
the start of the busy period drives the stochastic decomposition

    X(z) = (1 - N(z)) / (E[N] (1 - z)) * X_MG1(z)

from which queue length, waiting and sojourn moments follow.

All infinite sums over the vacation index have the form sum_i f(i) P_i with
P_i = prod_{k<i} L_k(lambda). Vacation laws stop changing at index
``saturation_index``, after which the series is geometric and is summed in
closed form.
"""

import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np

from models.errors import DomainError, InstabilityError, SeriesConvergenceError
from models.service_time import ServiceDistribution
from models.vacation_policy import SleepWindowScenario

MAX_SERIES_TERMS = 10**6
STABILITY_MARGIN = 1e-9


@dataclass(frozen=True)
class VacationSeriesSums:
    """lambda-dependent aggregates of the idle period"""

    l_tt: float  # P(no arrival during the trigger wait) = exp(-lambda T_t)
    e_zeta: float  # E[number of vacations]
    e_idle: float  # E[I]
    i_tilde_mom: float  # E[N_I] / lambda
    i_a: float  # L_Tt sum E[V_i^2] P_i
    i_c: float  # L_Tt sum E[V_i^3] P_i
    i_trig: float  # E[I 1{t_f > T_t}]
    i_notrig: float  # E[I 1{t_f <= T_t}]
    terms_used: int
    tail_bound: float
    sum_v: float = 0.0  # sum E[V_i] P_i (without the L_Tt factor)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class QueueMetrics:
    lam: float
    rho: float
    e_n: float
    e_n2: float
    e_n3: float
    e_x: float
    e_b: float
    e_w: float
    e_w2: float
    e_t: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def check_rate(lam: float) -> None:
    if not lam > 0 or math.isinf(lam):
        raise DomainError(f"Arrival rate must be positive and finite, got {lam}")


def offered_load(lam: float, d: ServiceDistribution) -> float:
    """rho = lambda E[sigma], rejecting loads at or above one"""
    check_rate(lam)
    rho = lam * d.m1
    if rho > 1 - STABILITY_MARGIN:
        raise InstabilityError(
            f"Unstable queue: rho = {rho:.6g} (lambda={lam}, E[sigma]={d.m1})",
            details={"rho": rho, "lambda": lam},
        )
    return rho


def trigger_terms(lam: float, t_t: float) -> Tuple[float, float, float]:
    """(L_Tt, T_t L_Tt, (1 - L_Tt)/lambda) with T_t = inf giving (0, 0, 1/lambda)"""
    if math.isinf(t_t):
        return 0.0, 0.0, 1.0 / lam
    l_tt = math.exp(-lam * t_t)
    return l_tt, t_t * l_tt, -math.expm1(-lam * t_t) / lam


def _survival_sums(lam: float, sc: SleepWindowScenario) -> Tuple[np.ndarray, int]:
    """[sum P_i, sum E[V_i] P_i, sum E[V_i^2] P_i, sum E[V_i^3] P_i]"""
    i0 = sc.saturation_index
    if i0 > MAX_SERIES_TERMS:
        raise SeriesConvergenceError(
            f"Vacation series needs {i0} explicit terms (cap {MAX_SERIES_TERMS})",
            details={"l": sc.params.l},
        )

    def weights(i: int) -> np.ndarray:
        return np.array([1.0] + [sc.vacation_moment(i, k) for k in (1, 2, 3)])

    totals = np.zeros(4)
    survival = 1.0
    for i in range(1, i0):
        totals += survival * weights(i)
        survival *= sc.vacation_lst(i, lam)
        if survival == 0.0:
            return totals, i
    if survival > 0.0:
        totals += survival * weights(i0) / sc.vacation_lst_complement(i0, lam)
    return totals, i0


def series_sums(lam: float, sc: SleepWindowScenario) -> VacationSeriesSums:
    """Expected vacation count, idle period and the higher idle aggregates"""
    check_rate(lam)
    l_tt, tt_ltt, pre_trigger = trigger_terms(lam, sc.params.t_t)
    totals, terms = _survival_sums(lam, sc)
    sum_p, sum_v, sum_v2, sum_v3 = (float(x) for x in totals)

    e_idle = pre_trigger + l_tt * sum_v
    return VacationSeriesSums(
        l_tt=l_tt,
        e_zeta=l_tt * sum_p,
        e_idle=e_idle,
        i_tilde_mom=e_idle,
        i_a=l_tt * sum_v2,
        i_c=l_tt * sum_v3,
        i_trig=tt_ltt + l_tt * sum_v,
        i_notrig=max(pre_trigger - tt_ltt, 0.0),
        terms_used=terms,
        tail_bound=0.0,
        sum_v=sum_v,
    )


def _survival(lam: float, sc: SleepWindowScenario, i: int) -> float:
    """P_i = prod_{k<i} L_k(lambda)"""
    i0 = sc.saturation_index
    survival = 1.0
    for k in range(1, min(i, i0)):
        survival *= sc.vacation_lst(k, lam)
    if i > i0:
        survival *= sc.vacation_lst(i0, lam) ** (i - i0)
    return survival


def vacation_count_pmf(lam: float, sc: SleepWindowScenario, i: int) -> float:
    """P(zeta = i)"""
    check_rate(lam)
    if i < 0:
        raise DomainError(f"Vacation count must be >= 0, got {i}")
    l_tt, _, _ = trigger_terms(lam, sc.params.t_t)
    if i == 0:
        return 1.0 - l_tt
    if l_tt == 0.0:
        return 0.0
    return l_tt * _survival(lam, sc, i) * sc.vacation_lst_complement(i, lam)


def vacation_count_pmf_table(
    lam: float, sc: SleepWindowScenario, i_max: int
) -> np.ndarray:
    """P(zeta = i) for i = 0..i_max"""
    return np.array([vacation_count_pmf(lam, sc, i) for i in range(i_max + 1)])


def initial_queue_pgf(lam: float, sc: SleepWindowScenario, z: float) -> float:
    """N(z) = E[z^N], the PGF of the queue found at the start of a busy period"""
    check_rate(lam)
    if not 0.0 <= z <= 1.0:
        raise DomainError(f"PGF argument must lie in [0, 1], got {z}")
    if z == 1.0:
        return 1.0
    l_tt, _, _ = trigger_terms(lam, sc.params.t_t)
    s = lam * (1.0 - z)

    # vacation part: sum_i [L_i(s) - L_i(lambda)] P_i
    i0 = sc.saturation_index
    vac = 0.0
    survival = 1.0
    for i in range(1, i0):
        vac += survival * (sc.vacation_lst(i, s) - sc.vacation_lst(i, lam))
        survival *= sc.vacation_lst(i, lam)
        if survival == 0.0:
            break
    if survival > 0.0:
        vac += (
            survival
            * (sc.vacation_lst(i0, s) - sc.vacation_lst(i0, lam))
            / sc.vacation_lst_complement(i0, lam)
        )

    # warm-up arrivals only follow an idle period that reached vacation mode
    warm_up = math.exp(-s * sc.params.t_w)
    return z * (1.0 - l_tt) + l_tt * warm_up * vac


def initial_queue_factorial_moments(
    lam: float, sc: SleepWindowScenario, sums: Optional[VacationSeriesSums] = None
) -> Tuple[float, float, float]:
    """(N'(1), N''(1), N'''(1))"""
    check_rate(lam)
    ss = sums or series_sums(lam, sc)
    t_w = sc.params.t_w
    l_tt = ss.l_tt
    # triggered cycles add Poisson(lambda T_w) to the vacation arrivals,
    # untriggered ones start with exactly one customer
    d1 = lam * (t_w * l_tt + ss.i_tilde_mom)
    d2 = lam**2 * (ss.i_a + 2 * t_w * l_tt * ss.sum_v + t_w**2 * l_tt)
    d3 = lam**3 * (
        ss.i_c
        + 3 * t_w * ss.i_a
        + 3 * t_w**2 * l_tt * ss.sum_v
        + t_w**3 * l_tt
    )
    return d1, d2, d3


def initial_queue_moments(
    lam: float, sc: SleepWindowScenario
) -> Tuple[float, float, float]:
    """(E[N], E[N^2], E[N^3])"""
    d1, d2, d3 = initial_queue_factorial_moments(lam, sc)
    e_n = d1
    e_n2 = d2 + d1
    e_n3 = d3 + 3 * e_n2 - 2 * e_n
    return e_n, e_n2, e_n3


def mg1_queue_pgf(lam: float, d: ServiceDistribution, z: float) -> float:
    """Pollaczek-Khinchine transform of the plain M/G/1 queue length"""
    rho = offered_load(lam, d)
    if z == 1.0:
        return 1.0
    sigma = d.lst(lam * (1.0 - z))
    return (1.0 - rho) * (1.0 - z) * sigma / (sigma - z)


def mg1_waiting_time(lam: float, d: ServiceDistribution) -> float:
    """lambda E[sigma^2] / (2 (1 - rho))"""
    rho = offered_load(lam, d)
    return lam * d.m2 / (2.0 * (1.0 - rho))


def queue_length_pgf(
    lam: float, sc: SleepWindowScenario, d: ServiceDistribution, z: float
) -> float:
    """E[z^X] of the stationary number in system"""
    offered_load(lam, d)
    if not 0.0 <= z <= 1.0:
        raise DomainError(f"PGF argument must lie in [0, 1], got {z}")
    if z == 1.0:
        return 1.0
    e_n = initial_queue_moments(lam, sc)[0]
    vacation_factor = (1.0 - initial_queue_pgf(lam, sc, z)) / (e_n * (1.0 - z))
    return vacation_factor * mg1_queue_pgf(lam, d, z)


def expected_queue_length(
    lam: float, sc: SleepWindowScenario, d: ServiceDistribution
) -> float:
    rho = offered_load(lam, d)
    d1, d2, _ = initial_queue_factorial_moments(lam, sc)
    return d2 / (2.0 * d1) + rho + lam**2 * d.m2 / (2.0 * (1.0 - rho))


def expected_busy_period(
    lam: float, sc: SleepWindowScenario, d: ServiceDistribution
) -> float:
    """E[B] = E[N] E[sigma] / (1 - rho)"""
    rho = offered_load(lam, d)
    e_n = initial_queue_factorial_moments(lam, sc)[0]
    return e_n * d.m1 / (1.0 - rho)


def _waiting_moments(
    lam: float, d: ServiceDistribution, rho: float, d1: float, d2: float, d3: float
) -> Tuple[float, float]:
    e_w = d2 / (2.0 * lam * d1) + lam * d.m2 / (2.0 * (1.0 - rho))
    e_w2 = (
        d3 / (3.0 * lam**2 * d1)
        + lam * e_w * d.m2 / (1.0 - rho)
        + lam * d.m3 / (3.0 * (1.0 - rho))
    )
    return e_w, e_w2


def waiting_time_moments(
    lam: float, sc: SleepWindowScenario, d: ServiceDistribution
) -> Tuple[float, float]:
    """(E[W], E[W^2]) for FCFS service"""
    rho = offered_load(lam, d)
    return _waiting_moments(lam, d, rho, *initial_queue_factorial_moments(lam, sc))


def sojourn_time(lam: float, sc: SleepWindowScenario, d: ServiceDistribution) -> float:
    """E[T] = E[W] + E[sigma]"""
    return waiting_time_moments(lam, sc, d)[0] + d.m1


def excess_waiting_bounds(
    lam: float, sc: SleepWindowScenario, d: ServiceDistribution, w: float
) -> Tuple[float, float]:
    """Markov bounds on P(W > w): (E[W]/w, E[W^2]/w^2), not clamped"""
    if not w > 0:
        raise DomainError(f"Waiting threshold must be positive, got {w}")
    e_w, e_w2 = waiting_time_moments(lam, sc, d)
    return e_w / w, e_w2 / w**2


def analyze(
    lam: float,
    sc: SleepWindowScenario,
    d: ServiceDistribution,
    sums: Optional[VacationSeriesSums] = None,
) -> QueueMetrics:
    """All queue metrics from a single pass over the series"""
    rho = offered_load(lam, d)
    ss = sums or series_sums(lam, sc)
    d1, d2, d3 = initial_queue_factorial_moments(lam, sc, ss)
    e_n2 = d2 + d1
    e_w, e_w2 = _waiting_moments(lam, d, rho, d1, d2, d3)
    return QueueMetrics(
        lam=lam,
        rho=rho,
        e_n=d1,
        e_n2=e_n2,
        e_n3=d3 + 3 * e_n2 - 2 * d1,
        e_x=d2 / (2.0 * d1) + rho + lam**2 * d.m2 / (2.0 * (1.0 - rho)),
        e_b=d1 * d.m1 / (1.0 - rho),
        e_w=e_w,
        e_w2=e_w2,
        e_t=e_w + d.m1,
    )
