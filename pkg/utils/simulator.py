"""
Regenerative discrete-event simulation of the sleep-mode queue.

Each cycle runs: trigger wait, vacations until one ends with work waiting,
warm-up, then exhaustive FCFS service. A cycle whose first arrival comes
within T_t skips vacations and warm-up. Arrivals are only discovered at the
end of a vacation. Estimates and standard errors come from batch means over
contiguous groups of cycles.
"""

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Deque, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats
from sklearn.utils.parallel import Parallel, delayed

from models.energy import STATES, EnergyProfile, energy_no_sleep, energy_report
from models.errors import ConfigError
from models.service_time import ServiceDistribution
from models.vacation_policy import SleepWindowScenario, WindowLaw
from models.vacation_queue import (
    analyze,
    offered_load,
    series_sums,
    vacation_count_pmf_table,
)

CSV_HEADER = [
    "scenario",
    "lambda",
    "t_min",
    "a",
    "l",
    "t_t",
    "t_w",
    "t_l",
    "n_cycles",
    "seed",
    "metric",
    "estimate",
    "stderr",
]

VALIDATED_METRICS = (
    "e_zeta",
    "e_idle",
    "e_n",
    "e_b",
    "e_w",
    "e_w2",
    "e_t",
    "e_x",
    "e_sleep_rate",
    "gain",
)

# metric -> (numerator column, denominator column) of the batch table
RATIO_METRICS = {
    "e_zeta": ("zeta", "cycles"),
    "e_idle": ("idle", "cycles"),
    "e_n": ("n", "cycles"),
    "e_b": ("busy", "cycles"),
    "e_w": ("sum_w", "customers"),
    "e_w2": ("sum_w2", "customers"),
    "e_t": ("sum_t", "customers"),
    "e_x": ("area", "length"),
    "e_sleep_rate": ("energy", "length"),
    "busy_fraction": ("busy", "length"),
    "tail_prob": ("tail", "customers"),
    "pgf_x": ("pgf_area", "length"),
}

CYCLE_COLUMNS = [
    "zeta",
    "idle",
    "n",
    "busy",
    "length",
    "customers",
    "sum_w",
    "sum_w2",
    "sum_t",
    "area",
    "energy",
    "tail",
    "pgf_area",
    *STATES,
]

BLOCK_SIZE = 4096


@dataclass(frozen=True)
class SimConfig:
    lam: float
    scenario: SleepWindowScenario
    service: ServiceDistribution
    profile: EnergyProfile = field(default_factory=EnergyProfile)
    n_cycles: int = 100_000
    seed: int = 0
    batch_count: int = 30
    tail_w: Optional[float] = None
    pgf_z: Optional[float] = None

    def __post_init__(self) -> None:
        offered_load(self.lam, self.service)
        if self.batch_count < 2:
            raise ConfigError(f"batch_count must be >= 2, got {self.batch_count}")
        if self.n_cycles < self.batch_count:
            raise ConfigError(
                f"n_cycles ({self.n_cycles}) must be >= batch_count "
                f"({self.batch_count})"
            )
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer: {self.seed}")
        if self.tail_w is not None and not self.tail_w > 0:
            raise ConfigError(f"tail_w must be positive, got {self.tail_w}")
        if self.pgf_z is not None and not 0.0 <= self.pgf_z <= 1.0:
            raise ConfigError(f"pgf_z must lie in [0, 1], got {self.pgf_z}")

    def with_values(self, **changes: object) -> "SimConfig":
        return replace(self, **changes)  # type: ignore[arg-type]


@dataclass
class SimResult:
    config: SimConfig
    estimates: Dict[str, float]
    stderr: Dict[str, float]
    cycles: int
    customers: int
    state_time: Dict[str, float]
    horizon: float
    zeta_counts: np.ndarray
    lag1_autocorr: float
    batches: pd.DataFrame

    def to_frame(self) -> pd.DataFrame:
        """Long-format rows under the fixed CSV header"""
        cfg = self.config
        p = cfg.scenario.params
        rows = [
            [
                cfg.scenario.label,
                cfg.lam,
                p.t_min,
                p.a,
                p.l,
                p.t_t,
                p.t_w,
                p.t_l,
                cfg.n_cycles,
                cfg.seed,
                metric,
                value,
                self.stderr.get(metric, float("nan")),
            ]
            for metric, value in self.estimates.items()
        ]
        return pd.DataFrame(rows, columns=CSV_HEADER)


@dataclass
class ValidationReport:
    config: SimConfig
    table: pd.DataFrame
    z_threshold: float
    result: SimResult

    @property
    def passed(self) -> bool:
        return bool(self.table["passed"].all())

    @property
    def failures(self) -> List[str]:
        return list(self.table.loc[~self.table["passed"], "metric"])


def _batched(draw: Callable[[int], np.ndarray]) -> Iterator[float]:
    while True:
        for x in draw(BLOCK_SIZE):
            yield float(x)


class _CycleSimulator:
    """Holds the mutable state of one run"""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.sc = cfg.scenario
        self.params = cfg.scenario.params
        arrival_rng, service_rng, window_rng = [
            np.random.default_rng(s)
            for s in np.random.SeedSequence(cfg.seed).spawn(3)
        ]
        self.gaps = _batched(lambda n: arrival_rng.exponential(1.0 / cfg.lam, n))
        self.services = _batched(lambda n: cfg.service.sample_many(service_rng, n))
        self.unit_windows = _batched(lambda n: window_rng.exponential(1.0, n))
        self.window_means = [
            self.sc.window_mean(i) for i in range(1, self.sc.saturation_index + 1)
        ]
        self.clock = 0.0
        self.next_arrival = next(self.gaps)

    def _sleep_window(self, i: int) -> float:
        mean = self.window_means[min(i, len(self.window_means)) - 1]
        if self.sc.window_law == WindowLaw.DETERMINISTIC:
            return mean
        return mean * next(self.unit_windows)

    def _admit(self, until: float, queue: Deque[float]) -> None:
        while self.next_arrival <= until:
            queue.append(self.next_arrival)
            self.next_arrival += next(self.gaps)

    def run_cycle(self, out: np.ndarray) -> None:
        cfg, p = self.cfg, self.params
        start = self.clock
        t_f = self.next_arrival - start
        queue: Deque[float] = deque()
        state = dict.fromkeys(STATES, 0.0)
        zeta = 0

        if t_f <= p.t_t:
            state["low"] = t_f
            self.clock = self.next_arrival
            self._admit(self.clock, queue)
            idle = t_f
        else:
            state["low"] = p.t_t
            self.clock += p.t_t
            while True:
                zeta += 1
                if zeta >= 2:
                    state["listen"] += p.t_l
                    self.clock += p.t_l
                window = self._sleep_window(zeta)
                state["sleep"] += window
                self.clock += window
                if self.next_arrival <= self.clock:
                    break
            idle = self.clock - start
            self._admit(self.clock, queue)
            state["listen"] += p.t_w
            self.clock += p.t_w
            self._admit(self.clock, queue)

        n_initial = len(queue)
        busy_start = self.clock
        t = self.clock
        waits: List[float] = []
        sojourns: List[float] = []
        arrivals: List[float] = []
        departures: List[float] = []
        while queue:
            arrived = queue.popleft()
            service = next(self.services)
            waits.append(t - arrived)
            t += service
            sojourns.append(t - arrived)
            if cfg.pgf_z is not None:
                arrivals.append(arrived)
                departures.append(t)
            self._admit(t, queue)
        self.clock = t
        state["high"] = t - busy_start

        w = np.asarray(waits)
        prof = cfg.profile
        out[:] = [
            zeta,
            idle,
            n_initial,
            state["high"],
            t - start,
            len(w),
            w.sum(),
            (w**2).sum(),
            float(np.sum(sojourns)),
            float(np.sum(sojourns)),
            sum(state[s] * prof.level(s) for s in STATES),
            float((w > cfg.tail_w).sum()) if cfg.tail_w is not None else 0.0,
            self._pgf_area(start, t, arrivals, departures),
            *(state[s] for s in STATES),
        ]

    def _pgf_area(
        self, start: float, end: float, arrivals: List[float], departures: List[float]
    ) -> float:
        """Integral of z^X(t) over the cycle"""
        z = self.cfg.pgf_z
        if z is None:
            return 0.0
        times = np.concatenate([arrivals, departures])
        steps = np.concatenate([np.ones(len(arrivals)), -np.ones(len(departures))])
        order = np.argsort(times, kind="stable")
        times, steps = times[order], steps[order]
        level = np.concatenate([[0.0], np.cumsum(steps)])
        edges = np.concatenate([[start], times, [end]])
        return float(np.sum(np.diff(edges) * np.power(z, level)))


def _batch_table(cycles: np.ndarray, batch_count: int) -> pd.DataFrame:
    frame = pd.DataFrame(cycles, columns=CYCLE_COLUMNS)
    frame["batch"] = np.arange(len(frame)) * batch_count // len(frame)
    table = frame.groupby("batch").sum()
    table.insert(0, "cycles", frame.groupby("batch").size())
    return table.reset_index(drop=True)


def _estimates(
    batches: pd.DataFrame, cfg: SimConfig
) -> Tuple[Dict[str, float], Dict[str, float]]:
    wanted = [
        m
        for m in RATIO_METRICS
        if (m != "tail_prob" or cfg.tail_w is not None)
        and (m != "pgf_x" or cfg.pgf_z is not None)
    ]
    totals = batches.sum()
    n_batches = len(batches)
    e_no = energy_no_sleep(offered_load(cfg.lam, cfg.service), cfg.profile)
    estimates: Dict[str, float] = {}
    errors: Dict[str, float] = {}
    for metric in wanted:
        num, den = RATIO_METRICS[metric]
        per_batch = batches[num] / batches[den]
        estimates[metric] = float(totals[num] / totals[den])
        errors[metric] = float(per_batch.std(ddof=1) / np.sqrt(n_batches))
        if metric == "e_sleep_rate":
            estimates["gain"] = (e_no - estimates[metric]) / e_no
            errors["gain"] = errors[metric] / e_no
    return estimates, errors


def run_simulation(cfg: SimConfig, verbose: bool = False) -> SimResult:
    """Simulate ``cfg.n_cycles`` regeneration cycles"""
    if verbose:
        print(
            f"🎲 Simulating {cfg.n_cycles} cycles "
            f"({cfg.scenario.label}, lambda={cfg.lam}, seed={cfg.seed})..."
        )
    sim = _CycleSimulator(cfg)
    cycles = np.zeros((cfg.n_cycles, len(CYCLE_COLUMNS)))
    for row in cycles:
        sim.run_cycle(row)

    batches = _batch_table(cycles, cfg.batch_count)
    estimates, errors = _estimates(batches, cfg)
    per_cycle_sojourn = cycles[:, CYCLE_COLUMNS.index("sum_t")]
    if per_cycle_sojourn.std() > 0:
        lag1 = float(np.corrcoef(per_cycle_sojourn[:-1], per_cycle_sojourn[1:])[0, 1])
    else:
        lag1 = 0.0

    result = SimResult(
        config=cfg,
        estimates=estimates,
        stderr=errors,
        cycles=cfg.n_cycles,
        customers=int(batches["customers"].sum()),
        state_time={s: float(batches[s].sum()) for s in STATES},
        horizon=float(batches["length"].sum()),
        zeta_counts=np.bincount(cycles[:, 0].astype(int)),
        lag1_autocorr=lag1,
        batches=batches,
    )
    if verbose:
        print(
            f"   ✅ {result.customers} customers served over "
            f"{result.horizon:.1f} frames"
        )
    return result


def run_replications(
    cfg: SimConfig, seeds: Sequence[int], n_jobs: int = 1
) -> SimResult:
    """Independent runs with distinct seeds, pooled batch-wise"""
    runs = Parallel(n_jobs=n_jobs)(
        delayed(run_simulation)(cfg.with_values(seed=int(s))) for s in seeds
    )
    batches = pd.concat([r.batches for r in runs], ignore_index=True)
    estimates, errors = _estimates(batches, cfg)
    width = max(len(r.zeta_counts) for r in runs)
    zeta_counts = sum(
        np.pad(r.zeta_counts, (0, width - len(r.zeta_counts))) for r in runs
    )
    return SimResult(
        config=cfg.with_values(n_cycles=sum(r.cycles for r in runs)),
        estimates=estimates,
        stderr=errors,
        cycles=sum(r.cycles for r in runs),
        customers=sum(r.customers for r in runs),
        state_time={s: sum(r.state_time[s] for r in runs) for s in STATES},
        horizon=sum(r.horizon for r in runs),
        zeta_counts=np.asarray(zeta_counts),
        lag1_autocorr=float(np.mean([r.lag1_autocorr for r in runs])),
        batches=batches,
    )


def zeta_chisquare(
    result: SimResult, min_expected: float = 5.0
) -> Tuple[float, float]:
    """Chi-square goodness of fit of the vacation-count histogram"""
    cfg = result.config
    n = result.zeta_counts.sum()
    pmf = vacation_count_pmf_table(cfg.lam, cfg.scenario, len(result.zeta_counts) - 1)
    expected = n * pmf
    expected[-1] += n - expected.sum()  # tail mass into the last bin
    observed = result.zeta_counts.astype(float)

    obs_bins: List[float] = []
    exp_bins: List[float] = []
    acc_obs = acc_exp = 0.0
    for o, e in zip(observed, expected):
        acc_obs += o
        acc_exp += e
        if acc_exp >= min_expected:
            obs_bins.append(acc_obs)
            exp_bins.append(acc_exp)
            acc_obs = acc_exp = 0.0
    if obs_bins:
        obs_bins[-1] += acc_obs
        exp_bins[-1] += acc_exp
    if len(obs_bins) < 2:
        return 0.0, 1.0
    statistic, pvalue = stats.chisquare(obs_bins, exp_bins)
    return float(statistic), float(pvalue)


def analytic_reference(cfg: SimConfig) -> Dict[str, float]:
    """Closed-form counterparts of the simulated metrics"""
    ss = series_sums(cfg.lam, cfg.scenario)
    qm = analyze(cfg.lam, cfg.scenario, cfg.service)
    em = energy_report(cfg.lam, cfg.scenario, cfg.service, cfg.profile)
    return {
        "e_zeta": ss.e_zeta,
        "e_idle": ss.e_idle,
        "e_n": qm.e_n,
        "e_b": qm.e_b,
        "e_w": qm.e_w,
        "e_w2": qm.e_w2,
        "e_t": qm.e_t,
        "e_x": qm.e_x,
        "e_sleep_rate": em.e_sleep,
        "gain": em.gain,
        "busy_fraction": qm.rho,
    }


def validate(
    cfg: SimConfig,
    z_threshold: float = 3.0,
    metrics: Sequence[str] = VALIDATED_METRICS,
    corrupt: Optional[Dict[str, float]] = None,
    result: Optional[SimResult] = None,
    verbose: bool = False,
) -> ValidationReport:
    """Compare closed forms against simulation metric by metric.

    ``corrupt`` multiplies selected analytic values before comparison; it
    exists to check that the harness flags a wrong formula.
    """
    analytic = analytic_reference(cfg)
    for metric, factor in (corrupt or {}).items():
        analytic[metric] *= factor
    sim = result or run_simulation(cfg, verbose=verbose)

    rows = []
    for metric in metrics:
        estimate = sim.estimates[metric]
        se = sim.stderr[metric]
        diff = abs(analytic[metric] - estimate)
        if se > 0:
            z = diff / se
        else:
            z = 0.0 if diff <= 1e-12 * max(1.0, abs(estimate)) else float("inf")
        rows.append(
            {
                "metric": metric,
                "analytic": analytic[metric],
                "estimate": estimate,
                "stderr": se,
                "z": z,
                "passed": z <= z_threshold,
            }
        )
    table = pd.DataFrame(rows)
    if verbose:
        for row in rows:
            mark = "✅" if row["passed"] else "❌"
            print(
                f"   {mark} {row['metric']:<13} analytic={row['analytic']:.6g} "
                f"sim={row['estimate']:.6g} ± {row['stderr']:.2g} (z={row['z']:.2f})"
            )
    return ValidationReport(
        config=cfg, table=table, z_threshold=z_threshold, result=sim
    )
