"""
Tabular outputs: metric tables, parameter sweeps and CSV writing.
"""

import math
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd
from sklearn.model_selection import ParameterGrid

from models.energy import EnergyProfile, energy_report
from models.errors import GridTooLargeError, InstabilityError
from models.optimizer import MAX_GRID_POINTS
from models.service_time import ServiceDistribution
from models.vacation_policy import SleepWindowScenario
from models.vacation_queue import analyze, excess_waiting_bounds, series_sums

SWEEP_COLUMNS = ["lambda", "t_min", "a", "l", "t_t", "e_t", "gain", "e_zeta", "e_w"]


def metric_table(
    lam: float,
    sc: SleepWindowScenario,
    d: ServiceDistribution,
    prof: EnergyProfile,
    w: Optional[float] = None,
) -> pd.DataFrame:
    """Every closed-form metric as a two-column metric,value table"""
    ss = series_sums(lam, sc)
    qm = analyze(lam, sc, d, ss)
    em = energy_report(lam, sc, d, prof, ss)
    rows: Dict[str, float] = {
        "rho": qm.rho,
        "e_zeta": ss.e_zeta,
        "e_idle": ss.e_idle,
        "e_n": qm.e_n,
        "e_n2": qm.e_n2,
        "e_n3": qm.e_n3,
        "e_x": qm.e_x,
        "e_b": qm.e_b,
        "e_w": qm.e_w,
        "e_w2": qm.e_w2,
        "e_t": qm.e_t,
    }
    if w is not None:
        m1_bound, m2_bound = excess_waiting_bounds(lam, sc, d, w)
        rows.update({"w": w, "m1_bound": m1_bound, "m2_bound": m2_bound})
    rows.update(em.to_dict())
    return pd.DataFrame({"metric": list(rows), "value": list(rows.values())})


def _point_metrics(
    lam: float, sc: SleepWindowScenario, d: ServiceDistribution, prof: EnergyProfile
) -> Dict[str, float]:
    try:
        ss = series_sums(lam, sc)
        qm = analyze(lam, sc, d, ss)
        em = energy_report(lam, sc, d, prof, ss)
    except InstabilityError:
        return {"e_t": math.nan, "gain": math.nan, "e_zeta": math.nan, "e_w": math.nan}
    return {"e_t": qm.e_t, "gain": em.gain, "e_zeta": ss.e_zeta, "e_w": qm.e_w}


def run_sweep(
    lam: float,
    sc: SleepWindowScenario,
    d: ServiceDistribution,
    prof: EnergyProfile,
    axes: Mapping[str, Sequence[float]],
) -> pd.DataFrame:
    """E[T], gain, E[zeta] and E[W] over the product of one or two axes.

    Unstable points are kept with NaN metrics.
    """
    size = int(np.prod([len(v) for v in axes.values()]))
    if size > MAX_GRID_POINTS:
        raise GridTooLargeError(
            f"Sweep grid has {size} points (limit {MAX_GRID_POINTS})",
            details={"size": size},
        )
    rows: List[Dict[str, float]] = []
    for point in ParameterGrid({k: list(v) for k, v in axes.items()}):
        rate = float(point.get("lambda", lam))
        changes = {k: v for k, v in point.items() if k != "lambda"}
        if "l" in changes:
            changes["l"] = int(changes["l"])
        point_sc = sc.with_params(**changes) if changes else sc
        p = point_sc.params
        row = {"lambda": rate, "t_min": p.t_min, "a": p.a, "l": p.l, "t_t": p.t_t}
        row.update(_point_metrics(rate, point_sc, d, prof))
        rows.append(row)
    frame = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
    keys = [k for k in SWEEP_COLUMNS[:5] if k in axes]
    return frame.sort_values(keys, kind="mergesort").reset_index(drop=True)


def write_csv(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(out, index=False)
    return out


def print_table(frame: pd.DataFrame, title: str) -> None:
    print(f"\n📋 {title}")
    print("-" * 60)
    with pd.option_context("display.float_format", "{:.6g}".format):
        print(frame.to_string(index=False))
