#!/usr/bin/env python3
"""
Sleep-Mode Analysis Pipeline
Closed-form metrics, simulation, validation, sweeps and protocol optimization
for a server that sleeps through repeated vacations while idle
"""

import json
import sys
from pathlib import Path
from typing import Any, Callable, Dict, Optional

import numpy as np
import pandas as pd

# Add project root to Python path
sys.path.append(str(Path(__file__).parent))

from models.errors import InfeasibleProblemError, SleepModeError
from models.optimizer import OptimizationOutcome, optimal_curves, solve
from utils.config import RunConfig, parse_float
from utils.reporting import metric_table, print_table, run_sweep, write_csv
from utils.simulator import run_replications, run_simulation, zeta_chisquare
from utils.simulator import validate as validate_closed_forms


class SleepModeAnalysisPipeline:
    """Runs one command of the toolkit against a resolved configuration"""

    def __init__(self, config: RunConfig, verbose: bool = True):
        self.verbose = verbose
        self._say("🔧 Initializing Sleep-Mode Analysis Pipeline...")
        self.config = config
        self._say("✅ Pipeline ready!")

    def _say(self, message: str) -> None:
        if self.verbose:
            print(message)

    def _guarded(self, name: str, step: Callable[[], Dict[str, Any]]) -> Dict[str, Any]:
        """Run a command; domain errors become a failed result dict"""
        self._say(f"\n🚀 Starting {name}...")
        try:
            result = step()
        except SleepModeError as e:
            self._say(f"\n❌ {name.capitalize()} failed: {e}")
            return {"success": False, "error": str(e), "exit_code": e.exit_code}
        result.setdefault("success", True)
        result.setdefault("exit_code", 0)
        if result["success"]:
            self._say(f"\n🎉 {name.capitalize()} completed successfully!")
        return result

    def _save(self, frame: pd.DataFrame, out: Optional[str]) -> Optional[str]:
        if out is None:
            return None
        path = write_csv(frame, out)
        self._say(f"   💾 Results saved: {path}")
        return str(path)

    # Commands

    def analyze(self, out: Optional[str] = None) -> Dict[str, Any]:
        def step() -> Dict[str, Any]:
            cfg = self.config
            lam = cfg.arrival_rate()
            sc = cfg.scenario_params()
            self._say(f"\n📊 Step 1: Closed forms for {sc.label} at lambda={lam}...")
            w = cfg.analyze.get("w")
            w = None if w is None else parse_float(w, "analyze.w")
            table = metric_table(
                lam, sc, cfg.service_distribution(), cfg.energy_profile(), w
            )
            if self.verbose:
                print_table(table, f"Metrics ({sc.label}, lambda={lam})")
            return {
                "metrics": dict(zip(table["metric"], table["value"])),
                "frame": table,
                "output": self._save(table, out),
            }

        return self._guarded("analysis", step)

    def simulate(
        self, out: Optional[str] = None, seed: Optional[int] = None
    ) -> Dict[str, Any]:
        def step() -> Dict[str, Any]:
            sim_cfg = self.config.sim_config(seed)
            replications = int(self.config.simulation.get("replications", 1))
            self._say(
                f"\n🎲 Step 1: Simulating {sim_cfg.scenario.label} "
                f"({replications} replication(s), seed={sim_cfg.seed})..."
            )
            if replications > 1:
                seeds = [sim_cfg.seed + r for r in range(replications)]
                n_jobs = int(self.config.simulation.get("n_jobs", 1))
                result = run_replications(sim_cfg, seeds, n_jobs=n_jobs)
            else:
                result = run_simulation(sim_cfg, verbose=self.verbose)

            self._say("\n📈 Step 2: Checking the vacation-count histogram...")
            statistic, pvalue = zeta_chisquare(result)
            self._say(f"   📐 chi-square={statistic:.3f}, p={pvalue:.3f}")
            self._say(f"   🔁 lag-1 autocorrelation={result.lag1_autocorr:.4f}")

            frame = result.to_frame()
            if self.verbose:
                print_table(frame[["metric", "estimate", "stderr"]], "Estimates")
            return {
                "result": result,
                "frame": frame,
                "chisquare": {"statistic": statistic, "pvalue": pvalue},
                "output": self._save(frame, out),
            }

        return self._guarded("simulation", step)

    def validate(
        self, out: Optional[str] = None, seed: Optional[int] = None
    ) -> Dict[str, Any]:
        def step() -> Dict[str, Any]:
            sim_cfg = self.config.sim_config(seed)
            threshold = float(self.config.simulation.get("z_threshold", 3.0))
            self._say(
                f"\n🔍 Step 1: Closed forms vs {sim_cfg.n_cycles} simulated "
                f"cycles (z <= {threshold})..."
            )
            report = validate_closed_forms(
                sim_cfg, z_threshold=threshold, verbose=self.verbose
            )
            if not report.passed:
                self._say(f"\n❌ Failed metrics: {', '.join(report.failures)}")
            return {
                "success": report.passed,
                "exit_code": 0 if report.passed else 1,
                "error": None
                if report.passed
                else f"Validation failed for {', '.join(report.failures)}",
                "report": report,
                "frame": report.table,
                "output": self._save(report.table, out),
            }

        return self._guarded("validation", step)

    def sweep(self, out: Optional[str] = None) -> Dict[str, Any]:
        def step() -> Dict[str, Any]:
            cfg = self.config
            axes = cfg.sweep_axes()
            sc = cfg.scenario_params()
            self._say(
                f"\n📊 Step 1: Sweeping {' x '.join(axes)} "
                f"({int(np.prod([len(v) for v in axes.values()]))} points)..."
            )
            frame = run_sweep(
                cfg.arrival_rate(),
                sc,
                cfg.service_distribution(),
                cfg.energy_profile(),
                axes,
            )
            unstable = int(frame["e_t"].isna().sum())
            if unstable:
                self._say(f"   ⚠️ {unstable} unstable point(s) left as NaN")
            if self.verbose:
                print_table(frame, f"Sweep ({sc.label})")
            return {"frame": frame, "output": self._save(frame, out)}

        return self._guarded("sweep", step)

    def optimize(self, out: Optional[str] = None) -> Dict[str, Any]:
        def step() -> Dict[str, Any]:
            n_jobs = int(self.config.optimize.get("n_jobs", 1))
            request = self.config.curve_request()
            if request is not None:
                return self._optimize_over_rates(request, n_jobs, out)
            problem = self.config.problem()
            self._say(
                f"\n🧮 Step 1: {problem.mode.value} search over "
                f"{', '.join(problem.decision_vars)} ({problem.grid_size()} points)..."
            )
            outcome = solve(problem, n_jobs=n_jobs, verbose=self.verbose)
            frame = pd.DataFrame([outcome.summary()])
            self._report_outcome(outcome)
            saved = self._save(frame, out)
            if not outcome.feasible:
                raise InfeasibleProblemError(
                    f"No grid point meets the delay bound t_qos={problem.t_qos}",
                    details={"output": saved},
                )
            return {"outcome": outcome, "frame": frame, "output": saved}

        return self._guarded("optimization", step)

    def _optimize_over_rates(
        self, request: Dict[str, Any], n_jobs: int, out: Optional[str]
    ) -> Dict[str, Any]:
        rates, programs = request["rates"], request["programs"]
        self._say(
            f"\n🧮 Step 1: {', '.join(programs)} at {len(rates)} arrival rate(s)..."
        )
        frame = optimal_curves(n_jobs=n_jobs, verbose=self.verbose, **request)
        if self.verbose:
            print_table(frame, f"Optimum over lambda ({request['scenario'].label})")
        saved = self._save(frame, out)
        missing = int(frame["t_min"].isna().sum())
        if missing == len(frame):
            raise InfeasibleProblemError(
                f"No grid point meets the delay bound t_qos={request['t_qos']}",
                details={"output": saved},
            )
        if missing:
            self._say(f"   ⚠️ {missing} infeasible (lambda, program) row(s) left as NaN")
        return {"frame": frame, "output": saved}

    def _report_outcome(self, outcome: OptimizationOutcome) -> None:
        if not self.verbose:
            return
        print("\n🏆 Optimization summary")
        print(json.dumps(outcome.summary(), indent=2, default=str))
