"""Threshold search and the MSE-versus-condition-number sweep.

Every trial regenerates its own matrix, signal and noise from a seed stream
keyed by ``(kappa, trial)``, so all algorithms see the same draws and the
output does not depend on how trials are spread over worker processes.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from camp.bench.config import SweepConfig
from camp.denoise import Denoiser
from camp.model import (
    geometric_singular_values,
    measure,
    sample_partial_hadamard,
    sample_signal,
    seed_stream,
    SignalPrior,
)
from camp.solvers import SolverConfig, run
from camp.spectral import equal_eigenvalue_moments, tap_recursion, taps_geometric_closed_form

log = logging.getLogger(__name__)

TRIAL_HEADER = "algorithm,kappa,theta,trial,final_mse,mse_db"
AGGREGATE_HEADER = "algorithm,kappa,theta,trials,mean_mse,mean_mse_db,stderr_mse,diverged"
PLOT_HEADER = "algorithm,kappa,mean_mse_db,stderr_db"
THRESHOLD_HEADER = "algorithm,kappa,theta,pilot_mean_mse,pilot_diverged,selected"


def fmt(v: float) -> str:
    return repr(float(v))


def prepare_taps(delta: float, kappa: float, T: int) -> np.ndarray:
    """Taps for the geometric ensemble; the kappa = 1 limit goes through the recursion."""
    if kappa == 1.0:
        return tap_recursion(equal_eigenvalue_moments(delta), T).taps
    return taps_geometric_closed_form(delta, kappa, T)


def draw_problem(cfg: SweepConfig, kappa: float, trial: int, stream: str = "trial"):
    """Matrix, signal and measurement of one trial, identical for every algorithm."""
    rng = seed_stream(cfg.master_seed, stream, float(kappa), int(trial))
    sv = geometric_singular_values(cfg.M, cfg.N, kappa)
    ens = sample_partial_hadamard(cfg.M, cfg.N, sv, rng)
    x = sample_signal(SignalPrior(cfg.rho), cfg.N, rng)
    meas = measure(ens, x, cfg.noise_variance, rng)
    return ens, x, meas


def _final_mse(cfg, algorithm, kappa, trial, thetas, taps, stream):
    ens, x, meas = draw_problem(cfg, kappa, trial, stream)
    thetas = np.asarray(thetas, dtype=float)
    den = Denoiser(thetas, batch=True) if thetas.ndim else Denoiser(float(thetas))
    traj = run(ens, meas, SolverConfig(cfg.T, den, algorithm, taps), x)
    return np.asarray(traj.final_mse, dtype=float)


def _work(args):
    return _final_mse(*args)


def _map(fn, jobs, workers):
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


@dataclass(frozen=True)
class ThresholdChoice:
    algorithm: str
    kappa: float
    theta: float
    grid: Tuple[float, ...]
    pilot_mean: Tuple[float, ...]
    pilot_diverged: Tuple[int, ...]
    all_diverged: bool


def _select(grid, means) -> int:
    # minimum mean MSE; exact ties go to the larger threshold
    best = None
    for i, (th, m) in enumerate(zip(grid, means)):
        if best is None or m < means[best] or (m == means[best] and th > grid[best]):
            best = i
    return best


def threshold_search(cfg: SweepConfig, algorithm: str, kappa: float, taps=None, workers: int = 1) -> ThresholdChoice:
    """Exhaustive search of a constant threshold over ``cfg.theta_grid``.

    Runs ``cfg.pilot_trials`` pilot problems (a seed stream disjoint from the
    main trials), all thresholds at once per problem, and picks the minimum
    mean final MSE.
    """
    grid = tuple(float(t) for t in cfg.theta_grid)
    if taps is None:
        taps = prepare_taps(cfg.delta, kappa, cfg.T)
    jobs = [(cfg, algorithm, kappa, i, grid, taps, "pilot") for i in range(cfg.pilot_trials)]
    finals = np.array(_map(_work, jobs, workers))
    diverged = np.sum(~(finals <= cfg.divergence_mse), axis=0)
    means = np.mean(finals, axis=0)
    idx = _select(grid, list(means))
    all_div = bool(np.all(diverged == cfg.pilot_trials))
    if all_div:
        log.warning("%s at kappa=%g: every threshold diverged in all pilot trials; using least-bad theta=%g",
                    algorithm, kappa, grid[idx])
    return ThresholdChoice(algorithm, float(kappa), grid[idx], grid, tuple(means), tuple(int(d) for d in diverged), all_div)


@dataclass(frozen=True)
class TrialReport:
    algorithm: str
    kappa: float
    theta: float
    trials: int
    mean_mse: float
    stderr_mse: float
    diverged: int
    threshold_flagged: bool = False

    @property
    def mean_mse_db(self) -> float:
        return 10.0 * math.log10(self.mean_mse) if self.mean_mse > 0 else -math.inf

    @property
    def stderr_db(self) -> float:
        if not self.mean_mse > 0 or not math.isfinite(self.stderr_mse):
            return math.nan
        return 10.0 / math.log(10.0) * self.stderr_mse / self.mean_mse


@dataclass(frozen=True)
class TrialRecord:
    algorithm: str
    kappa: float
    theta: float
    trial: int
    final_mse: float

    @property
    def mse_db(self) -> float:
        return 10.0 * math.log10(self.final_mse) if self.final_mse > 0 else -math.inf

    def csv(self) -> str:
        return ",".join([self.algorithm, fmt(self.kappa), fmt(self.theta), str(self.trial),
                         fmt(self.final_mse), fmt(self.mse_db)])


def aggregate(records: Sequence[TrialRecord], divergence_mse: float, flagged=()) -> List[TrialReport]:
    groups: Dict[tuple, List[float]] = {}
    for r in records:
        groups.setdefault((r.algorithm, r.kappa, r.theta), []).append(r.final_mse)
    out = []
    for key in sorted(groups):
        vals = np.array(groups[key])
        n = len(vals)
        with np.errstate(invalid="ignore", over="ignore"):
            mean = float(np.mean(vals))
            se = float(np.std(vals, ddof=1) / math.sqrt(n)) if n > 1 else math.nan
        div = int(np.sum(~(vals <= divergence_mse)))
        out.append(TrialReport(key[0], key[1], key[2], n, mean, se, div, (key[0], key[1]) in flagged))
    return out


@dataclass
class SweepResult:
    config: SweepConfig
    thresholds: List[ThresholdChoice]
    records: List[TrialRecord]
    reports: List[TrialReport]

    @property
    def diverged_fraction(self) -> float:
        total = sum(r.trials for r in self.reports)
        return sum(r.diverged for r in self.reports) / total if total else 0.0

    def report(self, algorithm: str, kappa: float) -> TrialReport:
        for r in self.reports:
            if r.algorithm == algorithm and r.kappa == float(kappa):
                return r
        raise KeyError((algorithm, kappa))


def run_sweep(cfg: SweepConfig, workers: int = 1, thetas: Optional[Dict[tuple, float]] = None) -> SweepResult:
    """Threshold search then ``cfg.trials`` paired runs per (algorithm, kappa).

    ``thetas`` maps ``(algorithm, kappa)`` to a fixed threshold and skips the
    search for those pairs. Outputs are written when ``cfg.output_path`` is set.
    """
    thetas = dict(thetas or {})
    choices: List[ThresholdChoice] = []
    jobs = []
    flagged = set()
    for kappa in cfg.condition_numbers:
        kappa = float(kappa)
        taps = prepare_taps(cfg.delta, kappa, cfg.T)
        for alg in cfg.algorithms:
            if (alg, kappa) in thetas:
                theta = float(thetas[(alg, kappa)])
            else:
                choice = threshold_search(cfg, alg, kappa, taps, workers)
                choices.append(choice)
                theta = choice.theta
                if choice.all_diverged:
                    flagged.add((alg, kappa))
            log.info("%s kappa=%g theta=%g", alg, kappa, theta)
            jobs.extend((cfg, alg, kappa, i, theta, taps, "trial") for i in range(cfg.trials))
    finals = _map(_work, jobs, workers)
    records = [TrialRecord(j[1], j[2], j[4], j[3], float(f)) for j, f in zip(jobs, finals)]
    records.sort(key=lambda r: (r.algorithm, r.kappa, r.trial))
    result = SweepResult(cfg, choices, records, aggregate(records, cfg.divergence_mse, flagged))
    if cfg.output_path:
        write_outputs(result, cfg.output_path)
    return result


def trials_csv(records: Sequence[TrialRecord]) -> str:
    return "\n".join([TRIAL_HEADER] + [r.csv() for r in records]) + "\n"


def aggregate_csv(reports: Sequence[TrialReport]) -> str:
    lines = [AGGREGATE_HEADER]
    for r in reports:
        lines.append(",".join([r.algorithm, fmt(r.kappa), fmt(r.theta), str(r.trials), fmt(r.mean_mse),
                               fmt(r.mean_mse_db), fmt(r.stderr_mse), str(r.diverged)]))
    return "\n".join(lines) + "\n"


def thresholds_csv(choices: Sequence[ThresholdChoice]) -> str:
    lines = [THRESHOLD_HEADER]
    for c in sorted(choices, key=lambda c: (c.algorithm, c.kappa)):
        for th, m, d in zip(c.grid, c.pilot_mean, c.pilot_diverged):
            lines.append(",".join([c.algorithm, fmt(c.kappa), fmt(th), fmt(m), str(d), str(int(th == c.theta))]))
    return "\n".join(lines) + "\n"


def emit_plot_data(reports: Sequence[TrialReport]) -> str:
    """One row per (algorithm, kappa): mean MSE in dB and its standard error."""
    lines = [PLOT_HEADER]
    for r in sorted(reports, key=lambda r: (r.algorithm, r.kappa)):
        lines.append(",".join([r.algorithm, fmt(r.kappa), fmt(r.mean_mse_db), fmt(r.stderr_db)]))
    return "\n".join(lines) + "\n"


def read_plot_data(text: str) -> Dict[str, List[Tuple[float, float, float]]]:
    series: Dict[str, List[Tuple[float, float, float]]] = {}
    for line in text.strip().splitlines()[1:]:
        alg, kappa, db, se = line.split(",")
        series.setdefault(alg, []).append((float(kappa), float(db), float(se)))
    return series


def write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def write_outputs(result: SweepResult, out_dir) -> Path:
    from camp.bench.plotting import plot_mse_vs_kappa

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_text(out / "trials.csv", trials_csv(result.records))
    write_text(out / "aggregate.csv", aggregate_csv(result.reports))
    write_text(out / "thresholds.csv", thresholds_csv(result.thresholds))
    plot = emit_plot_data(result.reports)
    write_text(out / "plot_data.csv", plot)
    plot_mse_vs_kappa(read_plot_data(plot), out / "mse_vs_kappa.png")
    return out
