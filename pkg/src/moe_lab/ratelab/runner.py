"""Seeded replicate execution over a sample-size grid."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import __version__
from ..errors import FitError, ParameterError
from ..estimation import FitOptions, fit_em
from ..losses import ParamPoint, all_metrics
from ..model import hellinger_mc, sample_dataset
from .scenarios import ScenarioSpec, make_scenario
from .seeding import derive_seed
from .slopes import fit_slope

DEFAULT_GRID = tuple(int(round(10 ** e)) for e in (3.0, 3.5, 4.0, 4.5, 5.0))
CI_GRID = (1000, 3000, 10000)
PROFILES = {"full": (DEFAULT_GRID, 20), "ci": (CI_GRID, 10)}


@dataclass(frozen=True)
class HellingerOptions:
    enabled: bool = False
    mc_n: int = 20000
    estimator: str = "squared"

    def __post_init__(self):
        if self.enabled and self.mc_n < 1000:
            raise ParameterError("hellinger mc_n must be at least 1000")

    @classmethod
    def from_json(cls, doc) -> "HellingerOptions":
        return cls(**(doc or {}))


@dataclass
class CellResult:
    """One (n, rep) replicate."""

    n: int
    rep: int
    seed: int
    metrics: dict
    converged: bool
    iters: int
    max_loglik_drop: float  # largest per-iteration decrease, in nats per sample
    diagnostics: dict

    def to_json(self):
        return asdict(self)


@dataclass
class Summary:
    n: int
    reps: int
    mean: dict
    stderr: dict
    median: dict
    n_unconverged: int
    unreliable: bool
    cells: list = field(default_factory=list)

    def to_json(self, with_cells=True):
        doc = {k: v for k, v in asdict(self).items() if k != "cells"}
        if with_cells:
            doc["cells"] = [c.to_json() for c in self.cells]
        return doc


def cell_seed(spec: ScenarioSpec, n: int, rep: int, base_seed: int) -> int:
    return derive_seed(base_seed, spec.key, n, rep)


def run_cell(spec: ScenarioSpec, n: int, rep: int, base_seed: int,
             fit_options: FitOptions | None = None,
             hellinger: HellingerOptions | None = None) -> CellResult:
    fit_options = fit_options or FitOptions()
    seed = cell_seed(spec, n, rep, base_seed)
    data_ss, init_ss, mc_ss = np.random.SeedSequence(seed).spawn(3)
    truth = spec.truth(n)
    truth_model = spec.truth_model(n)
    data = sample_dataset(truth_model, n, np.random.default_rng(data_ss))
    res = fit_em(truth_model, spec.sigma, data, (truth.lam, truth.G), fit_options,
                 np.random.default_rng(init_ss))
    est = ParamPoint(res.lambda_hat, res.G_hat)
    metrics = all_metrics(spec.id, truth, est, spec.G0)
    if hellinger is not None and hellinger.enabled:
        h = hellinger_mc(truth_model, res.model(truth_model), hellinger.mc_n,
                         np.random.default_rng(mc_ss), hellinger.estimator)
        metrics["hellinger"] = h.h
        metrics["hellinger_se"] = h.se
    hist = np.asarray(res.loglik_history)
    drop = float(np.max(hist[:-1] - hist[1:]) / n) if hist.size > 1 else 0.0
    return CellResult(n, rep, seed, metrics, res.converged, res.iters, drop,
                      asdict(res.diagnostics))


def summarize(n: int, cells: list) -> Summary:
    reps = len(cells)
    names = list(cells[0].metrics) if cells else []
    mean, stderr, median = {}, {}, {}
    for name in names:
        vals = np.array([c.metrics[name] for c in cells], dtype=float)
        mean[name] = float(np.mean(vals))
        median[name] = float(np.median(vals))
        stderr[name] = float(np.std(vals, ddof=1) / math.sqrt(reps)) if reps > 1 else math.nan
    bad = sum(not c.converged for c in cells)
    return Summary(n, reps, mean, stderr, median, bad, bad > reps / 2, list(cells))


def _cell_task(args):
    return run_cell(*args)


def _run_cells(tasks, jobs):
    if jobs is None:
        jobs = os.cpu_count() or 1
    if jobs <= 1 or len(tasks) <= 1:
        return [_cell_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_cell_task, tasks, chunksize=1))


def run_replicates(spec: ScenarioSpec, n: int, reps: int, base_seed: int,
                   fit_options: FitOptions | None = None,
                   hellinger: HellingerOptions | None = None, jobs: int | None = 1) -> Summary:
    if reps < 1:
        raise ParameterError("reps must be at least 1")
    tasks = [(spec, n, rep, base_seed, fit_options, hellinger) for rep in range(reps)]
    return summarize(n, _run_cells(tasks, jobs))


@dataclass
class RateReport:
    scenario: str
    case: str
    per_n: list
    slopes: dict
    provenance: dict

    def means(self, metric):
        return [(s.n, s.mean[metric]) for s in self.per_n if metric in s.mean]

    def to_json(self) -> dict:
        return {
            "scenario": self.scenario,
            "case": self.case,
            "per_n": [s.to_json() for s in self.per_n],
            "slopes": {k: v._asdict() if v is not None else None for k, v in self.slopes.items()},
            "provenance": self.provenance,
        }


def slopes_for(per_n) -> dict:
    names = list(per_n[0].mean) if per_n else []
    out = {}
    for name in names:
        pts = [(s.n, s.mean[name]) for s in per_n]
        try:
            out[name] = fit_slope(pts)
        except FitError:
            out[name] = None
    return out


def run_scenario(spec: ScenarioSpec, grid, reps: int, base_seed: int,
                 fit_options: FitOptions | None = None,
                 hellinger: HellingerOptions | None = None, jobs: int | None = 1) -> RateReport:
    grid = [int(n) for n in grid]
    if len(grid) < 3 or grid != sorted(grid):
        raise ParameterError("grid must be sorted ascending with at least 3 sizes")
    if reps < 1:
        raise ParameterError("reps must be at least 1")
    fit_options = fit_options or FitOptions()
    spec.check_grid(grid, fit_options.theta_bounds)
    tasks = [(spec, n, rep, base_seed, fit_options, hellinger) for n in grid for rep in range(reps)]
    results = _run_cells(tasks, jobs)
    results.sort(key=lambda c: (c.n, c.rep))
    per_n = [summarize(n, [c for c in results if c.n == n]) for n in grid]
    provenance = {
        "scenario": spec.to_json(),
        "seed": base_seed,
        "grid": grid,
        "reps": reps,
        "fit_options": fit_options.to_json(),
        "hellinger": asdict(hellinger) if hellinger else asdict(HellingerOptions()),
        "version": __version__,
    }
    return RateReport(spec.id, spec.case, per_n, slopes_for(per_n), provenance)


def rerun_from_provenance(prov: dict, jobs: int | None = 1) -> RateReport:
    sc = prov["scenario"]
    spec = make_scenario(sc["id"], sc["case"], d=sc["d"], nu0=sc["G0"]["nu0"])
    return run_scenario(spec, prov["grid"], prov["reps"], prov["seed"],
                        FitOptions.from_json(prov["fit_options"]),
                        HellingerOptions.from_json(prov["hellinger"]), jobs)
