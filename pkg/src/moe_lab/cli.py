"""Command-line interface.

Exit codes: 0 success, 1 failed check, 2 usage error, 3 I/O failure,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import SUITES, run_suite
from .errors import InitializationError, MoeLabError, ParameterError
from .estimation import FitOptions, fit_em
from .losses import SCENARIO_IDS, ParamPoint, all_metrics, d1, raw_errors
from .model import read_dataset_csv, read_model_json, sample_dataset, write_dataset_csv
from .ratelab.plotting import emit_svg
from .ratelab.report import emit_csv, slope_table, write_report_json
from .ratelab.runner import PROFILES, HellingerOptions, run_scenario
from .ratelab.scenarios import CASES, PRESETS, all_scenarios, make_scenario
from .ratelab.seeding import derive_seed

log = logging.getLogger("moe_lab")

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3, 4
SEED_ENV = "MOE_LAB_SEED"


class UsageError(Exception):
    pass


def _seed(args, config=None) -> int:
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from exc
    if args.seed is not None:
        return args.seed
    if config and "seed" in config:
        return int(config["seed"])
    return 0


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from exc


def _write_json(doc, path) -> None:
    text = json.dumps(doc, indent=2, ensure_ascii=False) + "\n"
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _parse_grid(text):
    if text is None:
        return None
    try:
        grid = [int(float(v)) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"bad --grid {text!r}") from exc
    return grid


def _scenario_settings(args, config):
    scenario = args.scenario or config.get("scenario")
    case = args.case or config.get("case")
    if scenario is None or case is None:
        raise UsageError("--scenario and --case are required (flag or config)")
    profile_grid, profile_reps = PROFILES[getattr(args, "profile", None) or "full"]
    grid = _parse_grid(args.grid) or config.get("grid") or list(profile_grid)
    reps = args.reps if args.reps is not None else int(config.get("reps", profile_reps))
    try:
        spec = make_scenario(scenario, case)
    except ParameterError as exc:
        raise UsageError(str(exc)) from exc
    return spec, [int(n) for n in grid], reps


def _provenance(args, **extra):
    doc = {"version": __version__, "command": args.command}
    doc.update(extra)
    return doc


# --- subcommands ------------------------------------------------------------------

def cmd_generate(args) -> int:
    if args.n < 1:
        raise UsageError("--n must be at least 1")
    try:
        spec = make_scenario(args.scenario, args.case)
    except ParameterError as exc:
        raise UsageError(str(exc)) from exc
    seed = _seed(args)
    truth = spec.truth_model(args.n)
    data = sample_dataset(truth, args.n, np.random.default_rng(derive_seed(seed, spec.key, args.n)))
    out = Path(args.out)
    truth_path = Path(args.truth_out) if args.truth_out else out.with_name("truth.json")
    write_dataset_csv(data, out)
    doc = truth.to_json()
    doc["provenance"] = _provenance(args, scenario=spec.id, case=spec.case, n=args.n, seed=seed)
    _write_json(doc, truth_path)
    log.info("wrote %d rows to %s and truth to %s", data.n, out, truth_path)
    return EXIT_OK


def cmd_fit(args) -> int:
    config = _load_config(args.config)
    opts = FitOptions.from_json(config.get("fit"))
    data = read_dataset_csv(args.data)
    # the frozen base and the near-truth start both come from the truth file
    truth_doc = json.loads(Path(args.truth).read_text(encoding="utf-8"))
    truth = read_model_json(args.truth)
    seed = _seed(args, config)
    t0 = time.perf_counter()
    res = fit_em(truth, truth.sigma, data, (truth.lam, truth.G), opts, np.random.default_rng(seed))
    log.info("fit finished in %.3fs after %d EM iterations", time.perf_counter() - t0, res.iters)
    doc = res.to_json()
    point_true, point_hat = ParamPoint(truth.lam, truth.G), ParamPoint(res.lambda_hat, res.G_hat)
    scenario = truth_doc.get("provenance", {}).get("scenario")
    if scenario in SCENARIO_IDS:
        doc["errors"] = all_metrics(scenario, point_true, point_hat, truth.G0)
    else:
        doc["errors"] = dict(raw_errors(point_true, point_hat), d1=d1(point_hat, point_true))
    doc["provenance"] = _provenance(args, data=str(args.data), truth=str(args.truth), seed=seed,
                                    n=data.n, fit_options=opts.to_json())
    _write_json(doc, args.out)
    return EXIT_OK


def _emit_report(report, outdir: Path) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    write_report_json(report, outdir / "report.json")
    emit_csv(report, outdir / "long.csv", outdir / "summary.csv")
    emit_svg(report, outdir / "rates.svg")


def _hellinger_opts(args, config):
    doc = dict(config.get("hellinger") or {})
    if getattr(args, "hellinger", False):
        doc["enabled"] = True
    if getattr(args, "mc", None) is not None:
        doc["mc_n"] = args.mc
    return HellingerOptions.from_json(doc)


def cmd_run_scenario(args) -> int:
    config = _load_config(args.config)
    spec, grid, reps = _scenario_settings(args, config)
    opts = FitOptions.from_json(config.get("fit"))
    hell = _hellinger_opts(args, config)
    seed = _seed(args, config)
    t0 = time.perf_counter()
    report = run_scenario(spec, grid, reps, seed, opts, hell, jobs=args.jobs)
    log.info("%s finished in %.1fs", spec.label, time.perf_counter() - t0)
    _emit_report(report, Path(args.outdir))
    print(slope_table(report, [m for m in ("err_lambda", "err_a", "err_b", "err_nu", "hellinger")
                               if m in report.slopes]))
    return EXIT_OK


def cmd_rates_all(args) -> int:
    config = _load_config(args.config)
    opts = FitOptions.from_json(config.get("fit"))
    hell = _hellinger_opts(args, config)
    seed = _seed(args, config)
    grid, reps = PROFILES[args.profile]
    if args.reps is not None:
        reps = args.reps
    outdir = Path(args.outdir)
    rows = []
    for sid, case in all_scenarios():
        spec = make_scenario(sid, case)
        report = run_scenario(spec, grid, reps, seed, opts, hell, jobs=args.jobs)
        _emit_report(report, outdir / f"{sid}_{case}")
        print(slope_table(report, ["err_lambda", "err_a", "err_b", "err_nu"]))
        for metric, fit in report.slopes.items():
            if fit is not None:
                rows.append(f"{sid},{case},{metric},{fit.slope!r},{fit.intercept!r},{fit.r2!r}")
    (outdir / "slopes.csv").write_text("scenario,case,metric,slope,intercept,r2\n" + "\n".join(rows) + "\n",
                                       encoding="utf-8")
    return EXIT_OK


def cmd_hellinger(args) -> int:
    config = _load_config(args.config)
    spec, grid, reps = _scenario_settings(args, config)
    opts = FitOptions.from_json(config.get("fit"))
    mc = args.mc if args.mc is not None else int((config.get("hellinger") or {}).get("mc_n", 20000))
    if mc < 1000:
        raise UsageError("--mc must be at least 1000")
    hell = HellingerOptions(True, mc, (config.get("hellinger") or {}).get("estimator", "squared"))
    seed = _seed(args, config)
    report = run_scenario(spec, grid, reps, seed, opts, hell, jobs=args.jobs)
    fit = report.slopes.get("hellinger")
    doc = {
        "scenario": spec.id,
        "case": spec.case,
        "per_n": [{"n": s.n, "mean_hellinger": s.mean["hellinger"], "stderr": s.stderr["hellinger"],
                   "mean_mc_se": s.mean["hellinger_se"]} for s in report.per_n],
        "slope": fit._asdict() if fit else None,
        "provenance": report.provenance,
    }
    if args.outdir:
        _emit_report(report, Path(args.outdir))
        _write_json(doc, Path(args.outdir) / "hellinger.json")
    _write_json(doc, None)
    return EXIT_OK


def cmd_check(args) -> int:
    seed = _seed(args)
    results = run_suite(args.suite, np.random.default_rng(seed))
    failures = [r.name for r in results if not r.passed]
    _write_json({"suite": args.suite, "seed": seed, "passed": not failures, "failures": failures,
                 "checks": [r.to_json() for r in results]}, args.out)
    return EXIT_CHECK if failures else EXIT_OK


# --- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="moe-lab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_flags(sp, required=True):
        sp.add_argument("--scenario", choices=sorted(PRESETS), required=required)
        sp.add_argument("--case", choices=CASES, required=required)

    def common(sp):
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--config", default=None, help="JSON config file")
        sp.add_argument("--jobs", type=int, default=None, help="worker processes (default: all cores)")

    g = sub.add_parser("generate", help="sample a dataset from a scenario truth")
    scenario_flags(g)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--out", required=True, help="dataset CSV path")
    g.add_argument("--truth-out", default=None, help="truth JSON path (default: truth.json beside --out)")
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("fit", help="fit the MLE to a dataset")
    f.add_argument("--data", required=True)
    f.add_argument("--truth", required=True, help="model JSON with the frozen base")
    f.add_argument("--config", default=None)
    f.add_argument("--seed", type=int, default=None)
    f.add_argument("--out", default=None, help="result JSON path (default: stdout)")
    f.set_defaults(func=cmd_fit)

    r = sub.add_parser("run-scenario", help="replicate fits over a sample-size grid")
    scenario_flags(r, required=False)
    common(r)
    r.add_argument("--grid", default=None, help="comma-separated sample sizes")
    r.add_argument("--profile", choices=sorted(PROFILES), default="full")
    r.add_argument("--reps", type=int, default=None)
    r.add_argument("--hellinger", action="store_true", help="also estimate Hellinger distances")
    r.add_argument("--mc", type=int, default=None, help="Monte-Carlo draws per Hellinger estimate")
    r.add_argument("--outdir", required=True)
    r.set_defaults(func=cmd_run_scenario)

    a = sub.add_parser("rates-all", help="run every scenario preset")
    common(a)
    a.add_argument("--profile", choices=sorted(PROFILES), default="ci")
    a.add_argument("--reps", type=int, default=None)
    a.add_argument("--hellinger", action="store_true")
    a.add_argument("--mc", type=int, default=None)
    a.add_argument("--outdir", required=True)
    a.set_defaults(func=cmd_rates_all)

    h = sub.add_parser("hellinger", help="density-estimation rate in Hellinger distance")
    scenario_flags(h, required=False)
    common(h)
    h.add_argument("--grid", default=None)
    h.add_argument("--profile", choices=sorted(PROFILES), default="full")
    h.add_argument("--reps", type=int, default=None)
    h.add_argument("--mc", type=int, default=None)
    h.add_argument("--outdir", default=None)
    h.set_defaults(func=cmd_hellinger)

    c = sub.add_parser("check", help="run numerical self-checks")
    c.add_argument("--suite", choices=SUITES + ("all",), default="all")
    c.add_argument("--seed", type=int, default=None)
    c.add_argument("--out", default=None, help="report JSON path (default: stdout)")
    c.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"moe-lab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InitializationError as exc:
        print(f"moe-lab: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"moe-lab: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except MoeLabError as exc:
        if isinstance(exc, ValueError):
            print(f"moe-lab: error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        print(f"moe-lab: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FloatingPointError as exc:
        print(f"moe-lab: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
