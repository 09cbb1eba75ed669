"""Command-line experiment driver.

Subcommands: ``run`` executes a seeded (benchmark x method) sweep from a
YAML config, ``report`` turns a finished sweep into a percent-reduction
table, ``export`` writes plot-ready per-metric files, and ``check``
runs the fast self-verification suite.  Config files mirror the
experiment fields exactly; command-line overrides supersede file values
and are recorded in each run's config snapshot.
"""

import argparse
import dataclasses
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from .acquisition import AcquisitionConfig
from .active_loop import (DEFAULT_NOISE_SCALE, INIT_KINDS, LoopConfig,
                          noisy_oracle, run_active_loop)
from .benchmarks import BENCHMARK_NAMES, get_benchmark
from .checks import run_checks
from .exceptions import ShapeError, ValidationError
from .metrics import area_reduction, as_percent, eval_grid_for
from .runio import (metric_curves, output_root, stack_metric, sweep_layout,
                    write_run)
from .seeding import child_rng
from .warp_training import WarpTrainConfig

# Method registry: display order is also the stable column order used by
# report and export.
METHODS = {
    "baseline": ("identity", None),
    "kumaraswamy_ss": ("kumaraswamy", "self_supervised"),
    "kumaraswamy_mll": ("kumaraswamy", "mll"),
    "crqs_ss": ("crqs", "self_supervised"),
    "crqs_mll": ("crqs", "mll"),
}
REPORT_METRICS = ("mse", "crps", "dmse")
DEFAULT_N_SEEDS = 10
DEFAULT_EVAL_POINTS = 256


class ConfigError(Exception):
    """Invalid experiment configuration; maps to exit code 2."""


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    benchmark: tuple
    method: tuple
    loop: dict
    n_seeds: int = DEFAULT_N_SEEDS
    seed_base: int = 0
    output_dir: str = "runs"


_LOOP_KEYS = {
    "budget": int, "init_kind": str, "n_init": int,
    "budget_counts_init": bool, "noise_scale": float,
    "n_eval_points": int, "warp_train": dict, "acq": dict,
    "warp_options": dict,
}


def _names(value, field, registry):
    names = [value] if isinstance(value, str) else list(value or [])
    if not names:
        raise ConfigError(f"config field '{field}' must name at least one "
                          f"of {sorted(registry)}")
    for name in names:
        if name not in registry:
            raise ConfigError(f"unknown {field} {name!r}; "
                              f"choose from {sorted(registry)}")
    return tuple(names)


def _check_sub_keys(mapping, allowed, where):
    unknown = set(mapping) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in '{where}'; "
                          f"allowed: {sorted(allowed)}")


def parse_config(path):
    """Load and validate a config file; ConfigError on any problem."""
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = (f" at line {mark.line + 1}, column {mark.column + 1}"
                 if mark else "")
        raise ConfigError(f"unparseable config {path}{where}: "
                          f"{getattr(exc, 'problem', exc)}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a key/value mapping "
                          "at line 1, column 1")

    allowed = {f.name for f in dataclasses.fields(ExperimentConfig)}
    _check_sub_keys(raw, allowed, "config")
    loop = dict(raw.get("loop") or {})
    _check_sub_keys(loop, _LOOP_KEYS, "loop")
    if "init_kind" in loop and loop["init_kind"] not in INIT_KINDS:
        raise ConfigError(f"unknown init_kind {loop['init_kind']!r}; "
                          f"choose from {sorted(INIT_KINDS)}")
    for sub, fields in (("warp_train", WarpTrainConfig),
                        ("acq", AcquisitionConfig)):
        names = {f.name for f in dataclasses.fields(fields)} - {"objective"}
        _check_sub_keys(dict(loop.get(sub) or {}), names, f"loop.{sub}")

    try:
        return ExperimentConfig(
            benchmark=_names(raw.get("benchmark"), "benchmark",
                             BENCHMARK_NAMES),
            method=_names(raw.get("method"), "method", METHODS),
            loop=loop,
            n_seeds=int(raw.get("n_seeds", DEFAULT_N_SEEDS)),
            seed_base=int(raw.get("seed_base", 0)),
            output_dir=str(raw.get("output_dir", "runs")),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config value: {exc}") from exc


def _apply_overrides(config, args):
    updates = {}
    if args.seed_base is not None:
        updates["seed_base"] = args.seed_base
    if args.method is not None:
        updates["method"] = _names(args.method, "method", METHODS)
    if args.benchmark is not None:
        updates["benchmark"] = _names(args.benchmark, "benchmark",
                                      BENCHMARK_NAMES)
    if args.budget is not None:
        updates["loop"] = {**config.loop, "budget": args.budget}
    return dataclasses.replace(config, **updates) if updates else config


def run_specs(config):
    """One picklable spec dict per (benchmark, method, seed) run."""
    sweep_dir = str(output_root(config.output_dir))
    specs = []
    for benchmark in config.benchmark:
        for method in config.method:
            for k in range(config.n_seeds):
                specs.append({
                    "benchmark": benchmark,
                    "method": method,
                    "seed": config.seed_base + k,
                    "loop": config.loop,
                    "sweep_dir": sweep_dir,
                })
    return specs


def execute_run(spec):
    """Run one (benchmark, method, seed) experiment and persist it.

    Returns a summary dict; never raises (failures are reported in the
    'error' field so sibling runs keep going).
    """
    started = time.perf_counter()
    try:
        loop = spec["loop"]
        benchmark = get_benchmark(spec["benchmark"], seed=spec["seed"])
        grid = eval_grid_for(benchmark, spec["seed"],
                             loop.get("n_eval_points", DEFAULT_EVAL_POINTS))
        warp_kind, objective = METHODS[spec["method"]]
        warp_train = WarpTrainConfig(
            objective=objective or "self_supervised",
            **dict(loop.get("warp_train") or {}))
        cfg = LoopConfig(
            n_dims=benchmark.n_dims,
            budget=loop.get("budget", 100),
            init_kind=loop.get("init_kind", "sobol"),
            n_init=loop.get("n_init"),
            warp_kind=warp_kind,
            warp_train=warp_train,
            acq=AcquisitionConfig(**dict(loop.get("acq") or {})),
            seed=spec["seed"],
            eval_grid=grid,
            budget_counts_init=loop.get("budget_counts_init", True),
            warp_options=dict(loop.get("warp_options") or {}),
        )
        oracle = noisy_oracle(benchmark,
                              loop.get("noise_scale", DEFAULT_NOISE_SCALE),
                              child_rng(spec["seed"], "noise"))
        trace = run_active_loop(oracle, cfg)
        wall = time.perf_counter() - started
        trace_path, _ = write_run(
            spec["sweep_dir"], spec["benchmark"], spec["method"],
            spec["seed"], trace, snapshot=_snapshot(spec), wall_seconds=wall,
            benchmark_metadata=benchmark.metadata)
        return {**_key(spec), "completed": True, "error": "",
                "flags": sorted(set(trace.flags)), "wall_seconds": wall,
                "trace": str(trace_path)}
    except Exception as exc:
        return {**_key(spec), "completed": False,
                "error": f"{type(exc).__name__}: {exc}",
                "flags": [], "wall_seconds": time.perf_counter() - started,
                "trace": ""}


def _key(spec):
    return {k: spec[k] for k in ("benchmark", "method", "seed")}


def _snapshot(spec):
    return {k: spec[k] for k in ("benchmark", "method", "seed", "loop")}


def cmd_run(args):
    try:
        config = _apply_overrides(parse_config(args.config), args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    specs = run_specs(config)
    sweep_dir = Path(specs[0]["sweep_dir"])
    sweep_dir.mkdir(parents=True, exist_ok=True)
    print(f"{len(specs)} run(s) -> {sweep_dir}")

    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(execute_run, specs))
    else:
        results = [execute_run(spec) for spec in specs]

    for res in results:
        status = "ok" if res["completed"] else f"FAILED: {res['error']}"
        flags = ",".join(res["flags"]) or "-"
        print(f"[{status}] {res['benchmark']} {res['method']} "
              f"seed {res['seed']} ({res['wall_seconds']:.1f}s, "
              f"flags: {flags})")
    summary = {
        "config": dataclasses.asdict(config),
        "runs": results,
        "n_failed": sum(not r["completed"] for r in results),
    }
    (sweep_dir / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return 0 if summary["n_failed"] == 0 else 1


def _matched_seeds(methods, baseline):
    problems = []
    base_seeds = set(methods[baseline])
    for name, traces in methods.items():
        missing = sorted(base_seeds - set(traces))
        extra = sorted(set(traces) - base_seeds)
        if missing:
            problems.append(f"{name} is missing seeds {missing}")
        if extra:
            problems.append(f"{baseline} is missing seeds {extra} "
                            f"present in {name}")
    return problems


def cmd_report(args):
    sweep_dir = output_root(args.sweep_dir)
    try:
        layout = sweep_layout(sweep_dir)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    baseline = args.baseline
    entries = []
    lines = []
    for benchmark in sorted(layout):
        methods = layout[benchmark]
        if baseline not in methods:
            print(f"error: no {baseline!r} runs for {benchmark}",
                  file=sys.stderr)
            return 1
        problems = _matched_seeds(methods, baseline)
        if problems:
            print(f"error: seed mismatch under {benchmark}: "
                  + "; ".join(problems), file=sys.stderr)
            return 1
        others = [m for m in METHODS if m in methods and m != baseline]
        if not others:
            print(f"error: only {baseline!r} runs under {benchmark}",
                  file=sys.stderr)
            return 1
        n_seeds = len(methods[baseline])
        lines.append(f"== {benchmark} (baseline: {baseline}, "
                     f"{n_seeds} seeds, percent area reduction) ==")
        width = max(len("method"), max(len(m) for m in others))
        lines.append(f"{'method':<{width}}  "
                     + "  ".join(f"{m:>16}" for m in REPORT_METRICS))
        for method in others:
            cells = []
            for metric in REPORT_METRICS:
                base_curves = metric_curves(methods[baseline], metric)
                run_curves = metric_curves(methods[method], metric)
                if base_curves is None or run_curves is None:
                    cells.append(f"{'n/a':>16}")
                    continue
                mean, variance = area_reduction(run_curves, base_curves)
                pct, std = as_percent(mean, variance)
                cells.append(f"{pct:8.2f} ± {std:5.2f}")
                entries.append({
                    "benchmark": benchmark, "method": method,
                    "metric": metric, "percent": pct, "std": std,
                    "mean_ratio": mean, "variance": variance,
                })
            lines.append(f"{method:<{width}}  " + "  ".join(cells))
        lines.append("")
    report = {"baseline": baseline, "entries": entries}
    report_path = Path(sweep_dir) / "report.json"
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True)
                           + "\n")
    print("\n".join(lines).rstrip())
    print(f"\nmachine-readable copy: {report_path}")
    return 0


def cmd_export(args):
    sweep_dir = output_root(args.sweep_dir)
    try:
        layout = sweep_layout(sweep_dir)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    export_dir = Path(sweep_dir) / "export"
    export_dir.mkdir(exist_ok=True)
    written = []
    for benchmark in sorted(layout):
        methods = [m for m in METHODS if m in layout[benchmark]]
        for metric in REPORT_METRICS:
            columns = {}
            iterations = None
            for method in methods:
                iters, values = stack_metric(layout[benchmark][method],
                                             metric)
                if not np.all(np.isfinite(values)):
                    continue
                if iterations is None:
                    iterations = iters
                elif not np.array_equal(iterations, iters):
                    raise ShapeError(f"{benchmark}/{method} iteration grid "
                                     "differs from other methods")
                std = (np.std(values, axis=0, ddof=1)
                       if values.shape[0] > 1
                       else np.zeros(values.shape[1]))
                columns[method] = (np.mean(values, axis=0), std)
            if not columns:
                continue
            path = export_dir / f"{benchmark}_{metric}.csv"
            header = "iteration," + ",".join(
                f"{m}_mean,{m}_std" for m in columns)
            rows = [header]
            for i, iteration in enumerate(iterations):
                cells = [str(int(iteration))]
                for mean, std in columns.values():
                    cells += [repr(float(mean[i])), repr(float(std[i]))]
                rows.append(",".join(cells))
            path.write_text("\n".join(rows) + "\n")
            written.append(path)
            print(path)
    if not written:
        print("error: no complete metric columns to export", file=sys.stderr)
        return 1
    return 0


def cmd_check(args):
    results = run_checks(perturb_kernel=args.perturb_kernel)
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        print(f"{status}  {res.name}  ({res.seconds:.2f}s)  {res.detail}")
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="warpal",
        description="Active-learning experiment driver for warped GPs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a sweep from a config file")
    p_run.add_argument("config")
    p_run.add_argument("--seed-base", type=int, default=None)
    p_run.add_argument("--jobs", type=int, default=1)
    p_run.add_argument("--budget", type=int, default=None)
    p_run.add_argument("--method", default=None)
    p_run.add_argument("--benchmark", default=None)
    p_run.set_defaults(fn=cmd_run)

    p_report = sub.add_parser("report",
                              help="summarize a sweep as percent reductions")
    p_report.add_argument("sweep_dir")
    p_report.add_argument("--baseline", required=True)
    p_report.set_defaults(fn=cmd_report)

    p_export = sub.add_parser("export", help="write plot-ready metric files")
    p_export.add_argument("sweep_dir")
    p_export.set_defaults(fn=cmd_export)

    p_check = sub.add_parser("check", help="run the self-verification suite")
    p_check.add_argument("--perturb-kernel", action="store_true",
                         help=argparse.SUPPRESS)
    p_check.set_defaults(fn=cmd_check)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.fn is cmd_report and args.baseline not in METHODS:
        print(f"error: unknown method {args.baseline!r}; "
              f"choose from {sorted(METHODS)}", file=sys.stderr)
        return 2
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
