"""Persistence for experiment runs: trace files, metadata, sweep layout.

Trace files are deterministic functions of (config, seed) so repeated
runs are byte-identical; anything wall-clock dependent lives in the
side-car meta file.  Missing values (no observation on the initial
snapshot row, no warp loss for unwarped methods) are written as empty
fields, never as non-finite numbers.
"""

import dataclasses
import hashlib
import json
import os
from pathlib import Path

import numpy as np

from .exceptions import DomainError, ShapeError
from .metrics import CurveSet

TRACE_SUFFIX = ".csv"
META_SUFFIX = ".meta.json"

# wall_ms is a fixed placeholder in traces so files stay byte-identical
# across replays; real timings are recorded in the meta file.
WALL_MS_SENTINEL = "0.0"


def code_version():
    """Short content hash over this package's source files."""
    digest = hashlib.sha256()
    for path in sorted(Path(__file__).parent.glob("*.py")):
        digest.update(path.name.encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()[:12]


def output_root(output_dir):
    """Resolve a sweep directory against the WARPAL_OUTPUT_ROOT env var."""
    path = Path(output_dir)
    root = os.environ.get("WARPAL_OUTPUT_ROOT")
    if root and not path.is_absolute():
        path = Path(root) / path
    return path


def trace_header(n_dims):
    xs = ",".join(f"x_{i}" for i in range(n_dims))
    return f"iter,{xs},y,mse,crps,dmse,ll_trace_final,flags,wall_ms"


def _field(value):
    if value is None:
        return ""
    value = float(value)
    if not np.isfinite(value):
        return ""
    return repr(value)


def render_trace(trace):
    n_dims = trace.config.n_dims
    lines = [trace_header(n_dims)]
    for rec in trace.records:
        xs = [""] * n_dims if rec.x is None else [_field(v) for v in rec.x]
        lines.append(",".join([
            str(rec.iteration), *xs, _field(rec.y), _field(rec.mse),
            _field(rec.crps), _field(rec.derivative_error),
            _field(rec.warp_loss), ";".join(rec.flags), WALL_MS_SENTINEL,
        ]))
    return "\n".join(lines) + "\n"


def run_paths(sweep_dir, benchmark, method, seed):
    stem = Path(sweep_dir) / benchmark / method / f"seed{seed:04d}"
    return (stem.with_suffix(TRACE_SUFFIX),
            stem.with_name(stem.name + META_SUFFIX))


def write_run(sweep_dir, benchmark, method, seed, trace, snapshot,
              wall_seconds, benchmark_metadata=None):
    """Persist one run; returns (trace_path, meta_path)."""
    trace_path, meta_path = run_paths(sweep_dir, benchmark, method, seed)
    trace_path.parent.mkdir(parents=True, exist_ok=True)
    trace_path.write_text(render_trace(trace))
    meta = {
        "benchmark": benchmark,
        "benchmark_metadata": {k: _jsonable(v) for k, v in
                               (benchmark_metadata or {}).items()},
        "method": method,
        "seed": seed,
        "config": snapshot,
        "flags": list(trace.flags),
        "iteration_wall_seconds": [rec.wall_seconds for rec in trace.records],
        "wall_seconds": wall_seconds,
        "code_version": code_version(),
    }
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return trace_path, meta_path


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


@dataclasses.dataclass(frozen=True)
class TraceData:
    """Parsed trace file: per-iteration metric columns plus flags."""

    iterations: np.ndarray
    X: np.ndarray
    y: np.ndarray
    metrics: dict
    flags: tuple

    @property
    def n_records(self):
        return self.iterations.size


def read_trace(path):
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise DomainError(f"empty trace file: {path}")
    header = lines[0].split(",")
    n_dims = sum(1 for name in header if name.startswith("x_"))
    expected = trace_header(n_dims).split(",")
    if header != expected:
        raise ShapeError(f"unexpected trace header in {path}: {lines[0]!r}")

    def parse(cell):
        return float(cell) if cell else np.nan

    rows = [line.split(",") for line in lines[1:] if line]
    iters = np.array([int(row[0]) for row in rows])
    X = np.array([[parse(c) for c in row[1:1 + n_dims]] for row in rows])
    y = np.array([parse(row[1 + n_dims]) for row in rows])
    cols = {name: np.array([parse(row[i]) for row in rows])
            for name, i in (("mse", n_dims + 2), ("crps", n_dims + 3),
                            ("dmse", n_dims + 4),
                            ("ll_trace_final", n_dims + 5))}
    flags = tuple(tuple(f for f in row[n_dims + 6].split(";") if f)
                  for row in rows)
    return TraceData(iterations=iters, X=X, y=y, metrics=cols, flags=flags)


def sweep_layout(sweep_dir):
    """Map {benchmark: {method: {seed: trace_path}}} for a sweep directory."""
    sweep_dir = Path(sweep_dir)
    layout = {}
    for trace_path in sorted(sweep_dir.glob(f"*/*/seed*{TRACE_SUFFIX}")):
        benchmark, method = trace_path.parts[-3], trace_path.parts[-2]
        seed = int(trace_path.stem.removeprefix("seed"))
        layout.setdefault(benchmark, {}).setdefault(method, {})[seed] = trace_path
    if not layout:
        raise DomainError(f"no trace files under {sweep_dir}")
    return layout


def stack_metric(trace_paths, metric):
    """(iterations, R x T metric matrix) over seed-sorted runs."""
    iterations = None
    rows = []
    for seed in sorted(trace_paths):
        trace = read_trace(trace_paths[seed])
        if iterations is None:
            iterations = trace.iterations
        elif not np.array_equal(iterations, trace.iterations):
            raise ShapeError(f"trace for seed {seed} has a different "
                             "iteration grid than its peers")
        rows.append(trace.metrics[metric])
    return iterations, np.array(rows)


def metric_curves(trace_paths, metric):
    """CurveSet over seed-sorted runs; None if the metric is unavailable."""
    _, values = stack_metric(trace_paths, metric)
    if not np.all(np.isfinite(values)):
        return None
    return CurveSet(values)
