"""Alternating fit-then-acquire active learning, end to end.

One run: observe an initial design, then repeat until the budget is
spent: refit kernel hyperparameters on plain inputs (warp frozen), train
the warp (hyperparameters frozen), propose the next input by expected
information gain on the warped surrogate, observe it, and record
metrics.  All reported metrics come from the plain-input surrogate; the
warp only steers acquisition.

Every stochastic ingredient draws from a labelled child stream of the
run seed, so the trace is a pure function of (config, oracle).  Any
numerical failure inside a round degrades that round to the identity
warp, flags the record, and lets the run continue.
"""

import copy
import time
from dataclasses import dataclass, field

import numpy as np

from . import acquisition, gp, metrics
from .benchmarks import clean_std
from .exceptions import (AcquisitionError, DomainError, IllConditionedError,
                         ShapeError, ValidationError)
from .sampling import sobol_points
from .seeding import child_rng, child_seed_int
from .validation import as_matrix, check_unit_cube
from .warp_training import WarpTrainConfig, build_reference, train_warp
from .warps import IdentityWarp, make_warp

INIT_KINDS = ("sobol", "farthest_point")
FARTHEST_POOL_SIZE = 2048

DEFAULT_NOISE_SCALE = 0.05

# failures a round is allowed to swallow by degrading to the identity warp
RECOVERABLE = (ValidationError, IllConditionedError, AcquisitionError,
               FloatingPointError)


@dataclass(frozen=True)
class LoopConfig:
    """Everything one active-learning run needs besides the oracle."""

    n_dims: int
    budget: int = 100
    init_kind: str = "sobol"
    n_init: int = None
    warp_kind: str = "identity"
    warp_train: WarpTrainConfig = field(default_factory=WarpTrainConfig)
    acq: acquisition.AcquisitionConfig = field(
        default_factory=acquisition.AcquisitionConfig)
    seed: int = 0
    eval_grid: metrics.EvalGrid = None
    crps_targets: np.ndarray = None
    budget_counts_init: bool = True
    warp_options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_dims < 1:
            raise DomainError("n_dims must be >= 1")
        if self.init_kind not in INIT_KINDS:
            raise DomainError(f"init_kind must be one of {INIT_KINDS}")
        if self.n_init is None:
            object.__setattr__(self, "n_init", 10 * self.n_dims)
        if self.n_init < 1:
            raise DomainError("n_init must be >= 1")
        if self.budget_counts_init and self.budget <= self.n_init:
            raise DomainError("budget must exceed the initial design size")
        if self.crps_targets is not None:
            t = np.asarray(self.crps_targets, dtype=float).ravel()
            if self.eval_grid is None or t.size != self.eval_grid.n_points:
                raise ShapeError(
                    "crps_targets must match the evaluation grid length")
            object.__setattr__(self, "crps_targets", t)

    @property
    def total_observations(self):
        if self.budget_counts_init:
            return self.budget
        return self.n_init + self.budget


@dataclass(frozen=True)
class IterationRecord:
    """State of the run after one observation (or the initial design)."""

    iteration: int
    x: np.ndarray
    y: float
    hyperparams: gp.GPHyperparams
    warp_loss: float
    mse: float
    crps: float
    derivative_error: float
    flags: tuple
    wall_seconds: float


@dataclass
class RunTrace:
    config: LoopConfig
    records: list
    final_state: gp.GPState
    final_warp: object
    flags: tuple

    def metric_curve(self, name):
        return np.array([getattr(r, name) for r in self.records])


@dataclass(frozen=True)
class NoisyOracle:
    """Observation function y = f(x) + Gaussian noise.

    The noise standard deviation is ``noise_scale`` times the clean
    function's spread over a dense quasi-random sweep, so a constant
    function (or a zero scale) observes noise-free.  The noise level is
    deliberately not exposed to the surrogate.
    """

    benchmark: object
    noise_std: float
    rng: object

    def __call__(self, X):
        f = self.benchmark.evaluate(X)
        if self.noise_std == 0.0:
            return f
        return f + self.rng.normal(0.0, self.noise_std, size=f.shape)


def noisy_oracle(benchmark, noise_scale, rng):
    if noise_scale < 0.0:
        raise DomainError("noise_scale must be >= 0")
    return NoisyOracle(benchmark, noise_scale * clean_std(benchmark), rng)


def init_design(kind, n, n_dims, rng, pool=None):
    """Initial input locations in the unit cube.

    ``sobol`` takes the first n points of a scrambled Sobol sequence.
    ``farthest_point`` greedily max-min selects n points from a candidate
    pool (a fresh Sobol pool when none is given), seeded at the pool
    point nearest the cube center.
    """
    if n < 1:
        raise DomainError("initial design needs n >= 1")
    if kind == "sobol":
        return sobol_points(n, n_dims, seed=rng)
    if kind != "farthest_point":
        raise DomainError(f"unknown init design kind {kind!r}")
    if pool is None:
        pool = sobol_points(FARTHEST_POOL_SIZE, n_dims, seed=rng)
    pool = check_unit_cube(as_matrix(pool, "pool", n_cols=n_dims), "pool")
    if pool.shape[0] < n:
        raise DomainError(
            f"pool of {pool.shape[0]} points cannot supply {n} design points")
    center_gap = np.linalg.norm(pool - 0.5, axis=1)
    chosen = [int(np.argmin(center_gap))]
    dmin = np.linalg.norm(pool - pool[chosen[0]], axis=1)
    while len(chosen) < n:
        nxt = int(np.argmax(dmin))
        chosen.append(nxt)
        dmin = np.minimum(dmin, np.linalg.norm(pool - pool[nxt], axis=1))
    return pool[chosen]


def _scored(dataset, hyperparams, cfg):
    """Plain-input surrogate plus its metric values on the eval grid."""
    state = gp.condition(dataset, hyperparams)
    if cfg.eval_grid is None:
        return state, float("nan"), float("nan"), float("nan")
    m = metrics.mse(state, cfg.eval_grid)
    if cfg.crps_targets is not None:
        c = metrics.crps(state, cfg.eval_grid, observation_noise=True,
                         targets=cfg.crps_targets)
    else:
        c = metrics.crps(state, cfg.eval_grid)
    d = (metrics.mean_derivative_error(state, cfg.eval_grid)
         if cfg.eval_grid.grad_clean is not None else float("nan"))
    return state, m, c, d


def run_active_loop(oracle, cfg):
    """Run one seeded acquisition loop to its observation budget.

    The oracle must accept unit-cube rows and return one value per row;
    reproducibility of the trace requires the caller to rebuild the
    oracle's noise stream from the same seed.
    """
    total = cfg.total_observations
    X0 = init_design(cfg.init_kind, cfg.n_init, cfg.n_dims,
                     child_rng(cfg.seed, "init"))
    y0 = np.asarray(oracle(X0), dtype=float).ravel()
    dataset = gp.Dataset(X0, y0)

    t0 = time.perf_counter()
    theta = gp.fit_hyperparams(dataset).hyperparams
    state, m, c, d = _scored(dataset, theta, cfg)
    records = [IterationRecord(
        iteration=dataset.n, x=None, y=float("nan"), hyperparams=theta,
        warp_loss=float("nan"), mse=m, crps=c, derivative_error=d,
        flags=(), wall_seconds=time.perf_counter() - t0)]

    # Each round trains a fresh copy of this template, so every fit gets
    # the same fixed step budget instead of compounding across rounds.
    warp_template = None
    warp = None
    if cfg.warp_kind != "identity":
        warp_template = make_warp(cfg.warp_kind, cfg.n_dims,
                                  random_state=child_rng(cfg.seed, "warp_init"),
                                  **cfg.warp_options)
        warp = warp_template
    identity = IdentityWarp(cfg.n_dims)
    run_flags = set()

    for i in range(dataset.n + 1, total + 1):
        t0 = time.perf_counter()
        flags = []
        warp_loss = float("nan")
        round_warp = identity

        if warp_template is not None:
            try:
                probes = None
                if cfg.warp_train.objective == "self_supervised":
                    probes = build_reference(
                        dataset, theta, n_probes=cfg.warp_train.n_probes,
                        seed=child_seed_int(cfg.seed, f"probes:{i}"),
                        sampler=cfg.warp_train.probe_sampler)
                result = train_warp(dataset, theta, copy.deepcopy(warp_template),
                                    cfg.warp_train, probes=probes)
                warp = result.warp
                warp_loss = result.final_loss
                if result.flag == "diverged":
                    flags.append("warp_diverged")
                else:
                    if result.flag:
                        flags.append(result.flag)
                    round_warp = warp
            except RECOVERABLE as exc:
                flags.append(f"warp_train_failed:{type(exc).__name__}")

        acq_rng = child_rng(cfg.seed, f"acq:{i}")
        try:
            proposal = acquisition.propose(
                gp.condition(dataset, theta, warp=round_warp), acq_rng, cfg.acq)
        except RECOVERABLE as exc:
            if round_warp is identity:
                raise
            flags.append(f"acquisition_degraded:{type(exc).__name__}")
            proposal = acquisition.propose(
                gp.condition(dataset, theta), acq_rng, cfg.acq)

        y_new = float(np.asarray(oracle(proposal.x[None, :]), dtype=float)[0])
        dataset = gp.Dataset(np.vstack([dataset.X, proposal.x]),
                             np.append(dataset.y, y_new))

        try:
            theta = gp.fit_hyperparams(dataset, init=theta).hyperparams
        except RECOVERABLE as exc:
            flags.append(f"refit_failed:{type(exc).__name__}")

        state, m, c, d = _scored(dataset, theta, cfg)
        records.append(IterationRecord(
            iteration=dataset.n, x=proposal.x, y=y_new, hyperparams=theta,
            warp_loss=warp_loss, mse=m, crps=c, derivative_error=d,
            flags=tuple(flags), wall_seconds=time.perf_counter() - t0))
        run_flags.update(flags)

    return RunTrace(config=cfg, records=records, final_state=state,
                    final_warp=warp, flags=tuple(sorted(run_flags)))
