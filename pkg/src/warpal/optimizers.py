"""First-order optimizers used for warp training and acquisition search.

AdamW is reimplemented here (decoupled weight decay, bias-corrected
moments, optional global-norm gradient clipping before the step) so the
update rule is pinned down exactly rather than borrowed from a deep
learning framework.

``lbfgs_maximize`` runs a limited-memory quasi-Newton ascent jointly
over a batch of candidate points: the batch is stacked into one flat
variable whose objective is the sum of the per-candidate values, each
step uses a strong-Wolfe line search, iterates are projected back onto
the box after every step, and curvature pairs are kept only when they
remain well-formed under the projection.  The best value ever evaluated
(initial candidates and every line-search trial included) is tracked per
candidate, so the returned maximum can never fall below the best raw
candidate.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import line_search

from .exceptions import DomainError


@dataclass
class AdamWConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    clip_norm: float = 2.0  # None disables clipping


@dataclass
class AdamWState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n):
        return cls(m=np.zeros(n), v=np.zeros(n), t=0)


def clip_global_norm(grads, max_norm):
    """Scale ``grads`` so its Euclidean norm is at most ``max_norm``."""
    norm = float(np.linalg.norm(grads))
    if max_norm is not None and norm > max_norm > 0.0:
        return grads * (max_norm / norm), norm
    return grads, norm


def adamw_step(params, grads, state, cfg, learning_rate=None):
    """One AdamW update; mutates ``state`` and returns the new parameters."""
    lr = cfg.learning_rate if learning_rate is None else learning_rate
    grads, _ = clip_global_norm(np.asarray(grads, dtype=float), cfg.clip_norm)
    state.t += 1
    state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grads
    state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grads * grads
    m_hat = state.m / (1.0 - cfg.beta1 ** state.t)
    v_hat = state.v / (1.0 - cfg.beta2 ** state.t)
    return params - lr * (m_hat / (np.sqrt(v_hat) + cfg.eps)
                          + cfg.weight_decay * params)


# ---------------------------------------------------------------------------
# Projected multi-start L-BFGS (maximization)


@dataclass
class LBFGSResult:
    x: np.ndarray
    value: float
    candidate_index: int
    best_trace: np.ndarray
    n_iterations: int


def _two_loop(grad, s_list, y_list):
    q = grad.copy()
    alphas = []
    for s, y in zip(reversed(s_list), reversed(y_list)):
        rho = 1.0 / float(y @ s)
        a = rho * float(s @ q)
        alphas.append(a)
        q -= a * y
    if s_list:
        s, y = s_list[-1], y_list[-1]
        q *= float(s @ y) / float(y @ y)
    for (s, y), a in zip(zip(s_list, y_list), reversed(alphas)):
        rho = 1.0 / float(y @ s)
        b = rho * float(y @ q)
        q += (a - b) * s
    return q


def lbfgs_maximize(f_and_grad, X0, lower=0.0, upper=1.0, max_steps=300,
                   memory=10, gtol=1e-10, freeze_tol=1e-8, stall_window=30,
                   wolfe_c1=1e-4, wolfe_c2=0.9):
    """Maximize the sum of per-candidate objectives over a box.

    f_and_grad(X) must take an (n, D) batch and return per-candidate
    values (n,) and gradients (n, D).  Candidates whose value or gradient
    turns non-finite are frozen in place for the rest of the search, as
    are candidates whose projected gradient falls below ``freeze_tol``
    (they have stopped climbing); frozen rows leave the evaluation batch,
    so late iterations only pay for the stragglers.  The search also ends
    once the running maximum has not improved for ``stall_window``
    consecutive iterations.  Returns the best point over all evaluations
    with ties broken by the lowest candidate index.
    """
    X0 = np.asarray(X0, dtype=float)
    if X0.ndim != 2 or X0.shape[0] == 0:
        raise DomainError("X0 must be a non-empty (n, D) array of candidates")
    n, d = X0.shape
    frozen = np.zeros(n, dtype=bool)
    best_vals = np.full(n, -np.inf)
    best_pts = X0.copy()
    best_trace = []

    def evaluate(z):
        """Objective on the flat joint variable (projection built in).

        Frozen candidates contribute a constant 0 to the sum and a zero
        gradient, so they stay in place; only active rows are evaluated.
        """
        X = np.clip(z.reshape(n, d), lower, upper)
        vals = np.zeros(n)
        grads = np.zeros((n, d))
        active = ~frozen
        if np.any(active):
            va, ga = f_and_grad(X[active])
            vals[active] = np.asarray(va, dtype=float)
            grads[active] = np.asarray(ga, dtype=float)
        bad = active & ~(np.isfinite(vals) & np.all(np.isfinite(grads), axis=1))
        frozen[bad] = True
        vals[frozen] = 0.0
        grads[frozen] = 0.0
        improved = ~frozen & (vals > best_vals)
        if np.any(improved):
            best_vals[improved] = vals[improved]
            best_pts[improved] = X[improved]
        # minimize the negated sum; zero gradient where projection binds
        g = -grads
        zi = z.reshape(n, d)
        g[(zi <= lower) & (g > 0.0)] = 0.0
        g[(zi >= upper) & (g < 0.0)] = 0.0
        cache["vals"] = vals
        return -float(vals.sum()), g.reshape(-1)

    cache = {}

    def cached(z):
        key = z.tobytes()
        if cache.get("key") != key:
            cache["key"] = key
            cache["val"] = evaluate(z)
        return cache["val"]

    fun = lambda z: cached(z)[0]
    jac = lambda z: cached(z)[1]

    z = np.clip(X0, lower, upper).reshape(-1)
    f, g = cached(z)
    best_trace.append(best_vals.max())
    s_hist, y_hist = [], []
    iterations = 0
    for iterations in range(1, max_steps + 1):
        if float(np.max(np.abs(g))) < gtol:
            break
        p = -_two_loop(g, s_hist, y_hist)
        if float(p @ g) >= 0.0:
            s_hist, y_hist = [], []
            p = -g
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            alpha = line_search(fun, jac, z, p, gfk=g, old_fval=f,
                                c1=wolfe_c1, c2=wolfe_c2, maxiter=25)[0]
        if alpha is None:
            if s_hist:
                # retry once from a steepest-descent memory reset
                s_hist, y_hist = [], []
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    alpha = line_search(fun, jac, z, -g, gfk=g, old_fval=f,
                                        c1=wolfe_c1, c2=wolfe_c2, maxiter=25)[0]
                p = -g
            if alpha is None:
                break
        z_new = np.clip((z + alpha * p).reshape(n, d), lower, upper).reshape(-1)
        f_new, g_new = cached(z_new)
        s = z_new - z
        yv = g_new - g
        sy = float(s @ yv)
        if sy > 1e-10 * float(np.linalg.norm(s)) * float(np.linalg.norm(yv)):
            s_hist.append(s)
            y_hist.append(yv)
            if len(s_hist) > memory:
                s_hist.pop(0)
                y_hist.pop(0)
        if not np.any(np.abs(s) > 0.0):
            break
        z, f, g = z_new, f_new, g_new
        # retire candidates whose projected gradient has vanished; their
        # zeroed contribution is folded out of f so Wolfe comparisons
        # across the freeze stay consistent
        settle = ~frozen & (np.abs(g.reshape(n, d)).max(axis=1) < freeze_tol)
        if np.any(settle):
            frozen[settle] = True
            f += float(cache["vals"][settle].sum())
            gm = g.reshape(n, d)
            gm[settle] = 0.0
            cache["val"] = (f, g)
        best_trace.append(best_vals.max())
        if stall_window and len(best_trace) > stall_window:
            gain = best_trace[-1] - best_trace[-1 - stall_window]
            if gain <= 1e-12 * max(1.0, abs(best_trace[-1])):
                break

    idx = int(np.argmax(best_vals))
    return LBFGSResult(x=best_pts[idx].copy(), value=float(best_vals[idx]),
                       candidate_index=idx, best_trace=np.asarray(best_trace),
                       n_iterations=iterations)
