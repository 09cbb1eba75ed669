"""Monotone reparameterizations of the unit cube.

Three families share one interface: the identity, a per-dimension
Kumaraswamy CDF, and a stack of coupling layers whose transformed
coordinates pass through conditional monotone rational quadratic splines
(RQS).  Every warp maps [0,1]^D onto itself with the corners pinned, is
strictly increasing in each transformed coordinate for any fixed
conditioning, and starts as the identity at its initial parameters, so a
freshly constructed warp never changes model behaviour.

The spline construction follows the standard monotone RQS recipe: K bin
widths and heights obtained from a floored softmax over raw logits, K+1
positive knot derivatives with the interior K-1 obtained from a shifted
softplus (floored at ``min_derivative``) and the two boundary
derivatives fixed at 1.  A raw vector of zeros therefore yields uniform
bins with unit derivatives, which is the identity map.

Besides the forward map each warp exposes:

* ``input_jacobian``   - exact d output / d input per point,
* ``forward_cached`` / ``vjp_from_cache`` - forward pass with reusable
  intermediates plus exact cotangent contraction into flat parameters,
* ``param_jacobian``   - dense d output / d parameters for one point,

all hand-derived and compared against central finite differences in the
test suite.  No inverse map and no log-determinant are implemented
because nothing downstream needs them.
"""

import json

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator

from .exceptions import DomainError, ShapeError
from .validation import as_matrix, check_unit_cube

DEFAULT_MIN_BIN = 1e-3
DEFAULT_MIN_DERIVATIVE = 1e-3

_SHIFT_CACHE = {}


def _softplus(x):
    # log(1 + e^x) without overflow; much faster than logaddexp here
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)


def _derivative_shift(min_derivative):
    # softplus(shift) == 1 - min_derivative, so raw == 0 maps to slope 1.
    if min_derivative not in _SHIFT_CACHE:
        _SHIFT_CACHE[min_derivative] = float(np.log(np.expm1(1.0 - min_derivative)))
    return _SHIFT_CACHE[min_derivative]


# ---------------------------------------------------------------------------
# Rational quadratic splines on [0, 1]


class RQSBinParams:
    """Constrained spline parameters: bin widths, heights, knot derivatives.

    widths and heights each sum to 1 with every entry >= min_bin; the
    K+1 derivatives are all >= min_derivative.
    """

    def __init__(self, widths, heights, derivs, min_bin=DEFAULT_MIN_BIN,
                 min_derivative=DEFAULT_MIN_DERIVATIVE):
        widths = np.asarray(widths, dtype=float)
        heights = np.asarray(heights, dtype=float)
        derivs = np.asarray(derivs, dtype=float)
        k = widths.size
        if heights.size != k or derivs.size != k + 1:
            raise ShapeError(
                f"inconsistent bin parameters: {k} widths, {heights.size} heights, "
                f"{derivs.size} derivatives"
            )
        for name, arr, floor in (("widths", widths, min_bin),
                                 ("heights", heights, min_bin),
                                 ("derivs", derivs, min_derivative)):
            if np.any(arr < floor - 1e-12):
                raise DomainError(f"{name} fall below the floor {floor}")
        for name, arr in (("widths", widths), ("heights", heights)):
            if abs(arr.sum() - 1.0) > 1e-9:
                raise DomainError(f"{name} must sum to 1, got {arr.sum()!r}")
        self.widths = widths
        self.heights = heights
        self.derivs = derivs
        self.n_bins = k


def raw_to_bins(raw, min_bin=DEFAULT_MIN_BIN, min_derivative=DEFAULT_MIN_DERIVATIVE):
    """Map one unconstrained (3K-1)-vector to constrained bin parameters."""
    raw = np.asarray(raw, dtype=float).ravel()
    if raw.size < 5 or (raw.size + 1) % 3:
        raise ShapeError(f"raw spline vector must have length 3K-1, got {raw.size}")
    k = (raw.size + 1) // 3
    bins, derivs, _ = _normalize_raw(raw[None, :], k, min_bin, min_derivative)
    return RQSBinParams(bins[0], bins[1], derivs[0], min_bin, min_derivative)


def _normalize_raw(raw, n_bins, min_bin, min_derivative):
    """Batched raw -> stacked (bins, derivs, softmax probs).

    bins has shape (2n, K): the first n rows are widths, the last n rows
    heights (block layout keeps the hot path on contiguous views); p are
    the underlying softmax probabilities, kept for the gradient chain.
    """
    k = n_bins
    n = raw.shape[0]
    z = np.empty((2 * n, k))
    z[:n] = raw[:, :k]
    z[n:] = raw[:, k:2 * k]
    # one global shift keeps softmax exact; the clip only guards against
    # whole rows underflowing for extreme hand-set parameters
    z -= z.max()
    np.clip(z, -700.0, None, out=z)
    p = np.exp(z, out=z)
    p /= p.sum(axis=1, keepdims=True)
    bins = min_bin + (1.0 - k * min_bin) * p
    derivs = np.empty((n, k + 1))
    derivs[:, 0] = 1.0
    derivs[:, k] = 1.0
    derivs[:, 1:k] = min_derivative + _softplus(
        raw[:, 2 * k:] + _derivative_shift(min_derivative))
    return bins, derivs, p


def _check_unit_interval(x, name="x"):
    if x.size and (x.min() < -1e-12 or x.max() > 1.0 + 1e-12):
        raise DomainError(
            f"{name} must lie in [0, 1]; range is [{x.min():.6g}, {x.max():.6g}]"
        )
    return np.clip(x, 0.0, 1.0)


def _rqs_eval(x, bins, derivs, want_bin_grads):
    """Evaluate the monotone RQS for a batch of scalars.

    x:      (n,) inputs, assumed already clipped to [0, 1]
    bins:   (2n, K) constrained widths (rows :n) and heights (rows n:)
    derivs: (n, K+1) constrained knot derivatives

    Returns (y, dydx) and, when requested, the partials of y with respect
    to every width, height, and derivative entry (cumulative-knot terms
    included): dWH of shape (2n, K) and dD of shape (n, K+1).
    """
    n = x.shape[0]
    k = bins.shape[1]
    cums = np.empty((2 * n, k + 1))
    cums[:, 0] = 0.0
    np.cumsum(bins, axis=1, out=cums[:, 1:])
    cums[:, k] = 1.0

    # bin index: number of interior left knots at or below x
    idx = np.sum(x[:, None] >= cums[:n, 1:k], axis=1)

    # flat gathers: cums and derivs share row length k+1, bins has k
    flat_c = np.arange(0, n * (k + 1), k + 1) + idx
    flat_b = np.arange(0, n * k, k) + idx
    cflat = cums.ravel()
    bflat = bins.ravel()
    dflat = derivs.ravel()
    x_lo = cflat[flat_c]
    y_lo = cflat[flat_c + n * (k + 1)]
    w = bflat[flat_b]
    h = bflat[flat_b + n * k]
    d0 = dflat[flat_c]
    d1 = dflat[flat_c + 1]

    s = h / w
    xi = np.clip((x - x_lo) / w, 0.0, 1.0)
    q = xi * (1.0 - xi)
    a = d1 + d0 - 2.0 * s
    num = h * (s * xi * xi + d0 * q)
    den = s + a * q
    frac = num / den
    y = y_lo + frac
    # pin the endpoints exactly; cumulative sums carry rounding error
    y = np.where(x >= 1.0, 1.0, np.where(x <= 0.0, 0.0, y))
    den2 = den * den
    dydx = (s * s) * (d1 * xi * xi + 2.0 * s * q + d0 * (1.0 - xi) ** 2) / den2

    if not want_bin_grads:
        return y, dydx, None

    one_m2xi = 1.0 - 2.0 * xi
    dF_dxi = (h * (2.0 * s * xi + d0 * one_m2xi) - frac * a * one_m2xi) / den
    dF_ds = (h * xi * xi - frac * (1.0 - 2.0 * q)) / den
    dF_dh = (s * xi * xi + d0 * q) / den
    dF_dd0 = q * (h - frac) / den
    dF_dd1 = -frac * q / den

    dy_dw_in = (dF_dxi * -xi + dF_ds * -s) / w
    dy_dh_in = dF_dh + dF_ds / w
    dy_dxlo = -dF_dxi / w

    cols = np.arange(k)[None, :]
    before = cols < idx[:, None]
    at = cols == idx[:, None]
    dWH = np.empty((2 * n, k))
    np.multiply(before, dy_dxlo[:, None], out=dWH[:n])
    dWH[:n] += at * dy_dw_in[:, None]
    np.multiply(at, dy_dh_in[:, None], out=dWH[n:])
    dWH[n:] += before
    dD = np.zeros((n, k + 1))
    dDflat = dD.ravel()
    dDflat[flat_c] = dF_dd0
    dDflat[flat_c + 1] = dF_dd1
    return y, dydx, (dWH, dD)


def _softmax_vjp(p, g, span):
    """Cotangent through bins = min_bin + span * softmax(logits)."""
    gs = g * span
    return p * (gs - np.sum(gs * p, axis=-1, keepdims=True))


def rqs_forward_raw(x, raw, n_bins, min_bin=DEFAULT_MIN_BIN,
                    min_derivative=DEFAULT_MIN_DERIVATIVE, want_param_grads=False):
    """Batched spline evaluation from raw parameters.

    Returns (y, dydx, dydraw) with dydraw of shape (n, 3K-1) or None.
    """
    bins, derivs, p = _normalize_raw(raw, n_bins, min_bin, min_derivative)
    y, dydx, bin_grads = _rqs_eval(x, bins, derivs, want_param_grads)
    if not want_param_grads:
        return y, dydx, None
    dWH, dD = bin_grads
    k = n_bins
    n = raw.shape[0]
    vj = _softmax_vjp(p, dWH, 1.0 - k * min_bin)
    dydraw = np.empty_like(raw)
    dydraw[:, :k] = vj[:n]
    dydraw[:, k:2 * k] = vj[n:]
    dydraw[:, 2 * k:] = dD[:, 1:k] * expit(
        raw[:, 2 * k:] + _derivative_shift(min_derivative))
    return y, dydx, dydraw


def rqs_forward(x, bins):
    """Scalar spline evaluation from constrained bin parameters.

    Returns (y, dy/dx) for one point; x outside [0, 1] by more than
    1e-12 raises DomainError.
    """
    arr = _check_unit_interval(np.asarray([float(x)]))
    stacked = np.vstack([bins.widths, bins.heights])
    y, dydx, _ = _rqs_eval(arr, stacked, bins.derivs[None, :], False)
    return float(y[0]), float(dydx[0])


# ---------------------------------------------------------------------------
# Warp interface


class Warp(BaseEstimator):
    """Common interface for monotone unit-cube reparameterizations."""

    is_identity = False
    kind = None

    @property
    def n_params(self):
        return self.get_phi().size

    def get_phi(self):
        raise NotImplementedError

    def set_phi(self, phi):
        raise NotImplementedError

    def transform(self, X):
        return self.forward_cached(X)[0]

    def __call__(self, X):
        return self.transform(X)

    def input_jacobian(self, X):
        """Return (Y, J) with J[i] = d T(x_i) / d x_i of shape (D, D)."""
        raise NotImplementedError

    def forward_cached(self, X):
        """Forward pass returning (Y, cache) for later ``vjp_from_cache``."""
        raise NotImplementedError

    def vjp_from_cache(self, cache, cotangents):
        """sum_i cotangents[i] @ dT(x_i)/dphi for a cached forward pass."""
        raise NotImplementedError

    def param_vjp(self, X, cotangents):
        """Return (Y, g) with g = sum_i cotangents[i] @ dT(x_i)/dphi."""
        Y, cache = self.forward_cached(X)
        cot = as_matrix(cotangents, "cotangents", n_cols=self.n_dims)
        if cot.shape[0] != Y.shape[0]:
            raise ShapeError("cotangents must match X row count")
        return Y, self.vjp_from_cache(cache, cot)

    def param_jacobian(self, x):
        """Dense Jacobian d T(x) / d phi of shape (D, n_params)."""
        x = as_matrix(x, "x", n_cols=self.n_dims)
        if x.shape[0] != 1:
            raise ShapeError("param_jacobian takes a single point")
        _, cache = self.forward_cached(x)
        rows = []
        for d in range(self.n_dims):
            cot = np.zeros((1, self.n_dims))
            cot[0, d] = 1.0
            rows.append(self.vjp_from_cache(cache, cot))
        return np.vstack(rows) if rows else np.zeros((self.n_dims, 0))

    def to_dict(self):
        raise NotImplementedError

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def warp_from_dict(payload):
    """Reconstruct a warp from its ``to_dict`` payload."""
    kind = payload.get("kind")
    if kind == "identity":
        return IdentityWarp(int(payload["n_dims"]))
    if kind == "kumaraswamy":
        warp = KumaraswamyWarp(int(payload["n_dims"]))
        warp.set_phi(np.asarray(payload["phi"], dtype=float))
        return warp
    if kind == "crqs":
        warp = CRQSWarp(
            int(payload["n_dims"]),
            n_bins=int(payload["n_bins"]),
            n_layers=int(payload["n_layers"]),
            hidden_units=int(payload["hidden_units"]),
            min_bin=float(payload["min_bin"]),
            min_derivative=float(payload["min_derivative"]),
            random_state=0,
        )
        warp.set_phi(np.asarray(payload["phi"], dtype=float))
        return warp
    raise DomainError(f"unknown warp kind {kind!r}")


def warp_from_json(blob):
    return warp_from_dict(json.loads(blob))


class IdentityWarp(Warp):
    """T(x) = x."""

    is_identity = True
    kind = "identity"

    def __init__(self, n_dims):
        self.n_dims = int(n_dims)

    def get_phi(self):
        return np.zeros(0)

    def set_phi(self, phi):
        phi = np.asarray(phi, dtype=float).ravel()
        if phi.size:
            raise ShapeError("identity warp has no parameters")

    def forward_cached(self, X):
        X = as_matrix(X, "X", n_cols=self.n_dims)
        return check_unit_cube(X, "X"), None

    def vjp_from_cache(self, cache, cotangents):
        return np.zeros(0)

    def input_jacobian(self, X):
        Y, _ = self.forward_cached(X)
        J = np.zeros((Y.shape[0], self.n_dims, self.n_dims))
        J[:, np.arange(self.n_dims), np.arange(self.n_dims)] = 1.0
        return Y, J

    def to_dict(self):
        return {"kind": self.kind, "n_dims": self.n_dims}


class KumaraswamyWarp(Warp):
    """Per-dimension Kumaraswamy CDF, T(x) = 1 - (1 - x^a)^b.

    Shape parameters a, b > 0 are stored as logs; both at log 0 give the
    identity.  The endpoints 0 and 1 are fixed points for every (a, b).
    """

    kind = "kumaraswamy"

    def __init__(self, n_dims):
        self.n_dims = int(n_dims)
        self.log_a_ = np.zeros(self.n_dims)
        self.log_b_ = np.zeros(self.n_dims)

    def get_phi(self):
        return np.concatenate([self.log_a_, self.log_b_])

    def set_phi(self, phi):
        phi = np.asarray(phi, dtype=float).ravel()
        if phi.size != 2 * self.n_dims:
            raise ShapeError(f"expected {2 * self.n_dims} parameters, got {phi.size}")
        self.log_a_ = phi[:self.n_dims].copy()
        self.log_b_ = phi[self.n_dims:].copy()

    def forward_cached(self, X):
        X = check_unit_cube(as_matrix(X, "X", n_cols=self.n_dims), "X")
        Y = kumaraswamy_forward(X, np.exp(self.log_a_), np.exp(self.log_b_))
        return Y, X

    def vjp_from_cache(self, cache, cotangents):
        X = cache
        a = np.exp(self.log_a_)
        b = np.exp(self.log_b_)
        interior = (X > 0.0) & (X < 1.0)
        Xc = np.where(interior, X, 0.5)
        u = Xc ** a
        t = 1.0 - u
        # dT/da = b t^(b-1) u ln x ; dT/db = -t^b ln t ; both vanish at corners
        dTda = np.where(interior, b * t ** (b - 1.0) * u * np.log(Xc), 0.0)
        dTdb = np.where(interior, -(t ** b) * np.log(t), 0.0)
        g_log_a = np.sum(cotangents * dTda * a, axis=0)
        g_log_b = np.sum(cotangents * dTdb * b, axis=0)
        return np.concatenate([g_log_a, g_log_b])

    def input_jacobian(self, X):
        X = check_unit_cube(as_matrix(X, "X", n_cols=self.n_dims), "X")
        a = np.exp(self.log_a_)
        b = np.exp(self.log_b_)
        Y = kumaraswamy_forward(X, a, b)
        # the exact derivative diverges at the corners when a < 1 or
        # b < 1; clamp the evaluation point only for the derivative
        Xc = np.clip(X, 1e-12, 1.0 - 1e-12)
        u = Xc ** a
        deriv = a * b * Xc ** (a - 1.0) * (1.0 - u) ** (b - 1.0)
        n, d = X.shape
        J = np.zeros((n, d, d))
        J[:, np.arange(d), np.arange(d)] = deriv
        return Y, J

    def to_dict(self):
        return {"kind": self.kind, "n_dims": self.n_dims,
                "phi": self.get_phi().tolist()}


def kumaraswamy_forward(X, a, b):
    """Elementwise Kumaraswamy CDF with broadcastable shapes a, b."""
    X = np.asarray(X, dtype=float)
    if np.any(np.asarray(a) <= 0.0) or np.any(np.asarray(b) <= 0.0):
        raise DomainError("Kumaraswamy shapes a, b must be positive")
    return 1.0 - (1.0 - X ** a) ** b


# ---------------------------------------------------------------------------
# Conditional RQS coupling stack


class _CouplingLayer:
    """One coupling layer: pass-through block A conditions splines on block B.

    For D == 1 the layer holds a single unconditional raw vector instead
    of a conditioner network.
    """

    def __init__(self, a_idx, b_idx, n_bins, hidden_units, rng, init_scale):
        self.a_idx = np.asarray(a_idx, dtype=int)
        self.b_idx = np.asarray(b_idx, dtype=int)
        self.n_bins = n_bins
        self.n_raw = 3 * n_bins - 1
        n_out = self.b_idx.size * self.n_raw
        if self.a_idx.size:
            scale = init_scale / np.sqrt(self.a_idx.size)
            self.W1 = rng.normal(0.0, scale, size=(hidden_units, self.a_idx.size))
            self.b1 = np.zeros(hidden_units)
            # zero-initialized head: raw parameters start at 0, i.e. identity
            self.W2 = np.zeros((n_out, hidden_units))
            self.b2 = np.zeros(n_out)
            self.raw = None
        else:
            self.W1 = self.b1 = self.W2 = self.b2 = None
            self.raw = np.zeros((self.b_idx.size, self.n_raw))

    @property
    def unconditional(self):
        return self.raw is not None

    @property
    def n_params(self):
        if self.unconditional:
            return self.raw.size
        return self.W1.size + self.b1.size + self.W2.size + self.b2.size

    def get_params_flat(self):
        if self.unconditional:
            return self.raw.ravel().copy()
        return np.concatenate([self.W1.ravel(), self.b1, self.W2.ravel(), self.b2])

    def set_params_flat(self, flat):
        if self.unconditional:
            self.raw = flat.reshape(self.raw.shape).copy()
            return
        sizes = [self.W1.size, self.b1.size, self.W2.size, self.b2.size]
        parts = np.split(flat, np.cumsum(sizes)[:-1])
        self.W1 = parts[0].reshape(self.W1.shape).copy()
        self.b1 = parts[1].copy()
        self.W2 = parts[2].reshape(self.W2.shape).copy()
        self.b2 = parts[3].copy()

    def raw_for(self, X):
        """Raw spline parameters per point, shape (n, |B|, 3K-1)."""
        n = X.shape[0]
        if self.unconditional:
            raw = np.broadcast_to(self.raw, (n,) + self.raw.shape)
            return raw, None, None
        xA = X[:, self.a_idx]
        h1 = np.tanh(xA @ self.W1.T + self.b1)
        raw = (h1 @ self.W2.T + self.b2).reshape(n, self.b_idx.size, self.n_raw)
        return raw, xA, h1


class CRQSWarp(Warp):
    """Stack of conditional-RQS coupling layers with alternating partitions.

    Layers alternate which coordinate block passes through unchanged; the
    other block goes through monotone splines whose raw parameters come
    from a one-hidden-layer tanh conditioner applied to the pass-through
    block.  The conditioner head is zero-initialized, so a fresh warp is
    the identity.  For D == 1 every layer is a single unconditional
    spline.
    """

    kind = "crqs"

    def __init__(self, n_dims, n_bins=8, n_layers=4, hidden_units=32,
                 min_bin=DEFAULT_MIN_BIN, min_derivative=DEFAULT_MIN_DERIVATIVE,
                 init_scale=1.0, random_state=None):
        if n_dims < 1:
            raise DomainError("n_dims must be >= 1")
        if n_bins < 2:
            raise DomainError("n_bins must be >= 2")
        self.n_dims = int(n_dims)
        self.n_bins = int(n_bins)
        self.n_layers = int(n_layers)
        self.hidden_units = int(hidden_units)
        self.min_bin = float(min_bin)
        self.min_derivative = float(min_derivative)
        self.init_scale = float(init_scale)
        self.random_state = random_state
        rng = np.random.default_rng(random_state)
        idx = np.arange(self.n_dims)
        even, odd = idx[0::2], idx[1::2]
        self.layers_ = []
        for layer in range(self.n_layers):
            if self.n_dims == 1:
                a_idx, b_idx = idx[:0], idx
            elif layer % 2 == 0:
                a_idx, b_idx = even, odd
            else:
                a_idx, b_idx = odd, even
            self.layers_.append(_CouplingLayer(
                a_idx, b_idx, self.n_bins, self.hidden_units, rng, self.init_scale))

    # -- parameter plumbing

    def get_phi(self):
        return np.concatenate([layer.get_params_flat() for layer in self.layers_])

    def set_phi(self, phi):
        phi = np.asarray(phi, dtype=float).ravel()
        sizes = [layer.n_params for layer in self.layers_]
        if phi.size != sum(sizes):
            raise ShapeError(f"expected {sum(sizes)} parameters, got {phi.size}")
        for layer, chunk in zip(self.layers_, np.split(phi, np.cumsum(sizes)[:-1])):
            layer.set_params_flat(chunk)

    # -- evaluation

    def _forward(self, X, need_input_jac, need_param_grads):
        X = check_unit_cube(as_matrix(X, "X", n_cols=self.n_dims), "X")
        n = X.shape[0]
        cur = X
        caches = []
        J = None
        for layer in self.layers_:
            raw, xA, h1 = layer.raw_for(cur)
            conditional = not layer.unconditional
            nb = layer.b_idx.size
            xb = cur[:, layer.b_idx].reshape(n * nb)
            want = need_param_grads or (need_input_jac and conditional)
            y, dydx, dydraw = rqs_forward_raw(
                xb, raw.reshape(n * nb, layer.n_raw), layer.n_bins,
                self.min_bin, self.min_derivative, want_param_grads=want)
            y = y.reshape(n, nb)
            dydx = dydx.reshape(n, nb)
            if dydraw is not None:
                dydraw = dydraw.reshape(n, nb, layer.n_raw)
            out = cur.copy()
            out[:, layer.b_idx] = y
            if need_param_grads:
                caches.append({"layer": layer, "xA": xA, "h1": h1,
                               "dydx": dydx, "dydraw": dydraw})
            if need_input_jac:
                Jl = np.zeros((n, self.n_dims, self.n_dims))
                Jl[:, layer.a_idx, layer.a_idx] = 1.0
                Jl[:, layer.b_idx, layer.b_idx] = dydx
                if conditional:
                    W2r = layer.W2.reshape(nb, layer.n_raw, -1)
                    u = np.einsum("nbk,bkh->nbh", dydraw, W2r)
                    t = u * (1.0 - h1 * h1)[:, None, :]
                    dxA = np.einsum("nbh,ha->nba", t, layer.W1)
                    Jl[:, layer.b_idx[:, None], layer.a_idx[None, :]] = dxA
                J = Jl if J is None else np.matmul(Jl, J)
            cur = out
        if need_input_jac and J is None:
            J = np.zeros((n, self.n_dims, self.n_dims))
            J[:, np.arange(self.n_dims), np.arange(self.n_dims)] = 1.0
        return cur, J, caches

    def transform(self, X):
        return self._forward(X, False, False)[0]

    def forward_cached(self, X):
        Y, _, caches = self._forward(X, False, True)
        return Y, caches

    def input_jacobian(self, X):
        Y, J, _ = self._forward(X, True, False)
        return Y, J

    def vjp_from_cache(self, caches, cotangents):
        grads = []
        cur = np.array(cotangents, dtype=float)
        for cache in reversed(caches):
            layer = cache["layer"]
            c_b = cur[:, layer.b_idx]
            nxt = cur.copy()
            nxt[:, layer.b_idx] = c_b * cache["dydx"]
            seed = c_b[:, :, None] * cache["dydraw"]
            if layer.unconditional:
                grads.append(seed.sum(axis=0).ravel())
            else:
                n = cur.shape[0]
                seed_flat = seed.reshape(n, -1)
                h1 = cache["h1"]
                gW2 = seed_flat.T @ h1
                gb2 = seed_flat.sum(axis=0)
                dh1 = seed_flat @ layer.W2
                dz1 = dh1 * (1.0 - h1 * h1)
                gW1 = dz1.T @ cache["xA"]
                gb1 = dz1.sum(axis=0)
                nxt[:, layer.a_idx] += dz1 @ layer.W1
                grads.append(np.concatenate([gW1.ravel(), gb1, gW2.ravel(), gb2]))
            cur = nxt
        grads.reverse()
        return np.concatenate(grads) if grads else np.zeros(0)

    def conditional_spline(self, layer_index, xb, conditioning):
        """Evaluate one layer's spline block for fixed conditioning values.

        xb: (n, |B|) coordinates for the transformed block; conditioning:
        (|A|,) fixed pass-through values.  Returns (y, dydx), each (n, |B|).
        """
        layer = self.layers_[layer_index]
        xb = np.asarray(xb, dtype=float)
        if xb.ndim == 1:
            xb = xb[:, None]
        if xb.shape[1] != layer.b_idx.size:
            raise ShapeError(f"expected {layer.b_idx.size} spline coordinates")
        n = xb.shape[0]
        point = np.full((1, self.n_dims), 0.5)
        if layer.a_idx.size:
            point[0, layer.a_idx] = np.asarray(conditioning, dtype=float)
        raw, _, _ = layer.raw_for(np.repeat(point, n, axis=0))
        y, dydx, _ = rqs_forward_raw(
            _check_unit_interval(xb.reshape(-1)),
            raw.reshape(n * layer.b_idx.size, layer.n_raw),
            layer.n_bins, self.min_bin, self.min_derivative)
        return y.reshape(xb.shape), dydx.reshape(xb.shape)

    def to_dict(self):
        return {
            "kind": self.kind,
            "n_dims": self.n_dims,
            "n_bins": self.n_bins,
            "n_layers": self.n_layers,
            "hidden_units": self.hidden_units,
            "min_bin": self.min_bin,
            "min_derivative": self.min_derivative,
            "layer_partitions": [
                [layer.a_idx.tolist(), layer.b_idx.tolist()] for layer in self.layers_
            ],
            "phi": self.get_phi().tolist(),
        }


def make_warp(kind, n_dims, *, n_bins=8, n_layers=4, hidden_units=32,
              random_state=None):
    """Factory over the three warp families."""
    if kind == "identity":
        return IdentityWarp(n_dims)
    if kind == "kumaraswamy":
        return KumaraswamyWarp(n_dims)
    if kind == "crqs":
        return CRQSWarp(n_dims, n_bins=n_bins, n_layers=n_layers,
                        hidden_units=hidden_units, random_state=random_state)
    raise DomainError(f"unknown warp kind {kind!r}")
