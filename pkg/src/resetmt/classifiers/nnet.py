"""Single-hidden-layer network with logistic units and weight decay."""
from __future__ import annotations

import numba
import numpy as np
from scipy.special import expit


@numba.njit(cache=True)
def _sigmoid(v):
    return 1.0 / (1.0 + np.exp(-v))


@numba.njit(cache=True)
def _softplus(z):
    # log(1 + exp(z)) without overflow
    if z > 0:
        return z + np.log1p(np.exp(-z))
    return np.log1p(np.exp(z))


# parameter layout: W1 (p x h, row-major) | b1 (h) | w2 (h) | b2


@numba.njit(cache=True)
def _loss(theta, X, y01, h, decay):
    n, p = X.shape
    nw = p * h
    total = 0.0
    for i in range(n):
        z = theta[-1]
        for j in range(h):
            a = theta[nw + j]
            for k in range(p):
                a += X[i, k] * theta[k * h + j]
            z += _sigmoid(a) * theta[nw + h + j]
        total += _softplus(z) - y01[i] * z
    return total + decay * np.dot(theta, theta)


@numba.njit(cache=True)
def _gradient(theta, X, y01, h, decay):
    n, p = X.shape
    nw = p * h
    g = 2.0 * decay * theta
    H = np.empty(h)
    for i in range(n):
        z = theta[-1]
        for j in range(h):
            a = theta[nw + j]
            for k in range(p):
                a += X[i, k] * theta[k * h + j]
            H[j] = _sigmoid(a)
            z += H[j] * theta[nw + h + j]
        dz = _sigmoid(z) - y01[i]
        g[-1] += dz
        for j in range(h):
            g[nw + h + j] += H[j] * dz
            da = dz * theta[nw + h + j] * H[j] * (1.0 - H[j])
            g[nw + j] += da
            for k in range(p):
                g[k * h + j] += X[i, k] * da
    return g


@numba.njit(cache=True)
def _loss_gradient(theta, X, y01, h, decay, g):
    """Loss at ``theta``; the gradient is written into ``g``."""
    n, p = X.shape
    nw = p * h
    for i in range(theta.size):
        g[i] = 2.0 * decay * theta[i]
    H = np.empty(h)
    total = 0.0
    for i in range(n):
        z = theta[-1]
        for j in range(h):
            a = theta[nw + j]
            for k in range(p):
                a += X[i, k] * theta[k * h + j]
            H[j] = _sigmoid(a)
            z += H[j] * theta[nw + h + j]
        total += _softplus(z) - y01[i] * z
        dz = _sigmoid(z) - y01[i]
        g[-1] += dz
        for j in range(h):
            g[nw + h + j] += H[j] * dz
            da = dz * theta[nw + h + j] * H[j] * (1.0 - H[j])
            g[nw + j] += da
            for k in range(p):
                g[k * h + j] += X[i, k] * da
    return total + decay * np.dot(theta, theta)


@numba.njit(cache=True)
def _variable_metric(theta0, X, y01, h, decay, maxiter, gtol):
    """BFGS with a backtracking Armijo line search.

    The inverse-Hessian estimate restarts at the identity whenever a step
    fails to improve or the curvature condition breaks. Stops after
    ``maxiter`` gradient steps, once the gradient norm falls below ``gtol``,
    or when no step changes the parameters.
    """
    acctol, stepredn, reltest = 1e-4, 0.2, 10.0
    b = theta0.copy()
    n = b.size
    f = _loss(b, X, y01, h, decay)
    fmin = f
    g = _gradient(b, X, y01, h, decay)
    gradcount = 1
    ilast = 1
    it = 0
    B = np.eye(n)
    x = b.copy()
    gtrial = np.empty(n)
    if np.sqrt(np.dot(g, g)) < gtol:
        return b, fmin, 0
    while True:
        if ilast == gradcount:
            B = np.eye(n)
        x = b.copy()
        c = g.copy()
        t = -(B @ g)
        gradproj = np.dot(t, g)
        if gradproj < 0:
            step = 1.0
            while True:
                b = x + step * t
                same = True
                for i in range(n):
                    if reltest + b[i] != reltest + x[i]:
                        same = False
                        break
                if same:
                    break
                # the first trial step is usually accepted, so the gradient
                # is computed alongside the loss
                f = _loss_gradient(b, X, y01, h, decay, gtrial)
                if np.isfinite(f) and f <= fmin + gradproj * step * acctol:
                    break
                step *= stepredn
            if not same:
                fmin = f
                g = gtrial.copy()
                gradcount += 1
                it += 1
                if np.sqrt(np.dot(g, g)) < gtol:
                    break
                t *= step
                c = g - c
                d1 = np.dot(t, c)
                if d1 > 0:
                    bc = B @ c
                    d2 = 1.0 + np.dot(c, bc) / d1
                    B += (d2 * np.outer(t, t) - np.outer(bc, t) - np.outer(t, bc)) / d1
                else:
                    ilast = gradcount
            elif ilast < gradcount:
                same = False
                ilast = gradcount
        else:
            same = False
            if ilast == gradcount:
                same = True
            else:
                ilast = gradcount
        if it >= maxiter:
            break
        if gradcount - ilast > 2 * n:
            ilast = gradcount
        if same and ilast == gradcount:
            break
    if not np.all(np.isfinite(b)):
        b = x
        fmin = _loss(b, X, y01, h, decay)
    return b, fmin, it


class NeuralNetClassifier:
    """Logistic hidden layer of ``hidden`` units and a logistic output.

    Minimizes summed cross-entropy plus ``decay * ||theta||^2`` (biases
    included) with full-batch BFGS, starting from weights drawn uniformly
    from ``[-init_range, init_range]``. Inputs are standardized internally.
    """

    def __init__(self, hidden=5, decay=0.0, maxiter=500, gtol=1e-5, init_range=0.7):
        self.hidden = hidden
        self.decay = decay
        self.maxiter = maxiter
        self.gtol = gtol
        self.init_range = init_range

    def _unpack(self, theta, p):
        h = self.hidden
        W1 = theta[: p * h].reshape(p, h)
        b1 = theta[p * h : p * h + h]
        w2 = theta[p * h + h : p * h + 2 * h]
        b2 = theta[-1]
        return W1, b1, w2, b2

    def n_params(self, p: int) -> int:
        return p * self.hidden + 2 * self.hidden + 1

    def loss(self, theta, X, y01) -> float:
        X = np.ascontiguousarray(X, dtype=np.float64)
        return float(_loss(np.asarray(theta, dtype=np.float64), X, np.asarray(y01, dtype=np.float64), self.hidden, self.decay))

    def gradient(self, theta, X, y01) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        return _gradient(np.asarray(theta, dtype=np.float64), X, np.asarray(y01, dtype=np.float64), self.hidden, self.decay)

    def fit(self, X, y, rng: np.random.Generator):
        X = np.asarray(X, dtype=np.float64)
        self.mean_ = X.mean(axis=0)
        self.sd_ = X.std(axis=0)
        Xs = np.ascontiguousarray((X - self.mean_) / self.sd_)
        y01 = (np.asarray(y) == 1).astype(np.float64)
        theta0 = rng.uniform(-self.init_range, self.init_range, self.n_params(X.shape[1]))
        self.theta_, self.loss_, self.n_iter_ = _variable_metric(
            theta0, Xs, y01, self.hidden, float(self.decay), int(self.maxiter), float(self.gtol)
        )
        return self

    def decision(self, X) -> np.ndarray:
        Xs = (np.asarray(X, dtype=np.float64) - self.mean_) / self.sd_
        W1, b1, w2, b2 = self._unpack(self.theta_, Xs.shape[1])
        return expit(Xs @ W1 + b1) @ w2 + b2

    def predict_proba(self, X) -> np.ndarray:
        return expit(self.decision(X))
