"""Epsilon-insensitive support vector regression with an RBF kernel.

The dual is solved by sequential minimal optimization over the 2n-variable form

    min_a  1/2 a' Q a + p' a   s.t.  sum_i s_i a_i = 0,  0 <= a_i <= C

with ``a = [alpha; alpha*]``, ``s = [+1; -1]``, ``Q_ij = s_i s_j K(x_i, x_j)`` and
``p = [eps - y; eps + y]``. Working pairs are chosen with second-order
information (maximal gain among violating pairs).
"""

from collections import OrderedDict

import numpy as np

from ..exceptions import ConvergenceError, FitError
from .base import BaseEstimator, CalibratorMixin

_TAU = 1e-12


def rbf_kernel(A, B, gamma):
    """``exp(-gamma * ||a - b||^2)`` for every row pair of ``A`` and ``B``."""
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


class _KernelColumns:
    """Kernel columns computed on demand; the full matrix is kept when it fits in memory."""

    def __init__(self, X, gamma, max_bytes=256 * 2 ** 20):
        self.X = X
        self.gamma = gamma
        n = X.shape[0]
        self.full = rbf_kernel(X, X, gamma) if n * n * 8 <= max_bytes else None
        self.capacity = max(2, max_bytes // max(1, n * 8))
        self.cache = OrderedDict()
        self.diag = np.ones(n)

    def __call__(self, k):
        if self.full is not None:
            return self.full[:, k]
        col = self.cache.get(k)
        if col is None:
            d = self.X - self.X[k]
            col = np.exp(-self.gamma * np.einsum("ij,ij->i", d, d))
            self.cache[k] = col
            if len(self.cache) > self.capacity:
                self.cache.popitem(last=False)
        else:
            self.cache.move_to_end(k)
        return col


def solve_svr_dual(K, y, C, epsilon, tol=1e-3, max_iter=100_000):
    """Run SMO on the SVR dual.

    Parameters
    ----------
    K : callable
        ``K(k)`` returns kernel column ``k`` (length n).
    y : ndarray of shape (n,)

    Returns
    -------
    alpha : ndarray of shape (2n,)
    rho : float
        Offset; the decision function is ``sum beta_k K(x_k, x) - rho``.
    n_iter : int
    converged : bool
    """
    n = y.size
    s = np.concatenate([np.ones(n), -np.ones(n)])
    a = np.zeros(2 * n)
    G = np.concatenate([epsilon - y, epsilon + y])
    Qd = np.ones(2 * n)  # RBF diagonal

    def qcol(i):
        col = K(i % n)
        return s[i] * s * np.concatenate([col, col])

    it = 0
    converged = False
    while it < max_iter:
        up = ((s > 0) & (a < C)) | ((s < 0) & (a > 0))
        low = ((s > 0) & (a > 0)) | ((s < 0) & (a < C))
        mG = -s * G
        score_up = np.where(up, mG, -np.inf)
        i = int(np.argmax(score_up))
        gmax = score_up[i]
        score_low = np.where(low, mG, np.inf)
        if gmax - score_low.min() < tol:
            converged = True
            break
        Qi = qcol(i)
        b = gmax - mG
        cand = low & (b > 0)
        quad = Qd[i] + Qd - 2.0 * s[i] * s * Qi
        quad = np.where(quad > 0, quad, _TAU)
        obj = np.where(cand, -(b * b) / quad, np.inf)
        j = int(np.argmin(obj))
        Qj = qcol(j)

        ai, aj = a[i], a[j]
        if s[i] != s[j]:
            q = Qd[i] + Qd[j] + 2.0 * Qi[j]
            q = q if q > 0 else _TAU
            delta = (-G[i] - G[j]) / q
            diff = ai - aj
            a[i] += delta
            a[j] += delta
            if diff > 0:
                if a[j] < 0:
                    a[j], a[i] = 0.0, diff
            elif a[i] < 0:
                a[i], a[j] = 0.0, -diff
            if diff > 0:
                if a[i] > C:
                    a[i], a[j] = C, C - diff
            elif a[j] > C:
                a[j], a[i] = C, C + diff
        else:
            q = Qd[i] + Qd[j] - 2.0 * Qi[j]
            q = q if q > 0 else _TAU
            delta = (G[i] - G[j]) / q
            tot = ai + aj
            a[i] -= delta
            a[j] += delta
            if tot > C:
                if a[i] > C:
                    a[i], a[j] = C, tot - C
            elif a[j] < 0:
                a[j], a[i] = 0.0, tot
            if tot > C:
                if a[j] > C:
                    a[j], a[i] = C, tot - C
            elif a[i] < 0:
                a[i], a[j] = 0.0, tot
        G += Qi * (a[i] - ai) + Qj * (a[j] - aj)
        it += 1

    yG = s * G
    at_ub = a >= C
    at_lb = a <= 0
    free = ~(at_ub | at_lb)
    if free.any():
        rho = float(yG[free].mean())
    else:
        ub_mask = (at_ub & (s < 0)) | (at_lb & (s > 0))
        lb_mask = (at_ub & (s > 0)) | (at_lb & (s < 0))
        ub = yG[ub_mask].min() if ub_mask.any() else np.inf
        lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
        rho = float((ub + lb) / 2.0)
    return a, rho, it, converged


def dual_objective(alpha, Kmat, y, epsilon):
    """``1/2 a'Qa + p'a`` of the 2n-variable dual (lower is better)."""
    n = y.size
    beta = alpha[:n] - alpha[n:]
    return float(0.5 * beta @ Kmat @ beta + epsilon * alpha.sum() - y @ beta)


class SupportVectorRegression(CalibratorMixin, BaseEstimator):
    """Epsilon-SVR with an RBF kernel on all predictor columns.

    Parameters
    ----------
    C : float
        Penalty on points outside the tube.
    epsilon : float
        Half-width of the insensitive tube in dBA.
    gamma : float or None
        RBF width; ``None`` uses ``1 / (p * var(X))``.
    tol : float
        KKT violation tolerance for stopping.
    max_iter : int
        SMO iteration cap; hitting it raises ``ConvergenceError``.
    """

    family = "SVR"

    def __init__(self, C=10.0, epsilon=0.5, gamma=None, tol=1e-3, max_iter=100_000):
        self.C = C
        self.epsilon = epsilon
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter

    def _fit(self, X, y):
        if not self.C > 0:
            raise FitError("C must be positive")
        if not self.epsilon >= 0:
            raise FitError("epsilon must be non-negative")
        if self.gamma is None:
            var = float(X.var())
            self.gamma_ = 1.0 / (X.shape[1] * var) if var > 0 else 1.0
        elif self.gamma > 0:
            self.gamma_ = float(self.gamma)
        else:
            raise FitError("gamma must be positive")
        n = y.size
        cols = _KernelColumns(X, self.gamma_)
        a, rho, it, ok = solve_svr_dual(cols, y, float(self.C), float(self.epsilon),
                                        self.tol, self.max_iter)
        beta = a[:n] - a[n:]
        self.n_iter_ = it
        self.intercept_ = -rho
        sv = beta != 0
        self.support_ = np.flatnonzero(sv)
        self.support_vectors_ = X[sv].copy()
        self.dual_coef_ = beta[sv]
        self.alpha_ = a
        f = self._predict(X)
        Ksv = rbf_kernel(self.support_vectors_, self.support_vectors_, self.gamma_)
        wnorm = float(self.dual_coef_ @ Ksv @ self.dual_coef_)
        primal = 0.5 * wnorm + self.C * np.maximum(np.abs(y - f) - self.epsilon, 0.0).sum()
        dual = -(0.5 * wnorm + self.epsilon * a.sum() - y @ beta)
        self.dual_objective_ = -dual
        self.duality_gap_ = float(primal - dual)
        if not ok:
            raise ConvergenceError(
                f"SMO did not converge in {self.max_iter} iterations "
                f"(duality gap {self.duality_gap_:.4g})", self.duality_gap_)

    def _predict(self, X):
        if self.dual_coef_.size == 0:
            return np.full(X.shape[0], self.intercept_)
        out = np.empty(X.shape[0])
        step = 4096
        for k in range(0, X.shape[0], step):
            Kx = rbf_kernel(X[k:k + step], self.support_vectors_, self.gamma_)
            out[k:k + step] = Kx @ self.dual_coef_ + self.intercept_
        return out

    def get_learned(self):
        return {"gamma": self.gamma_, "intercept": self.intercept_,
                "support_vectors": self.support_vectors_.tolist(),
                "dual_coef": self.dual_coef_.tolist()}

    def set_learned(self, p):
        self.gamma_ = p["gamma"]
        self.intercept_ = p["intercept"]
        self.support_vectors_ = np.asarray(p["support_vectors"], dtype=float).reshape(-1, self.n_features_in_)
        self.dual_coef_ = np.asarray(p["dual_coef"], dtype=float)
