"""Soft-margin SVM trained by sequential minimal optimization.

One binary machine per class (one-vs-rest). Probabilities come from Platt
scaling: a regularized sigmoid fit on the training decision values, then
normalization across classes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

KKT_TOLERANCE = 1e-3


class SvmError(ValueError):
    pass


def rbf_kernel(a, b, gamma):
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    sq = (a**2).sum(axis=1)[:, None] + (b**2).sum(axis=1)[None, :] - 2.0 * a @ b.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


def linear_kernel(a, b, gamma=None):
    return np.atleast_2d(a) @ np.atleast_2d(b).T


KERNELS = {"rbf": rbf_kernel, "linear": linear_kernel}


def scale_gamma(X):
    """gamma = 1 / (D * var(X)), the usual data-scaled RBF width."""
    X = np.asarray(X, dtype=float)
    var = X.var()
    return 1.0 / (X.shape[1] * var) if var > 0 else 1.0


@dataclass
class BinarySvm:
    support_vectors: np.ndarray  # (m, D)
    dual_coef: np.ndarray  # (m,) alpha_i * y_i
    bias: float
    platt_a: float
    platt_b: float
    # diagnostics retained from training
    max_kkt_violation: float = 0.0
    n_iterations: int = 0

    def decision(self, X, kernel, gamma):
        k = KERNELS[kernel](X, self.support_vectors, gamma)
        return k @ self.dual_coef + self.bias

    def proba(self, X, kernel, gamma):
        return platt_predict(self.decision(X, kernel, gamma), self.platt_a, self.platt_b)


@dataclass
class SvmModel:
    machines: list
    class_names: tuple
    kernel: str = "rbf"
    gamma: float = 1.0
    C: float = 10.0
    feature_dim: int = 0
    meta: dict = field(default_factory=dict)

    def decision_values(self, X):
        X = self._check(X)
        return np.column_stack([m.decision(X, self.kernel, self.gamma) for m in self.machines])

    def predict_proba(self, X):
        """Per-class Platt probabilities, normalized to sum 1 per row."""
        X = self._check(X)
        raw = np.column_stack([m.proba(X, self.kernel, self.gamma) for m in self.machines])
        totals = raw.sum(axis=1, keepdims=True)
        uniform = np.full_like(raw, 1.0 / raw.shape[1])
        return np.where(totals > 0, raw / np.where(totals > 0, totals, 1.0), uniform)

    def predict(self, X):
        return self.predict_proba(X).argmax(axis=1)

    def _check(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.feature_dim:
            raise SvmError(
                f"dimension mismatch: data has {X.shape[1]}, model expects {self.feature_dim}"
            )
        return X


def _smo_binary(K, y, C, tol=KKT_TOLERANCE, max_iters=200_000, seed=0):
    """Sequential minimal optimization on a precomputed kernel matrix.

    Returns (alpha, b, steps). Standard two-loop structure: alternate sweeps
    over all examples and over the non-bound set, pairing each KKT-violating
    multiplier with the largest-error-gap partner and falling back to the
    non-bound set, then everything, before giving up on that example.
    """
    n = len(y)
    alpha = np.zeros(n)
    b = 0.0
    errors = -y.astype(float)  # f(x) = 0 initially
    rng = np.random.default_rng(seed)
    steps = 0

    def take_step(i, j):
        nonlocal b, steps
        if i == j:
            return False
        ai_old, aj_old = alpha[i], alpha[j]
        if y[i] != y[j]:
            lo, hi = max(0.0, aj_old - ai_old), min(C, C + aj_old - ai_old)
        else:
            lo, hi = max(0.0, ai_old + aj_old - C), min(C, ai_old + aj_old)
        if lo >= hi:
            return False
        eta = 2.0 * K[i, j] - K[i, i] - K[j, j]
        if eta >= -1e-15:
            return False
        aj = aj_old - y[j] * (errors[i] - errors[j]) / eta
        aj = min(max(aj, lo), hi)
        if abs(aj - aj_old) < 1e-12:
            return False
        ai = ai_old + y[i] * y[j] * (aj_old - aj)
        alpha[i], alpha[j] = ai, aj

        b1 = b - errors[i] - y[i] * (ai - ai_old) * K[i, i] - y[j] * (aj - aj_old) * K[i, j]
        b2 = b - errors[j] - y[i] * (ai - ai_old) * K[i, j] - y[j] * (aj - aj_old) * K[j, j]
        if 0.0 < ai < C:
            new_b = b1
        elif 0.0 < aj < C:
            new_b = b2
        else:
            new_b = (b1 + b2) / 2.0
        db = new_b - b
        b = new_b
        errors[:] += (
            y[i] * (ai - ai_old) * K[:, i] + y[j] * (aj - aj_old) * K[:, j] + db
        )
        steps += 1
        return True

    def examine(i):
        r = errors[i] * y[i]
        if not ((r < -tol and alpha[i] < C) or (r > tol and alpha[i] > 0)):
            return False
        nonbound = np.flatnonzero((alpha > 1e-12) & (alpha < C - 1e-12))
        if len(nonbound) > 1:
            j = int(np.argmax(np.abs(errors - errors[i])))
            if take_step(i, j):
                return True
        for j in rng.permutation(nonbound):
            if take_step(i, int(j)):
                return True
        for j in rng.permutation(n):
            if take_step(i, int(j)):
                return True
        return False

    examine_all = True
    changed = 0
    while (changed > 0 or examine_all) and steps < max_iters:
        changed = 0
        if examine_all:
            candidates = range(n)
        else:
            candidates = np.flatnonzero((alpha > 1e-12) & (alpha < C - 1e-12))
        for i in candidates:
            changed += int(examine(int(i)))
        if examine_all:
            examine_all = False
        elif changed == 0:
            examine_all = True
    return alpha, b, steps


def kkt_violation(K, y, alpha, b, C):
    """Largest violation of the dual optimality conditions."""
    f = (alpha * y) @ K + b
    r = (f - y) * y
    viol = np.zeros_like(r)
    lower = alpha < 1e-8  # must have r >= 0
    upper = alpha > C - 1e-8  # must have r <= 0
    inner = ~lower & ~upper  # must have r == 0
    viol[lower] = np.maximum(0.0, -r[lower])
    viol[upper] = np.maximum(0.0, r[upper])
    viol[inner] = np.abs(r[inner])
    return float(viol.max()) if len(viol) else 0.0


def platt_fit(decision, labels, max_iter=100, min_step=1e-10, sigma=1e-12):
    """Regularized maximum-likelihood sigmoid fit (Newton with backtracking).

    labels are +/-1; returns (A, B) with P(y=1 | f) = 1 / (1 + exp(A f + B)).
    """
    decision = np.asarray(decision, dtype=float)
    prior1 = int((labels > 0).sum())
    prior0 = len(labels) - prior1
    hi = (prior1 + 1.0) / (prior1 + 2.0)
    lo = 1.0 / (prior0 + 2.0)
    t = np.where(labels > 0, hi, lo)

    def objective(a, b):
        z = decision * a + b
        # stable log(1 + exp(z)) split by sign
        pos = z >= 0
        val = np.empty_like(z)
        val[pos] = t[pos] * z[pos] + np.log1p(np.exp(-z[pos]))
        val[~pos] = (t[~pos] - 1.0) * z[~pos] + np.log1p(np.exp(z[~pos]))
        return val.sum()

    a, b = 0.0, np.log((prior0 + 1.0) / (prior1 + 1.0))
    fval = objective(a, b)
    for _ in range(max_iter):
        z = decision * a + b
        p = np.where(z >= 0, np.exp(-z) / (1.0 + np.exp(-z)), 1.0 / (1.0 + np.exp(z)))
        q = 1.0 - p
        d2 = p * q
        h11 = float((decision**2 * d2).sum()) + sigma
        h22 = float(d2.sum()) + sigma
        h21 = float((decision * d2).sum())
        d1 = t - p
        g1 = float((decision * d1).sum())
        g2 = float(d1.sum())
        if abs(g1) < 1e-5 and abs(g2) < 1e-5:
            break
        det = h11 * h22 - h21 * h21
        da = -(h22 * g1 - h21 * g2) / det
        db = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * da + g2 * db
        step = 1.0
        while step >= min_step:
            na, nb = a + step * da, b + step * db
            nf = objective(na, nb)
            if nf < fval + 1e-4 * step * gd:
                a, b, fval = na, nb, nf
                break
            step /= 2.0
        else:
            break
    return a, b


def platt_predict(decision, a, b):
    z = np.asarray(decision, dtype=float) * a + b
    return np.where(z >= 0, np.exp(-z) / (1.0 + np.exp(-z)), 1.0 / (1.0 + np.exp(z)))


def svm_train(X, labels, class_names, C=10.0, kernel="rbf", gamma=None, tol=KKT_TOLERANCE, seed=0):
    """One-vs-rest SMO training with per-machine Platt calibration."""
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if kernel not in KERNELS:
        raise SvmError(f"unknown kernel {kernel!r}")
    classes = np.unique(labels)
    if len(classes) < 2:
        raise SvmError(f"need at least 2 classes, got {len(classes)}")
    counts = np.bincount(labels, minlength=len(class_names))
    thin = [class_names[c] for c in range(len(class_names)) if 0 < counts[c] < 2]
    if thin:
        raise SvmError(f"need at least 2 samples per class; too few for {thin}")
    if gamma is None:
        gamma = scale_gamma(X) if kernel == "rbf" else 1.0
    K = KERNELS[kernel](X, X, gamma)

    machines = []
    for c in range(len(class_names)):
        y = np.where(labels == c, 1.0, -1.0)
        alpha, b, iters = _smo_binary(K, y, C, tol=tol, seed=seed + c)
        decision = (alpha * y) @ K + b
        a_platt, b_platt = platt_fit(decision, y)
        keep = alpha > 1e-8
        machines.append(
            BinarySvm(
                support_vectors=X[keep].copy(),
                dual_coef=(alpha * y)[keep],
                bias=float(b),
                platt_a=a_platt,
                platt_b=b_platt,
                max_kkt_violation=kkt_violation(K, y, alpha, b, C),
                n_iterations=iters,
            )
        )
    return SvmModel(
        machines=machines,
        class_names=tuple(class_names),
        kernel=kernel,
        gamma=float(gamma),
        C=float(C),
        feature_dim=X.shape[1],
    )
