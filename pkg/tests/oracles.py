"""Independent reference computations used by the tests.

None of these call into the code paths they are used to check.
"""
import itertools
import math

import numpy as np


def central_diff(f, arrays, eps=1e-5):
    """Central finite-difference gradient of scalar ``f()`` w.r.t. each array (perturbed in place)."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = a[i]
            a[i] = old + eps
            fp = f()
            a[i] = old - eps
            fm = f()
            a[i] = old
            g[i] = (fp - fm) / (2 * eps)
        grads.append(g)
    return grads


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b))))


def softmax_logprob(logits, labels):
    """Mean log-probability of the true class, computed the textbook way in extended precision."""
    total = 0.0
    for row, y in zip(np.asarray(logits, dtype=np.longdouble), labels):
        m = row.max()
        p = np.exp(row - m) / np.exp(row - m).sum()
        total += math.log(float(p[y]))
    return total / len(labels)


def shapley_by_permutations(names, value):
    """Shapley attribution by averaging marginal contributions over all k! orderings.

    ``value(frozenset)`` gives the coalition output; the empty coalition is 0.
    """
    k = len(names)
    cache = {}

    def v(S):
        if not S:
            return 0.0
        if S not in cache:
            cache[S] = value(S)
        return cache[S]

    out = {m: 0.0 for m in names}
    for order in itertools.permutations(names):
        seen = frozenset()
        for m in order:
            out[m] = out[m] + (v(seen | {m}) - v(seen))
            seen = seen | {m}
    return {m: out[m] / math.factorial(k) for m in names}


def ridge_by_gradient_descent(Z, T, lam, iters=200000, tol=1e-13):
    """Minimize sum ||W z + b - t||^2 + lam ||W||^2 by plain gradient descent."""
    n, D = Z.shape
    K = T.shape[1]
    W = np.zeros((K, D))
    b = np.zeros(K)
    X = np.hstack([Z, np.ones((n, 1))])
    H = 2 * (X.T @ X) + 2 * lam * np.diag([1.0] * D + [0.0])
    step = 1.0 / np.linalg.eigvalsh(H).max()
    for _ in range(iters):
        resid = Z @ W.T + b - T
        gW = 2 * resid.T @ Z + 2 * lam * W
        gb = 2 * resid.sum(axis=0)
        W -= step * gW
        b -= step * gb
        if max(np.abs(gW).max(), np.abs(gb).max()) < tol * n:
            break
    return W, b


def linear_classifier_accuracy(X_fit, y_fit, X_eval, y_eval, K, iters=500, lr=0.5, l2=1e-4):
    """Held-out accuracy of full-batch softmax regression on standardized features."""
    mu, sd = X_fit.mean(0), X_fit.std(0) + 1e-12
    Xf = np.hstack([(X_fit - mu) / sd, np.ones((len(X_fit), 1))])
    Xe = np.hstack([(X_eval - mu) / sd, np.ones((len(X_eval), 1))])
    W = np.zeros((Xf.shape[1], K))
    Y = np.eye(K)[y_fit]
    for _ in range(iters):
        z = Xf @ W
        p = np.exp(z - z.max(1, keepdims=True))
        p /= p.sum(1, keepdims=True)
        W -= lr * (Xf.T @ (p - Y) / len(Xf) + l2 * W)
    return float(np.mean(np.argmax(Xe @ W, 1) == y_eval))
