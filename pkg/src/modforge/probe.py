"""Competition strength: how well a linear map of the fused latent reproduces a concept.

``d = sum ||C - f(z)||^2 / sum ||C - mean(C)||^2`` on a held-out split, where
``f(z) = W z + b`` is a ridge fit on a second held-out split. 0 means the
latent still carries the competition-free behaviour, 1 means it is no better
than predicting the mean concept output.
"""
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateError, NumericError
from .tensor import no_grad

DEFAULT_LAMBDA = 120.0


@dataclass
class ProbeResult:
    modality: str
    W: np.ndarray
    b: np.ndarray
    d_raw: float
    d: float
    n_fit: int
    n_eval: int
    lam: float

    def to_dict(self):
        return {"modality": self.modality, "d_raw": self.d_raw, "d": self.d,
                "lambda": self.lam, "n_fit": self.n_fit, "n_eval": self.n_eval}


def ridge_objective(W, b, Z, T, lam):
    """``sum_i ||W z_i + b - t_i||^2 + lam * ||W||_F^2`` (intercept unpenalized)."""
    resid = Z @ W.T + b - T
    return float(np.sum(resid ** 2) + lam * np.sum(W ** 2))


def fit_linear_probe(Z, T, lam=DEFAULT_LAMBDA):
    """Closed-form minimizer of :func:`ridge_objective`. Returns ``(W [K, D], b [K])``."""
    Z = np.asarray(Z, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64)
    if Z.ndim != 2 or T.ndim != 2 or Z.shape[0] != T.shape[0]:
        raise ConfigError(f"probe inputs disagree: Z {Z.shape}, targets {T.shape}")
    if lam < 0:
        raise ConfigError(f"lambda must be non-negative, got {lam}")
    n, D = Z.shape
    if n <= D:
        warnings.warn(f"probe fit with n={n} samples for D={D} features", RuntimeWarning, stacklevel=2)
    z_mean, t_mean = Z.mean(axis=0), T.mean(axis=0)
    Zc, Tc = Z - z_mean, T - t_mean
    A = Zc.T @ Zc + lam * np.eye(D)
    if lam == 0 and np.linalg.matrix_rank(A) < D:
        raise NumericError("singular normal equations with lambda=0; use lambda > 0")
    W = np.linalg.solve(A, Zc.T @ Tc).T
    b = t_mean - W @ z_mean
    return W, b


def competition_strength(W, b, Z_eval, T_eval):
    T_eval = np.asarray(T_eval, dtype=np.float64)
    pred = np.asarray(Z_eval, dtype=np.float64) @ W.T + b
    denom = float(np.sum((T_eval - T_eval.mean(axis=0)) ** 2))
    if denom == 0.0:
        raise DegenerateError("concept outputs have zero variance on the evaluation split")
    d_raw = float(np.sum((T_eval - pred) ** 2)) / denom
    return d_raw, min(max(d_raw, 0.0), 1.0)


def probe_modality(name, Z_fit, T_fit, Z_eval, T_eval, lam=DEFAULT_LAMBDA):
    W, b = fit_linear_probe(Z_fit, T_fit, lam)
    d_raw, d = competition_strength(W, b, Z_eval, T_eval)
    return ProbeResult(name, W, b, d_raw, d, len(Z_fit), len(Z_eval), float(lam))


def probe_pipeline(model, concepts, dataset, fit_indices, eval_indices, lam=DEFAULT_LAMBDA):
    """One :class:`ProbeResult` per modality of ``model``."""
    fit_indices = np.asarray(fit_indices, dtype=np.intp)
    eval_indices = np.asarray(eval_indices, dtype=np.intp)
    if np.intersect1d(fit_indices, eval_indices).size:
        raise ConfigError("probe fit and eval splits overlap")
    missing = set(model.names) - set(concepts)
    if missing:
        raise ConfigError(f"no concept for modality/ies {sorted(missing)}")
    with no_grad():
        Z_fit = model.latent_features(dataset.take(fit_indices)[0]).data
        Z_eval = model.latent_features(dataset.take(eval_indices)[0]).data
    results = {}
    for m in model.names:
        c = concepts[m]
        T_fit = c.predict(dataset.features[m][fit_indices])
        T_eval = c.predict(dataset.features[m][eval_indices])
        results[m] = probe_modality(m, Z_fit, T_fit, Z_eval, T_eval, lam)
    return results
