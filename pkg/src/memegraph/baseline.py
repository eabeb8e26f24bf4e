"""Reference classifiers used as independent baselines.

``fit_logistic`` is a Newton/IRLS logistic regression run to convergence;
``synthetic_bayes_scores`` is the exact posterior of the synthetic
generator, i.e. the best any per-record classifier can do.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit, logsumexp

from .dataio import Dataset, SynthConfig, class_means
from .metrics import accuracy, macro_f1


def fit_logistic(X: np.ndarray, y: np.ndarray, l2: float = 1e-8, tol: float = 1e-12, max_iter: int = 200) -> np.ndarray:
    """Weights ``[w..., b]`` of a logistic regression fit by Newton's method."""
    X1 = np.hstack([X, np.ones((X.shape[0], 1))])
    w = np.zeros(X1.shape[1])
    reg = l2 * np.eye(X1.shape[1])
    reg[-1, -1] = 0.0
    for _ in range(max_iter):
        p = expit(X1 @ w)
        grad = X1.T @ (p - y) + reg @ w
        hess = (X1 * (p * (1 - p))[:, None]).T @ X1 + reg
        step = np.linalg.solve(hess, grad)
        w -= step
        if np.max(np.abs(step)) < tol:
            break
    return w


def logistic_scores(w: np.ndarray, X: np.ndarray) -> np.ndarray:
    return expit(X @ w[:-1] + w[-1])


def concat_features(ds: Dataset) -> np.ndarray:
    return np.hstack([ds.text_matrix(), ds.image_matrix()])


def logistic_baseline(train: Dataset, test: Dataset) -> dict[str, float]:
    """Converged LR on [text, image] concatenation, scored at 0.5 on ``test``."""
    w = fit_logistic(concat_features(train), train.labels.astype(np.float64))
    preds = (logistic_scores(w, concat_features(test)) >= 0.5).astype(np.int64)
    return {"accuracy": accuracy(preds, test.labels), "macro_f1": macro_f1(preds, test.labels)}


def synthetic_bayes_scores(cfg: SynthConfig, ds: Dataset) -> np.ndarray:
    """Exact P(y=1 | text, image) under the generator that produced ``ds``."""
    mu_t, mu_v = class_means(cfg)
    T, V = ds.text_matrix(), ds.image_matrix()
    s2 = cfg.noise**2

    def loglik(x, mean):
        return -0.5 * np.sum((x - mean) ** 2, axis=1) / s2

    q = cfg.modality_dropout
    logs = []
    for c in (0, 1):
        t_sig = loglik(T, cfg.mean_separation * mu_t[c])
        v_sig = loglik(V, cfg.mean_separation * mu_v[c])
        t_noise, v_noise = loglik(T, 0.0), loglik(V, 0.0)
        with np.errstate(divide="ignore"):
            comps = np.stack(
                [
                    t_sig + v_sig + np.log(1 - q),
                    t_noise + v_sig + np.log(q / 2),
                    t_sig + v_noise + np.log(q / 2),
                ]
            )
        prior = cfg.positive_rate if c == 1 else 1 - cfg.positive_rate
        with np.errstate(divide="ignore"):
            logs.append(logsumexp(comps, axis=0) + np.log(prior))
    return expit(logs[1] - logs[0])
