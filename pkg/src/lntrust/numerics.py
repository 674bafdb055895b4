"""Probability and loss primitives shared across the package.

All logs are natural logs. Functions accept 1-D vectors; ``softmax`` and
``cross_entropy`` also broadcast over a leading batch axis.
"""

import numpy as np

CE_FLOOR = 1e-12
KL_SMOOTHING = 1e-6


def _as_prob(p):
    return np.asarray(p, dtype=np.float64)


def softmax(logits, axis=-1):
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("softmax: logits must be finite")
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(logits, axis=-1):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def cross_entropy(p, label):
    """-log(p[label] + 1e-12). ``p`` may be (C,) or (n, C) with label array."""
    p = _as_prob(p)
    C = p.shape[-1]
    label = np.asarray(label)
    if np.any(label < 0) or np.any(label >= C):
        raise ValueError(f"cross_entropy: label out of range [0, {C})")
    if p.ndim == 1:
        return float(-np.log(p[int(label)] + CE_FLOOR))
    return -np.log(p[np.arange(p.shape[0]), label] + CE_FLOOR)


def clipped_log_loss(u, eps_dep):
    """-log max(u, eps_dep); bounded by log(1/eps_dep)."""
    if eps_dep <= 0 or eps_dep > 1:
        raise ValueError("clipped_log_loss: eps_dep must lie in (0, 1]")
    return -np.log(np.maximum(u, eps_dep))


def kl_div(p, q, smoothing=KL_SMOOTHING):
    p = _as_prob(p)
    q = _as_prob(q)
    qs = (1.0 - smoothing) * q + smoothing / q.shape[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * (np.log(np.where(p > 0, p, 1.0)) - np.log(qs)), 0.0)
    return np.maximum(terms.sum(axis=-1), 0.0)


def entropy(p):
    p = _as_prob(p)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return terms.sum(axis=-1)


def overlap(p, q):
    return np.minimum(_as_prob(p), _as_prob(q)).sum(axis=-1)


def is_prob_vector(p, tol=1e-6):
    p = _as_prob(p)
    return bool(np.all(p >= 0) and abs(p.sum() - 1.0) <= tol)


def argmax_lowest(p, axis=-1):
    """Argmax with ties broken toward the lowest class index (numpy's rule)."""
    return np.argmax(p, axis=axis)
