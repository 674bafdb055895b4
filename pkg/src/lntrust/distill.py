"""Trust-weighted ensembling, negative-transfer gate, confidence filter,
importance weights and the hard / soft distillation losses."""

import numpy as np

from .node_model import logit_loss_grad, weighted_ce
from .numerics import log_softmax


def ensemble_predict(mix, probs):
    """Convex combination of candidate predictions.

    ``mix`` (K,) and ``probs`` (K, ..., C) with one slice per candidate.
    """
    mix = np.asarray(mix, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape[0] != mix.shape[0]:
        raise ValueError(f"{mix.shape[0]} weights for {probs.shape[0]} candidate predictions")
    return np.tensordot(mix, probs, axes=1)


def weighted_probe_accuracy(w, acc):
    """Distribution-weighted probe accuracy sum_c w^c acc^c."""
    return float(np.dot(w, acc))


def effective_weight(a_self, a_ens, lambda_distil, eps=1e-8):
    return lambda_distil * min(1.0, a_ens / (a_self + eps))


def filter_threshold(tau_abs, tau_conf, C):
    return max(tau_abs, 1.0 / C + tau_conf)


def confidence_filter(ens_probs, tau_abs, tau_conf):
    """Indices whose ensemble max-probability strictly exceeds the threshold."""
    ens_probs = np.atleast_2d(ens_probs)
    thresh = filter_threshold(tau_abs, tau_conf, ens_probs.shape[-1])
    return np.flatnonzero(ens_probs.max(axis=-1) > thresh)


def importance_weight(w, ens_probs):
    """(imp, pseudo) with pseudo the lowest-index argmax and imp = C * w[pseudo]."""
    ens_probs = np.asarray(ens_probs)
    pseudo = np.argmax(ens_probs, axis=-1)
    return len(w) * np.asarray(w)[pseudo], pseudo


def hard_loss_grad(spec, params, X, pseudo, imp, mask=None):
    """(1/|B*|) sum imp * CE(h(x), pseudo) and its gradient."""
    if len(pseudo) == 0:
        return 0.0, np.zeros_like(params)
    return logit_loss_grad(spec, params, X, lambda z: weighted_ce(z, pseudo, imp), mask)


def soft_kl(logits, target, imp, alpha_kl):
    """(alpha_kl/n) sum imp * KL(target || softmax(logits)) and d/dlogits."""
    n = logits.shape[0]
    logs = log_softmax(logits)
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = np.where(target > 0, target * np.log(np.where(target > 0, target, 1.0)), 0.0).sum(axis=1)
    kl = ent - (target * logs).sum(axis=1)
    scale = alpha_kl * imp / n
    loss = float((scale * kl).sum())
    return loss, (np.exp(logs) - target) * scale[:, None]


def soft_loss_grad(spec, params, X, ens_probs, imp, alpha_kl, mask=None):
    if len(imp) == 0:
        return 0.0, np.zeros_like(params)
    ens_probs = np.asarray(ens_probs, dtype=np.float64)
    return logit_loss_grad(spec, params, X, lambda z: soft_kl(z, ens_probs, np.asarray(imp), alpha_kl), mask)


def distill_step_hard(spec, params, X, pseudo, imp, lambda_eff, lr, mask=None):
    """params - lr * lambda_eff * grad; no-op with loss 0 on an empty batch."""
    if len(pseudo) == 0:
        return params.copy(), 0.0
    loss, grad = hard_loss_grad(spec, params, X, pseudo, imp, mask)
    return params - (lr * lambda_eff) * grad, loss


def distill_step_soft(spec, params, X, ens_probs, imp, lambda_eff, alpha_kl, lr, mask=None):
    if len(imp) == 0:
        return params.copy(), 0.0
    loss, grad = soft_loss_grad(spec, params, X, ens_probs, imp, alpha_kl, mask)
    return params - (lr * lambda_eff) * grad, loss


def distill_grad(variant, spec, params, X, ens_probs, imp, alpha_kl=0.3, mask=None):
    """Gradient of the realized distillation loss for either variant."""
    if variant == "hard":
        return hard_loss_grad(spec, params, X, np.argmax(ens_probs, axis=-1), imp, mask)
    if variant == "soft":
        return soft_loss_grad(spec, params, X, ens_probs, imp, alpha_kl, mask)
    raise ValueError(f"unknown distillation variant {variant!r}")
