"""Alternative neighbor-weighting rules used in the weighting ablation.

Each rule maps validation evidence about the candidate set to simplex
weights. Rules that accumulate evidence across reprobe cycles (hedge,
linucb) take and return a ``state``.
"""

from dataclasses import dataclass, field

import numpy as np

from .numerics import CE_FLOOR, softmax
from .trust import TrustWeights, _Adam, ensemble_loss

KINDS = ("hedge", "weighted_majority", "linucb", "simplex_erm")


@dataclass(frozen=True)
class WeightingParams:
    hedge_eta: float = 2.0
    linucb_ridge: float = 1.0
    linucb_beta: float = 1.0
    linucb_temperature: float = 1.0
    erm_lr: float = 0.05
    erm_steps: int = 300


@dataclass
class Evidence:
    candidates: tuple
    true_probs: np.ndarray  # (K, m) probability each candidate gives the true label
    weighted_acc: np.ndarray  # (K,)
    features: np.ndarray = field(default=None)  # (K, 6)

    @property
    def val_loss(self):
        return -np.mean(np.log(self.true_probs + CE_FLOOR), axis=1)


def _hedge(ev, state, p):
    logw = np.zeros(len(ev.candidates)) if state is None else state
    logw = logw - p.hedge_eta * ev.val_loss
    return softmax(logw), logw


def _weighted_majority(ev, state, p):
    r = np.clip(np.asarray(ev.weighted_acc, dtype=np.float64), 0.0, None)
    s = r.sum()
    mix = r / s if s > 0 else np.full(len(r), 1.0 / len(r))
    return mix, state


def _linucb(ev, state, p):
    F = np.atleast_2d(ev.features)
    dim = F.shape[1]
    if state is None:
        A, b = p.linucb_ridge * np.eye(dim), np.zeros(dim)
    else:
        A, b = state
    A = A + F.T @ F
    b = b + F.T @ np.asarray(ev.weighted_acc, dtype=np.float64)
    A_inv = np.linalg.inv(A)
    coef = A_inv @ b
    bonus = np.sqrt(np.einsum("kd,de,ke->k", F, A_inv, F))
    scores = F @ coef + p.linucb_beta * bonus
    return softmax(scores / p.linucb_temperature), (A, b)


def _simplex_erm(ev, state, p):
    logits = np.zeros(len(ev.candidates))
    opt = _Adam(p.erm_lr)
    for _ in range(p.erm_steps):
        mix = softmax(logits)
        _, dmix = ensemble_loss(mix, ev.true_probs)
        logits = opt.step(logits, mix * (dmix - mix @ dmix))
    return softmax(logits), state


_RULES = {
    "hedge": _hedge,
    "weighted_majority": _weighted_majority,
    "linucb": _linucb,
    "simplex_erm": _simplex_erm,
}


def baseline_weights(kind, evidence, state=None, params=WeightingParams()):
    """Returns (TrustWeights over ``evidence.candidates``, updated state)."""
    if kind not in _RULES:
        raise ValueError(f"unknown weighting rule {kind!r}; expected one of {KINDS}")
    mix, state = _RULES[kind](evidence, state, params)
    return TrustWeights(tuple(int(c) for c in evidence.candidates), mix), state
