"""Per-node classifier head: linear or one-hidden-layer ReLU network.

Parameters live in one flat float64 vector so that norms, finite
differences and checkpoints need no structure. ``HeadSpec.unpack`` returns
views into it.
"""

import json
import struct
from dataclasses import dataclass

import numpy as np

from .numerics import log_softmax, softmax


@dataclass(frozen=True)
class HeadSpec:
    d: int
    C: int
    hidden: int = 0

    @property
    def shapes(self):
        if self.hidden == 0:
            return [(self.C, self.d), (self.C,)]
        H = self.hidden
        return [(H, self.d), (H,), (self.C, H), (self.C,)]

    @property
    def n_params(self):
        return int(sum(np.prod(s) for s in self.shapes))

    def unpack(self, params):
        out, k = [], 0
        for s in self.shapes:
            size = int(np.prod(s))
            out.append(params[k : k + size].reshape(s))
            k += size
        return out


@dataclass(frozen=True)
class SgdConfig:
    lr: float = 0.1
    weight_decay: float = 5e-4
    steps_per_round: int = 5
    batch_size: int = 32
    dropout: float = 0.5

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")
        if self.weight_decay < 0:
            raise ValueError("weight decay must be non-negative")


def init_params(spec, rng):
    """Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases."""
    fan_ins = [spec.d, spec.d] if spec.hidden == 0 else [spec.d, spec.d, spec.hidden, spec.hidden]
    parts = []
    for shape, fan_in in zip(spec.shapes, fan_ins):
        bound = 1.0 / np.sqrt(fan_in)
        parts.append(rng.uniform(-bound, bound, size=int(np.prod(shape))))
    return np.concatenate(parts)


def _check_x(spec, X):
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X2 = X[None, :] if single else X
    if X2.shape[1] != spec.d:
        raise ValueError(f"input dimension {X2.shape[1]} does not match head dimension {spec.d}")
    return X2, single


def _forward_cache(spec, params, X, mask):
    if spec.hidden == 0:
        W, b = spec.unpack(params)
        return X @ W.T + b, None
    W1, b1, W2, b2 = spec.unpack(params)
    z1 = X @ W1.T + b1
    a = np.maximum(z1, 0.0)
    if mask is not None:
        a = a * mask
    return a @ W2.T + b2, (z1, a)


def forward(spec, params, X, mask=None):
    """Logits; eval mode unless a dropout ``mask`` is supplied."""
    X2, single = _check_x(spec, X)
    logits, _ = _forward_cache(spec, params, X2, mask)
    return logits[0] if single else logits


def predict_proba(spec, params, X):
    return softmax(forward(spec, params, X))


def predict(spec, params, X):
    return np.argmax(forward(spec, params, X), axis=-1)


def accuracy(spec, params, X, y):
    if len(y) == 0:
        return float("nan")
    return float(np.mean(predict(spec, params, X) == y))


def backward(spec, params, X, dlogits, cache, mask):
    """Reverse-mode pass from d(loss)/d(logits) to a flat parameter gradient."""
    if spec.hidden == 0:
        return np.concatenate([(dlogits.T @ X).ravel(), dlogits.sum(axis=0)])
    W1, b1, W2, b2 = spec.unpack(params)
    z1, a = cache
    dW2 = dlogits.T @ a
    db2 = dlogits.sum(axis=0)
    da = dlogits @ W2
    if mask is not None:
        da = da * mask
    dz1 = da * (z1 > 0)
    dW1 = dz1.T @ X
    db1 = dz1.sum(axis=0)
    return np.concatenate([dW1.ravel(), db1, dW2.ravel(), db2])


def logit_loss_grad(spec, params, X, loss_and_dlogits, mask=None):
    """Generic helper: ``loss_and_dlogits(logits) -> (loss, dloss/dlogits)``."""
    X2, _ = _check_x(spec, X)
    logits, cache = _forward_cache(spec, params, X2, mask)
    loss, dlogits = loss_and_dlogits(logits)
    return loss, backward(spec, params, X2, dlogits, cache, mask)


def weighted_ce(logits, y, weights=None):
    """Mean of weight * CE(logits, y) and its gradient wrt logits."""
    n = logits.shape[0]
    logp = log_softmax(logits)
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    loss = float(-(w * logp[np.arange(n), y]).sum() / n)
    d = np.exp(logp)
    d[np.arange(n), y] -= 1.0
    return loss, d * (w / n)[:, None]


def supervised_loss_grad(spec, params, X, y, weight_decay=0.0, mask=None):
    """Mean cross-entropy + (weight_decay / 2) * ||params||^2."""
    loss, grad = logit_loss_grad(spec, params, X, lambda z: weighted_ce(z, y), mask)
    loss += 0.5 * weight_decay * float(params @ params)
    return loss, grad + weight_decay * params


def dropout_mask(rng, n, hidden, p):
    if hidden == 0 or p <= 0:
        return None
    return (rng.random((n, hidden)) >= p) / (1.0 - p)


def sample_batch(n, batch_size, rng):
    if batch_size <= 0 or batch_size >= n:
        return np.arange(n)
    return np.sort(rng.choice(n, size=batch_size, replace=False))


def supervised_step(spec, params, X, y, cfg, rng=None, mask=None):
    """One SGD step on the supervised objective; returns (params, loss)."""
    if len(y) == 0:
        raise ValueError("supervised_step on an empty batch")
    if mask is None and rng is not None:
        mask = dropout_mask(rng, len(y), spec.hidden, cfg.dropout)
    loss, grad = supervised_loss_grad(spec, params, X, y, cfg.weight_decay, mask)
    return params - cfg.lr * grad, loss


def local_round(spec, params, X, y, cfg, rng, on_step=None):
    """``cfg.steps_per_round`` minibatch steps drawing batches/masks from ``rng``.

    ``on_step(params, idx, mask)`` is called before each step (used by the
    drift verifier to replay the exact batches).
    """
    for _ in range(cfg.steps_per_round):
        idx = sample_batch(len(y), cfg.batch_size, rng)
        mask = dropout_mask(rng, len(idx), spec.hidden, cfg.dropout)
        if on_step is not None:
            on_step(params, idx, mask)
        params, _ = supervised_step(spec, params, X[idx], y[idx], cfg, mask=mask)
    return params


def train_stage1(spec, params, X, y, rounds, cfg, rng_for_round):
    """Local training without communication. ``rng_for_round(r)`` yields the
    generator for round ``r`` so runs sharing it share every batch."""
    if len(y) == 0:
        raise ValueError("train_stage1 needs a nonempty labeled set")
    for r in range(rounds):
        params = local_round(spec, params, X, y, cfg, rng_for_round(r))
    return params


# checkpoint format: uint64 LE header length, UTF-8 JSON header, float64 LE data
def save_checkpoint(path, params, spec, node, round_):
    header = json.dumps(
        {"d": spec.d, "C": spec.C, "hidden": spec.hidden, "shapes": [list(s) for s in spec.shapes],
         "node": int(node), "round": int(round_), "n_params": spec.n_params},
        sort_keys=True,
    ).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(np.asarray(params, dtype="<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        (n,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(n).decode())
        params = np.frombuffer(fh.read(), dtype="<f8").astype(np.float64)
    spec = HeadSpec(d=header["d"], C=header["C"], hidden=header["hidden"])
    if params.size != spec.n_params:
        raise ValueError("checkpoint size does not match its header")
    return params, spec, header
