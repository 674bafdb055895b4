"""Learned neighbor trust.

Probe responses and class-profile estimates feed a six-dimensional
relational feature vector per candidate neighbor; a small ReLU network
scores each candidate and a softmax over the candidate set gives the
trust weights.
"""

from dataclasses import dataclass

import numpy as np

from .numerics import CE_FLOOR, entropy, kl_div, overlap, softmax

FEATURE_NAMES = ("overlap", "mean_acc", "weighted_acc", "kl", "entropy", "degree")
N_FEATURES = len(FEATURE_NAMES)


@dataclass(frozen=True)
class ProbeResult:
    acc: np.ndarray  # per-class accuracy, 0 where the class is absent
    counts: np.ndarray
    present: np.ndarray  # classes observed in the validation set


def probe_responses(probs, y, C):
    """Per-class argmax accuracy of one candidate on labeled validation data."""
    y = np.asarray(y, dtype=np.int64)
    if y.size == 0:
        raise ValueError("probe_responses needs a nonempty validation set")
    pred = np.argmax(probs, axis=-1)
    counts = np.bincount(y, minlength=C)[:C]
    hits = np.bincount(y[pred == y], minlength=C)[:C]
    present = counts > 0
    acc = np.divide(hits, counts, out=np.zeros(C), where=present)
    return ProbeResult(acc=acc, counts=counts, present=present)


def estimate_profile(probs, C):
    """Histogram of argmax predictions on an unlabeled subset."""
    pred = np.argmax(probs, axis=-1)
    if pred.size == 0:
        raise ValueError("estimate_profile needs at least one example")
    return np.bincount(pred, minlength=C)[:C] / pred.size


def build_features(own_dist, profile_j, probe, degree_j, n, mean_over="all"):
    """[overlap, mean probe acc, w-weighted probe acc, KL(own_dist||profile_j), H(profile_j), degree_j/n].

    ``mean_over="present"`` averages probe accuracy over observed classes only
    instead of dividing by C.
    """
    acc = probe.acc if isinstance(probe, ProbeResult) else np.asarray(probe, dtype=np.float64)
    if mean_over == "present" and isinstance(probe, ProbeResult) and probe.present.any():
        mean_acc = acc[probe.present].mean()
    else:
        mean_acc = acc.mean()
    return np.array(
        [
            overlap(own_dist, profile_j),
            mean_acc,
            float(np.dot(own_dist, acc)),
            kl_div(own_dist, profile_j),
            entropy(profile_j),
            degree_j / n,
        ]
    )


# ---------------------------------------------------------------- trust MLP


class TrustModel:
    """Scalar scorer R^6 -> R: 6 -> H -> H -> 1 with ReLU hidden layers."""

    def __init__(self, params, hidden=32, n_in=N_FEATURES):
        self.params = np.asarray(params, dtype=np.float64)
        self.hidden = hidden
        self.n_in = n_in

    @classmethod
    def init(cls, rng, hidden=32, n_in=N_FEATURES, zero_output=True):
        parts = []
        for fan_in, fan_out in ((n_in, hidden), (hidden, hidden), (hidden, 1)):
            bound = 1.0 / np.sqrt(fan_in)
            parts.append(rng.uniform(-bound, bound, fan_out * fan_in))
            parts.append(rng.uniform(-bound, bound, fan_out))
        params = np.concatenate(parts)
        if zero_output:
            params[-(hidden + 1):] = 0.0
        return cls(params, hidden, n_in)

    def copy(self):
        return TrustModel(self.params.copy(), self.hidden, self.n_in)

    def _unpack(self, params=None):
        params = self.params if params is None else params
        H, k, out = self.hidden, 0, []
        for shape in ((H, self.n_in), (H,), (H, H), (H,), (1, H), (1,)):
            size = int(np.prod(shape))
            out.append(params[k : k + size].reshape(shape))
            k += size
        return out

    def _forward(self, F, params=None):
        W1, b1, W2, b2, W3, b3 = self._unpack(params)
        z1 = F @ W1.T + b1
        a1 = np.maximum(z1, 0.0)
        z2 = a1 @ W2.T + b2
        a2 = np.maximum(z2, 0.0)
        return (a2 @ W3.T + b3)[:, 0], (F, z1, a1, z2, a2)

    def hidden_features(self, F):
        return self._forward(np.atleast_2d(F))[1][4]

    def scores(self, F, params=None):
        return self._forward(np.atleast_2d(np.asarray(F, dtype=np.float64)), params)[0]

    __call__ = scores

    def grad(self, F, dscores, params=None):
        """Gradient of sum(dscores * scores) wrt the flat parameter vector."""
        F = np.atleast_2d(np.asarray(F, dtype=np.float64))
        W1, b1, W2, b2, W3, b3 = self._unpack(params)
        _, (F, z1, a1, z2, a2) = self._forward(F, params)
        ds = np.asarray(dscores)[:, None]
        dW3 = ds.T @ a2
        db3 = ds.sum(axis=0)
        dz2 = (ds @ W3) * (z2 > 0)
        dW2 = dz2.T @ a1
        db2 = dz2.sum(axis=0)
        dz1 = (dz2 @ W2) * (z1 > 0)
        dW1 = dz1.T @ F
        db1 = dz1.sum(axis=0)
        return np.concatenate([dW1.ravel(), db1, dW2.ravel(), db2, dW3.ravel(), db3])


def _score_fn(model):
    return model.scores if isinstance(model, TrustModel) else model


@dataclass(frozen=True)
class TrustWeights:
    candidates: tuple
    mix: np.ndarray

    def restrict(self, subset):
        """Renormalize onto ``subset`` (softmax restricted to fewer options)."""
        subset = list(subset)
        if not subset:
            raise ValueError("cannot restrict trust weights to an empty set")
        pos = [self.candidates.index(c) for c in subset]
        a = self.mix[pos]
        s = a.sum()
        a = a / s if s > 0 else np.full(len(subset), 1.0 / len(subset))
        return TrustWeights(tuple(subset), a)

    def as_dict(self):
        return {int(c): float(a) for c, a in zip(self.candidates, self.mix)}


def trust_weights(model, features, candidates):
    """Softmax of the trust scores over the candidate set."""
    candidates = tuple(int(c) for c in candidates)
    if len(candidates) == 0:
        raise ValueError("trust_weights needs at least one candidate")
    scores = np.asarray(_score_fn(model)(np.atleast_2d(features)), dtype=np.float64)
    return TrustWeights(candidates, softmax(scores))


# ---------------------------------------------------------------- fitting


@dataclass(frozen=True)
class TrustFitConfig:
    lr: float = 0.01
    steps: int = 200
    optimizer: str = "gd"  # gd | adam
    hidden: int = 32


def true_class_probs(preds, y):
    """(K, m, C) candidate predictions -> (K, m) probability of the true label."""
    preds = np.asarray(preds, dtype=np.float64)
    return preds[:, np.arange(preds.shape[1]), np.asarray(y)]


def ensemble_loss(mix, true_probs, loss="ce", eps_dep=0.05):
    """Validation loss of the mix-weighted ensemble and d(loss)/d(mix)."""
    q = mix @ true_probs
    m = true_probs.shape[1]
    if loss == "ce":
        val = float(-np.mean(np.log(q + CE_FLOOR)))
        dq = -1.0 / (q + CE_FLOOR) / m
    elif loss == "clipped":
        val = float(np.mean(-np.log(np.maximum(q, eps_dep))))
        dq = np.where(q > eps_dep, -1.0 / np.maximum(q, eps_dep), 0.0) / m
    else:
        raise ValueError(f"unknown loss {loss!r}")
    return val, true_probs @ dq


def _softmax_backward(mix, dmix):
    return mix * (dmix - mix @ dmix)


class _Adam:
    def __init__(self, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = self.v = None
        self.t = 0

    def step(self, x, g):
        if self.m is None:
            self.m = np.zeros_like(x)
            self.v = np.zeros_like(x)
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * g
        self.v = self.b2 * self.v + (1 - self.b2) * g * g
        mh = self.m / (1 - self.b1**self.t)
        vh = self.v / (1 - self.b2**self.t)
        return x - self.lr * mh / (np.sqrt(vh) + self.eps)


def fit_trust(model, true_probs, features, cfg=TrustFitConfig(), loss="ce", eps_dep=0.05):
    """Fit the trust scorer so the weighted ensemble minimizes validation loss.

    ``true_probs[j, k]`` is candidate j's probability for the true label of validation
    example k. Returns (best model seen, loss trajectory); the starting point
    counts as seen, so the result never does worse on validation than it.
    """
    F = np.atleast_2d(np.asarray(features, dtype=np.float64))
    true_probs = np.asarray(true_probs, dtype=np.float64)
    params = model.params.copy()
    opt = _Adam(cfg.lr) if cfg.optimizer == "adam" else None
    best_params, best_loss, history = params.copy(), np.inf, []
    for step in range(cfg.steps + 1):
        mix = softmax(model.scores(F, params))
        val, dmix = ensemble_loss(mix, true_probs, loss, eps_dep)
        history.append(val)
        if val < best_loss:
            best_loss, best_params = val, params.copy()
        if step == cfg.steps:
            break
        g = model.grad(F, _softmax_backward(mix, dmix), params)
        params = opt.step(params, g) if opt is not None else params - cfg.lr * g
    return TrustModel(best_params, model.hidden, model.n_in), np.array(history)


def validation_ce(mix, true_probs):
    return ensemble_loss(np.asarray(mix), np.asarray(true_probs))[0]


# ---------------------------------------------------------------- interpolation


def interpolate_targets(features, target, rng, hidden=32, tol=1e-3, restarts=3, max_steps=2000):
    """Train a trust scorer whose softmax weights reproduce ``target``.

    Solves the output layer by least squares on random ReLU hidden features
    (exact when the hidden representation separates the candidates), then
    falls back to Adam on KL(target || weights). Returns
    ``(model, success, l1_error)``.
    """
    F = np.atleast_2d(np.asarray(features, dtype=np.float64))
    target = np.asarray(target, dtype=np.float64)
    if np.any(target <= 0):
        raise ValueError("interpolate_targets needs a target in the open simplex")
    z = np.log(target)
    z = z - z.mean()
    if np.allclose(target, target[0]):
        return TrustModel.init(rng, hidden, F.shape[1]), True, 0.0

    best = None
    for _ in range(restarts):
        model = TrustModel.init(rng, hidden, F.shape[1], zero_output=False)
        Hf = model.hidden_features(F)
        A = np.hstack([Hf, np.ones((len(F), 1))])
        coef, *_ = np.linalg.lstsq(A, z, rcond=None)
        model.params[-(hidden + 1):] = coef
        err = float(np.abs(softmax(model.scores(F)) - target).sum())
        if best is None or err < best[1]:
            best = (model, err)
        if err <= tol:
            return model, True, err

    model, err = best
    opt = _Adam(0.01)
    params = model.params.copy()
    for _ in range(max_steps):
        mix = softmax(model.scores(F, params))
        err = float(np.abs(mix - target).sum())
        if err <= tol:
            break
        # gradient of KL(target || mix) wrt scores is mix - target
        params = opt.step(params, model.grad(F, mix - target, params))
    model = TrustModel(params, hidden, F.shape[1])
    err = float(np.abs(softmax(model.scores(F)) - target).sum())
    return model, err <= tol, err


# ---------------------------------------------------------------- importance


def permutation_importance(model, features, true_probs, rng, repeats=10):
    """Increase in validation CE when one feature column is shuffled across
    candidates. Returns (mean, std) arrays of length 6."""
    F = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if F.shape[0] < 2:
        raise ValueError("permutation_importance needs at least two candidates")
    score = _score_fn(model)
    base = validation_ce(softmax(score(F)), true_probs)
    deltas = np.zeros((F.shape[1], repeats))
    for s in range(F.shape[1]):
        for r in range(repeats):
            G = F.copy()
            G[:, s] = rng.permutation(G[:, s])
            deltas[s, r] = validation_ce(softmax(score(G)), true_probs) - base
    return deltas.mean(axis=1), deltas.std(axis=1)
