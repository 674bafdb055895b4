"""Synthetic feature pools and the skewed per-node partition.

Examples are identified by their row index in the pool, so disjointness of
labeled / validation / unlabeled / test sets is checked on index sets.
"""

import csv
import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import seeding


class CapacityError(RuntimeError):
    """The pool does not hold enough examples of some class."""


@dataclass(frozen=True, eq=False)
class SyntheticPool:
    X: np.ndarray
    y: np.ndarray
    n_classes: int
    means: np.ndarray | None = None
    noise: float | None = None

    @property
    def dim(self):
        return self.X.shape[1]

    def __len__(self):
        return len(self.y)

    def class_indices(self, c):
        return np.flatnonzero(self.y == c)


def gen_pool(C, d, n_per_class, blob_separation, noise, seed, n_modes=1):
    """Isotropic Gaussian class blobs.

    Class means sit at ``blob_separation`` along orthonormal directions
    (random unit directions when ``d < C``). With ``n_modes > 1`` each
    class is a mixture of sub-blobs scattered around its mean.
    """
    if C < 2 or d < 2:
        raise ValueError("gen_pool needs C >= 2 and d >= 2")
    rng = seeding.stream(seed, seeding.POOL)
    if d >= C:
        q, _ = np.linalg.qr(rng.standard_normal((d, C)))
        dirs = q.T
    else:
        dirs = rng.standard_normal((C, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    means = blob_separation * dirs
    X = np.empty((C * n_per_class, d))
    y = np.repeat(np.arange(C), n_per_class)
    for c in range(C):
        rows = slice(c * n_per_class, (c + 1) * n_per_class)
        centre = np.broadcast_to(means[c], (n_per_class, d))
        if n_modes > 1:
            offsets = 0.5 * blob_separation * rng.standard_normal((n_modes, d)) / np.sqrt(d)
            centre = centre + offsets[rng.integers(0, n_modes, n_per_class)]
        X[rows] = centre + noise * rng.standard_normal((n_per_class, d))
    return SyntheticPool(X=X, y=y, n_classes=C, means=means, noise=noise)


def load_features_csv(path, n_classes=None):
    """Read ``label,f1,...,fd`` rows (a header line is skipped if present)."""
    labels, feats = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            try:
                lab = int(row[0])
            except ValueError:
                continue  # header
            labels.append(lab)
            feats.append([float(v) for v in row[1:]])
    y = np.array(labels, dtype=np.int64)
    X = np.array(feats, dtype=np.float64)
    C = int(n_classes) if n_classes is not None else int(y.max()) + 1
    return SyntheticPool(X=X, y=y, n_classes=C)


@dataclass(frozen=True)
class SkewSpec:
    skew: float = 10.0
    min_classes: int = 2
    alpha_size: float = 0.05
    per_node: int = 100
    test_fraction: float = 0.15
    unlabeled_per_node: int = 400

    def check(self, C):
        if self.skew < 1:
            raise ValueError("skew factor must be >= 1")
        if not 1 <= self.min_classes <= C:
            raise ValueError("min_classes must lie in [1, C]")
        if self.alpha_size <= 0:
            raise ValueError("alpha_size must be positive")


@dataclass(frozen=True, eq=False)
class NodeDataset:
    node: int
    pool: SyntheticPool = field(repr=False)
    labeled: np.ndarray
    unlabeled: np.ndarray
    test: np.ndarray
    reserve: np.ndarray = field(repr=False)  # fresh P_i draws for validation
    w: np.ndarray = None
    train: np.ndarray | None = None  # Stage-2 labeled set once validation is split
    val: np.ndarray | None = None

    def xy(self, part):
        idx = getattr(self, part)
        return self.pool.X[idx], self.pool.y[idx]

    @property
    def stage2(self):
        return self.labeled if self.train is None else self.train


def class_distribution(labels, C):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("class_distribution of an empty label set")
    return np.bincount(labels, minlength=C)[:C] / labels.size


def primary_classes(i, k_min, C):
    return [(i * k_min + t) % C for t in range(k_min)]


def sampling_weights(i, spec, C):
    q = np.ones(C)
    q[primary_classes(i, spec.min_classes, C)] = spec.skew
    return q / q.sum()


def _balanced_counts(total, C):
    base = np.full(C, total // C)
    base[: total % C] += 1
    return base


def plan_partition(n_nodes, spec, C, seed, balanced=None):
    """Per-node class counts for each split, before touching a pool.

    ``balanced`` maps node -> labeled size for nodes drawn without skew.
    """
    balanced = balanced or {}
    spec.check(C)
    rng = seeding.stream(seed, seeding.PARTITION, 0)
    share = rng.dirichlet(np.full(n_nodes, spec.alpha_size))
    sizes = np.maximum(np.floor(share * spec.per_node * n_nodes).astype(int), 2 * spec.min_classes)
    n_test = int(round(spec.test_fraction * spec.per_node))
    plan = []
    for i in range(n_nodes):
        q = sampling_weights(i, spec, C)
        lab = rng.multinomial(sizes[i], q)
        if i in balanced:
            q = np.full(C, 1.0 / C)
            lab = _balanced_counts(balanced[i], C)
        plan.append(
            {
                "labeled": lab,
                "test": rng.multinomial(n_test, q),
                "reserve": np.ceil(0.5 * lab).astype(int),
                "unlabeled": _balanced_counts(spec.unlabeled_per_node, C),
            }
        )
    return plan


def required_per_class(plan):
    return np.sum([sum(p.values()) for p in plan], axis=0)


def partition(pool, n_nodes, spec, seed, balanced=None):
    C = pool.n_classes
    plan = plan_partition(n_nodes, spec, C, seed, balanced)
    need = required_per_class(plan)
    rng = seeding.stream(seed, seeding.PARTITION, 1)
    avail = []
    for c in range(C):
        idx = pool.class_indices(c)
        if len(idx) < need[c]:
            raise CapacityError(f"class {c}: pool holds {len(idx)} examples, partition needs {need[c]}")
        avail.append(list(rng.permutation(idx)))
    cursor = np.zeros(C, dtype=int)

    def take(counts):
        out = []
        for c, k in enumerate(counts):
            out.extend(avail[c][cursor[c] : cursor[c] + k])
            cursor[c] += k
        return np.array(sorted(out), dtype=np.int64)

    nodes = []
    for i, p in enumerate(plan):
        labeled = take(p["labeled"])
        test = take(p["test"])
        reserve_by_class = take(p["reserve"])
        unlabeled = take(p["unlabeled"])
        nodes.append(
            NodeDataset(
                node=i,
                pool=pool,
                labeled=labeled,
                unlabeled=unlabeled,
                test=test,
                reserve=reserve_by_class,
                w=class_distribution(pool.y[labeled], C),
            )
        )
    return nodes


def validation_counts(class_counts, val_fraction):
    """Stratified per-class validation sizes.

    Largest-remainder apportionment of ``round(val_fraction * total)``, so each
    class gets floor or ceil of its share; classes with one example give 0,
    classes with two or more give at least 1.
    """
    counts = np.asarray(class_counts, dtype=int)
    share = val_fraction * counts
    k = np.floor(share).astype(int)
    target = int(round(val_fraction * counts.sum()))
    rem = share - k
    order = sorted(range(len(counts)), key=lambda c: (-rem[c], c))
    for c in order[: max(0, target - k.sum())]:
        if rem[c] > 0:
            k[c] += 1
    k[counts <= 1] = 0
    k[(counts >= 2) & (k == 0)] = 1
    return k


def split_validation(node, val_fraction, seed):
    """Hold out a validation set matched to the node's class distribution.

    The validation examples are fresh draws from the node's reserve (never
    trained on); the same number of labeled examples per class is removed
    from the Stage-2 training set.
    """
    if not 0 < val_fraction <= 0.5:
        raise ValueError("val_fraction must lie in (0, 0.5]")
    pool = node.pool
    C = pool.n_classes
    y_lab = pool.y[node.labeled]
    k = validation_counts(np.bincount(y_lab, minlength=C), val_fraction)
    rng = seeding.stream(seed, seeding.VALIDATION, node.node)
    removed, val = [], []
    y_res = pool.y[node.reserve]
    for c in range(C):
        cls = node.labeled[y_lab == c]
        if len(cls) == 0:
            continue
        drop = np.sort(rng.choice(cls, size=k[c], replace=False))
        removed.extend(drop.tolist())
        fresh = node.reserve[y_res == c]
        # every present class is probed; a singleton class draws only from the reserve
        want = max(k[c], 1)
        if len(fresh) >= want:
            val.extend(fresh[:want].tolist())
        else:
            val.extend(drop.tolist())
    train = np.setdiff1d(node.labeled, np.array(removed, dtype=np.int64))
    return replace(node, train=train, val=np.array(sorted(val), dtype=np.int64))


def check_disjoint(nodes):
    """Raise if any example appears in two roles (or two nodes)."""
    seen = {}
    for nd in nodes:
        parts = {"labeled": nd.labeled, "unlabeled": nd.unlabeled, "test": nd.test}
        if nd.val is not None and not np.isin(nd.val, nd.labeled).any():
            parts["val"] = nd.val
        for name, idx in parts.items():
            for e in np.asarray(idx).tolist():
                if e in seen:
                    raise AssertionError(f"example {e} used as {seen[e]} and node {nd.node}/{name}")
                seen[e] = f"node {nd.node}/{name}"
    return True


def partition_summary(nodes):
    out = []
    for nd in nodes:
        C = nd.pool.n_classes
        out.append(
            {
                "node": nd.node,
                "n_labeled": int(len(nd.labeled)),
                "n_train": int(len(nd.stage2)),
                "n_val": 0 if nd.val is None else int(len(nd.val)),
                "n_unlabeled": int(len(nd.unlabeled)),
                "n_test": int(len(nd.test)),
                "class_distribution": [round(float(v), 6) for v in nd.w],
                "label_counts": np.bincount(nd.pool.y[nd.labeled], minlength=C).tolist(),
            }
        )
    return out


def write_partition_summary(nodes, path):
    with open(path, "w", newline="\n") as fh:
        json.dump(partition_summary(nodes), fh, indent=1)
