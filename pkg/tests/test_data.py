from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lntrust.data import (
    CapacityError,
    SkewSpec,
    check_disjoint,
    class_distribution,
    gen_pool,
    load_features_csv,
    partition,
    plan_partition,
    primary_classes,
    split_validation,
    validation_counts,
    write_partition_summary,
)


def nearest_mean_accuracy(pool, X, y):
    d = ((X[:, None, :] - pool.means[None]) ** 2).sum(-1)
    return float(np.mean(np.argmin(d, axis=1) == y))


def fit_softmax_regression(X, y, C, steps=300, lr=0.5):
    Xb = np.hstack([X, np.ones((len(X), 1))])
    W = np.zeros((Xb.shape[1], C))
    Y = np.eye(C)[y]
    for _ in range(steps):
        Z = Xb @ W
        Z -= Z.max(1, keepdims=True)
        P = np.exp(Z)
        P /= P.sum(1, keepdims=True)
        W -= lr * Xb.T @ (P - Y) / len(X)
    return lambda Xt: np.argmax(np.hstack([Xt, np.ones((len(Xt), 1))]) @ W, axis=1)


class TestPool:
    def test_noiseless_separable(self):
        pool = gen_pool(5, 8, 100, 3.0, 0.0, seed=0)
        assert nearest_mean_accuracy(pool, pool.X, pool.y) == 1.0

    def test_zero_separation_is_chance(self):
        pool = gen_pool(4, 8, 1250, 0.0, 1.0, seed=1)
        clf = fit_softmax_regression(pool.X[::2], pool.y[::2], 4)
        test = np.arange(1, len(pool), 2)
        acc = np.mean(clf(pool.X[test]) == pool.y[test])
        sd = np.sqrt(0.25 * 0.75 / len(test))
        assert abs(acc - 0.25) <= 3 * sd

    def test_reference_band(self):
        for seed in range(3):
            pool = gen_pool(10, 16, 600, 3.0, 1.0, seed=seed)
            perm = np.random.default_rng(seed).permutation(len(pool))
            tr, te = perm[:4000], perm[4000:]
            clf = fit_softmax_regression(pool.X[tr], pool.y[tr], 10)
            acc = np.mean(clf(pool.X[te]) == pool.y[te])
            assert 0.6 <= acc <= 0.95

    def test_balanced_labels(self):
        pool = gen_pool(7, 4, 30, 1.0, 1.0, seed=2)
        assert np.all(np.bincount(pool.y) == 30)

    def test_validation(self):
        with pytest.raises(ValueError):
            gen_pool(1, 4, 10, 1.0, 1.0, 0)
        with pytest.raises(ValueError):
            gen_pool(3, 1, 10, 1.0, 1.0, 0)

    def test_csv_roundtrip(self, tmp_path):
        p = tmp_path / "f.csv"
        p.write_text("label,f1,f2\n0,1.0,2.0\n2,3.0,4.5\n")
        pool = load_features_csv(p)
        assert pool.n_classes == 3 and pool.X.shape == (2, 2) and list(pool.y) == [0, 2]


class TestClassDistribution:
    def test_examples(self):
        assert np.allclose(class_distribution([0, 0, 1, 1], 2), [0.5, 0.5])
        assert np.allclose(class_distribution([3], 4), [0, 0, 0, 1])
        assert np.allclose(class_distribution([0, 0, 0, 1], 2), [0.75, 0.25])

    def test_empty(self):
        with pytest.raises(ValueError):
            class_distribution([], 3)


class TestPartition:
    def test_round_robin_primary(self):
        assert primary_classes(0, 2, 10) == [0, 1]
        assert primary_classes(6, 2, 10) == [2, 3]

    def test_no_skew_is_uniform(self):
        spec = SkewSpec(skew=1.0, min_classes=2, alpha_size=1.0, per_node=200, unlabeled_per_node=10)
        plan = plan_partition(20, spec, 10, seed=0)
        counts = np.sum([p["labeled"] for p in plan], axis=0)
        expected = counts.sum() / 10
        chi2 = float(((counts - expected) ** 2 / expected).sum())
        assert chi2 < 21.666  # chi-square(9) at the 0.01 level

    def test_extreme_skew_only_primary(self):
        spec = SkewSpec(skew=1e6, min_classes=2, alpha_size=1.0, per_node=100, unlabeled_per_node=10)
        plan = plan_partition(10, spec, 10, seed=3)
        for i, p in enumerate(plan):
            present = set(np.flatnonzero(p["labeled"]))
            assert present <= set(primary_classes(i, 2, 10))

    def test_primary_mass(self):
        spec = SkewSpec(skew=10.0, min_classes=2, alpha_size=1e6, per_node=1000, unlabeled_per_node=10)
        plan = plan_partition(10, spec, 10, seed=4)
        for i, p in enumerate(plan):
            mass = p["labeled"][primary_classes(i, 2, 10)].sum() / p["labeled"].sum()
            assert abs(mass - 20 / 28) <= 0.05

    def test_size_floor(self):
        spec = SkewSpec(alpha_size=0.01, min_classes=3, per_node=50, unlabeled_per_node=10)
        plan = plan_partition(16, spec, 10, seed=5)
        assert min(p["labeled"].sum() for p in plan) >= 6

    def test_capacity_error(self):
        pool = gen_pool(3, 4, 10, 1.0, 1.0, 0)
        with pytest.raises(CapacityError):
            partition(pool, 4, SkewSpec(per_node=100, unlabeled_per_node=30), seed=0)

    def test_bad_spec(self):
        with pytest.raises(ValueError):
            plan_partition(4, SkewSpec(skew=0.5), 10, 0)
        with pytest.raises(ValueError):
            plan_partition(4, SkewSpec(min_classes=11), 10, 0)

    def test_disjoint_and_balanced_unlabeled(self):
        pool = gen_pool(10, 8, 800, 2.0, 1.0, 0)
        spec = SkewSpec(per_node=60, unlabeled_per_node=55, alpha_size=0.5)
        nodes = [split_validation(nd, 0.2, 0) for nd in partition(pool, 12, spec, seed=7)]
        assert check_disjoint(nodes)
        for nd in nodes:
            c = np.bincount(pool.y[nd.unlabeled], minlength=10)
            assert c.max() - c.min() <= 1

    def test_deterministic(self):
        pool = gen_pool(10, 8, 400, 2.0, 1.0, 0)
        spec = SkewSpec(per_node=40, unlabeled_per_node=20)
        a, b = partition(pool, 6, spec, 9), partition(pool, 6, spec, 9)
        for x, y in zip(a, b):
            assert np.array_equal(x.labeled, y.labeled) and np.array_equal(x.unlabeled, y.unlabeled)

    def test_balanced_node(self):
        pool = gen_pool(10, 8, 400, 2.0, 1.0, 0)
        nodes = partition(pool, 4, SkewSpec(per_node=40, unlabeled_per_node=20), 1, balanced={2: 100})
        assert np.all(np.bincount(pool.y[nodes[2].labeled], minlength=10) == 10)

    def test_summary_json(self, tmp_path):
        pool = gen_pool(4, 4, 200, 2.0, 1.0, 0)
        nodes = partition(pool, 3, SkewSpec(per_node=30, unlabeled_per_node=8), 0)
        write_partition_summary(nodes, tmp_path / "p.json")
        assert (tmp_path / "p.json").read_text().startswith("[")


def single_node(counts, seed=0):
    C = len(counts)
    pool = gen_pool(C, 4, max(max(counts) * 3, 2), 2.0, 1.0, seed)
    nd = partition(pool, 1, SkewSpec(skew=1.0, per_node=10, unlabeled_per_node=0, test_fraction=0.0), seed)[0]
    # rebuild with exact class counts, reserve from the remaining examples
    lab, res = [], []
    for c, k in enumerate(counts):
        idx = pool.class_indices(c)
        lab.extend(idx[:k])
        res.extend(idx[k : 2 * k])
    from dataclasses import replace

    lab = np.array(sorted(lab))
    return replace(nd, labeled=lab, reserve=np.array(sorted(res)), w=class_distribution(pool.y[lab], C),
                   unlabeled=np.array([], dtype=int), test=np.array([], dtype=int))


class TestSplitValidation:
    def test_twenty_percent_of_hundred(self):
        nd = split_validation(single_node([50, 30, 20]), 0.2, 0)
        assert len(nd.val) == 20 and len(nd.train) == 80

    def test_single_class(self):
        nd = split_validation(single_node([0, 40, 0]), 0.2, 0)
        assert np.allclose(class_distribution(nd.pool.y[nd.val], 3), nd.w)

    def test_removed_from_training(self):
        nd = split_validation(single_node([20, 17, 9, 4]), 0.25, 3)
        assert len(nd.train) < len(nd.labeled)
        assert not np.isin(nd.val, nd.train).any()
        assert set(nd.train) <= set(nd.labeled)

    def test_singleton_class_keeps_training_example(self):
        nd = split_validation(single_node([1, 30]), 0.2, 0)
        y = nd.pool.y
        assert np.sum(y[nd.train] == 0) == 1
        assert np.sum(y[nd.val] == 0) == 1  # probed from the reserve

    def test_stratification(self, rng):
        for _ in range(50):
            counts = rng.integers(0, 40, size=6)
            counts[rng.integers(6)] += 1
            vf = float(rng.uniform(0.05, 0.5))
            k = validation_counts(counts, vf)
            assert np.all(np.abs(k - vf * counts)[counts >= 2] <= 1)

    @pytest.mark.parametrize("vf", [0.0, 0.6])
    def test_bad_fraction(self, vf):
        with pytest.raises(ValueError):
            split_validation(single_node([5, 5]), vf, 0)


@given(st.lists(st.integers(0, 60), min_size=2, max_size=10), st.floats(0.01, 0.5))
def test_validation_counts_bounds(counts, vf):
    counts = np.array(counts)
    k = validation_counts(counts, vf)
    assert np.all(k <= np.maximum(counts - 1, 0) + (counts == 0))
    assert np.all(k[counts >= 2] >= 1)
    assert np.all(k[counts <= 1] == 0)
