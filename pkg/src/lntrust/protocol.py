"""Round-based simulation of the two-stage protocol and its baselines.

Stage 1 trains every node locally. Stage 2 runs ``stage2_rounds`` rounds;
each round freezes a snapshot of all predictors, optionally re-probes
neighbors and refits the trust model, then lets each node take supervised
steps followed by a trust-gated distillation step. Every cross-node read
goes through :meth:`Simulation.query`, which answers from the round
snapshot and charges the ledger, so node updates within a round commute.
"""

from dataclasses import dataclass, field

import numpy as np

from . import seeding
from .comm import CommLedger, account_message
from .config import RunConfig
from .data import (
    check_disjoint,
    class_distribution,
    gen_pool,
    load_features_csv,
    partition,
    plan_partition,
    required_per_class,
    split_validation,
)
from .distill import (
    confidence_filter,
    distill_step_hard,
    distill_grad,
    distill_step_soft,
    effective_weight,
    ensemble_predict,
    importance_weight,
    soft_loss_grad,
    weighted_probe_accuracy,
)
from .graph import hub_nodes, make_graph
from .node_model import HeadSpec, accuracy, init_params, local_round, predict_proba, train_stage1
from .trust import (
    TrustModel,
    TrustWeights,
    build_features,
    estimate_profile,
    fit_trust,
    permutation_importance,
    probe_responses,
    true_class_probs,
    trust_weights,
)
from .weighting import KINDS as WEIGHTING_KINDS, Evidence, baseline_weights

TRUST_METHODS = ("lntrust",) + WEIGHTING_KINDS


def deploy_predict(weights, probs):
    """Closed-neighborhood ensemble: sum_j alpha_j p_j(x).

    ``probs`` maps candidate id -> (n, C) predictions, or is a (K, n, C)
    array ordered like ``weights.candidates``.
    """
    if isinstance(probs, dict):
        probs = np.stack([probs[c] for c in weights.candidates])
    return ensemble_predict(weights.mix, probs)


def deploy_score(weights, probes, w):
    """sum_j alpha_j^deploy sum_c w^c acc_ij^c with ``probes`` keyed by candidate."""
    total = 0.0
    for c, a in zip(weights.candidates, weights.mix):
        acc = probes[c].acc if hasattr(probes[c], "acc") else probes[c]
        total += a * weighted_probe_accuracy(w, acc)
    return float(total)


@dataclass
class MetricsRow:
    round: int
    test: np.ndarray
    self_: np.ndarray
    a_self: np.ndarray
    a_ens: np.ndarray
    a_deploy: np.ndarray
    lambda_eff: np.ndarray
    retained: np.ndarray
    cum_logit_bytes: int
    cum_total_bytes: int

    @property
    def mean_test(self):
        return float(np.mean(self.test))

    @property
    def mean_self(self):
        return float(np.mean(self.self_))


@dataclass
class NodeState:
    params: np.ndarray
    trust: TrustModel | None = None
    deploy: TrustWeights | None = None
    distill: TrustWeights | None = None
    probes: dict = field(default_factory=dict)
    features: np.ndarray | None = None
    true_probs: np.ndarray | None = None
    a_self: float = float("nan")
    a_ens: float = float("nan")
    lambda_eff: float = 0.0
    retained: float = float("nan")
    baseline_state: object = None


@dataclass
class RunResult:
    config: RunConfig
    graph: object
    nodes: list
    specs: list
    stage1_params: list
    params: list
    metrics: list
    trust_rows: list
    ledger: CommLedger
    states: list = field(repr=False, default=None)

    @property
    def final(self):
        return self.metrics[-1]

    def efficiency(self):
        """Mean deployed accuracy per byte communicated."""
        row = self.final
        b = row.cum_logit_bytes if self.config.efficiency_bytes == "logits" else row.cum_total_bytes
        return row.mean_test / b if b > 0 else float("inf")


def build_world(cfg):
    """Graph, pool, per-node datasets and head specs for a config."""
    graph = make_graph(cfg.topology_spec())
    skew = cfg.skew_spec()
    hubs = hub_nodes(graph, cfg.hub_fraction)
    top = min(range(graph.n), key=lambda i: (-graph.degrees[i], i))
    balanced = {top: cfg.oracle_hub_samples} if cfg.oracle_hub_samples > 0 else None
    if cfg.features_csv:
        pool = load_features_csv(cfg.features_csv, cfg.n_classes)
    else:
        plan = plan_partition(cfg.n_nodes, skew, cfg.n_classes, cfg.seed, balanced)
        n_per_class = int(required_per_class(plan).max())
        pool = gen_pool(cfg.n_classes, cfg.feature_dim, n_per_class, cfg.blob_separation, cfg.noise,
                        cfg.seed, n_modes=cfg.n_modes)
    nodes = partition(pool, cfg.n_nodes, skew, cfg.seed, balanced)
    hubs = set(hubs)
    specs = [HeadSpec(d=pool.dim, C=pool.n_classes, hidden=cfg.hidden_hub if i in hubs else cfg.hidden_leaf)
             for i in range(cfg.n_nodes)]
    return graph, pool, nodes, specs


class Simulation:
    def __init__(self, cfg: RunConfig, stage1_params=None):
        self.cfg = cfg
        self.graph, self.pool, nodes, self.specs = build_world(cfg)
        self.n = cfg.n_nodes
        self.C = self.pool.n_classes
        self.d = self.pool.dim
        self.sgd = cfg.sgd()
        self.ledger = CommLedger(self.graph)
        self.snapshot = None
        self.round = 0
        self.trust_rows = []
        self.metrics = []
        self.trace = None  # list of step records when a verifier is attached

        if stage1_params is None:
            stage1_params = self._stage1(nodes)
        self.stage1_params = [p.copy() for p in stage1_params]
        if self.ledger.messages:
            raise AssertionError("Stage 1 must not communicate")
        if cfg.method in TRUST_METHODS:
            nodes = [split_validation(nd, cfg.val_fraction, cfg.seed) for nd in nodes]
        check_disjoint(nodes)
        self.nodes = nodes
        self.states = [NodeState(params=p.copy()) for p in stage1_params]
        for i, st in enumerate(self.states):
            if cfg.method == "lntrust":
                st.trust = TrustModel.init(seeding.stream(cfg.seed, seeding.TRUST_INIT, i), cfg.trust_hidden)
            own = [i]
            st.deploy = TrustWeights(tuple(own), np.ones(1))

    # ------------------------------------------------------------ stages
    def _stage1(self, nodes):
        cfg = self.cfg
        trained = []
        for i, nd in enumerate(nodes):
            params = init_params(self.specs[i], seeding.stream(cfg.seed, seeding.INIT, i))
            X, y = nd.xy("labeled")
            params = train_stage1(self.specs[i], params, X, y, cfg.stage1_rounds, self.sgd,
                                 lambda r, i=i: seeding.stream(cfg.seed, seeding.STAGE1, i, r))
            trained.append(params)
        return trained

    # ------------------------------------------------------------ messaging
    def query(self, i, j, X, probe=False):
        """Node ``i`` asks ``j`` for predictions on ``X`` (answered from the snapshot)."""
        probs = predict_proba(self.specs[j], self.snapshot[j], X)
        if i != j:
            q, r = ("probe_query", "probe_response") if probe else ("query", "response")
            account_message(self.ledger, i, j, q, len(X), self.C, self.d, self.round)
            account_message(self.ledger, j, i, r, len(X), self.C, self.d, self.round)
            if self.cfg.adversarial == "permute":
                probs = np.roll(probs, 1, axis=-1)
        return probs

    def share(self, i, j, n_examples):
        """``i`` sends its own predictions on ``n_examples`` inputs to ``j`` (DML)."""
        account_message(self.ledger, i, j, "share", n_examples, self.C, self.d, self.round)

    # ------------------------------------------------------------ trust
    def reprobe(self, i):
        cfg, nd, st = self.cfg, self.nodes[i], self.states[i]
        cand = self.graph.closed_neighborhood(i)
        neigh = self.graph.open_neighborhood(i)
        Xv, yv = nd.xy("val")
        rng = seeding.stream(cfg.seed, seeding.PROBE, i, self.round)
        k = min(cfg.profile_size, len(nd.unlabeled))
        S = self.pool.X[np.sort(rng.choice(nd.unlabeled, size=k, replace=False))]
        deg = self.graph.degrees
        preds, feats = [], []
        st.probes = {}
        for j in cand:
            out = self.query(i, j, np.vstack([Xv, S]), probe=True)
            pv, ps = out[: len(yv)], out[len(yv):]
            st.probes[j] = probe_responses(pv, yv, self.C)
            feats.append(build_features(nd.w, estimate_profile(ps, self.C), st.probes[j], deg[j], self.n,
                                        mean_over=cfg.probe_mean))
            preds.append(pv)
        st.features = np.array(feats)
        st.true_probs = true_class_probs(np.stack(preds), yv)

        if cfg.method == "lntrust":
            model = st.trust if cfg.trust_warm_start else TrustModel.init(
                seeding.stream(cfg.seed, seeding.TRUST_INIT, i), cfg.trust_hidden)
            st.trust, _ = fit_trust(model, st.true_probs, st.features, cfg.trust_fit())
            st.deploy = trust_weights(st.trust, st.features, cand)
        else:
            ev = Evidence(tuple(cand), st.true_probs,
                          np.array([weighted_probe_accuracy(nd.w, st.probes[j].acc) for j in cand]), st.features)
            st.deploy, st.baseline_state = baseline_weights(cfg.method, ev, st.baseline_state, cfg.weighting())

        st.a_self = weighted_probe_accuracy(nd.w, st.probes[i].acc)
        if neigh:
            st.distill = st.deploy.restrict(neigh)
            st.a_ens = deploy_score(st.distill, st.probes, nd.w)
            st.lambda_eff = (effective_weight(st.a_self, st.a_ens, cfg.lambda_distil, cfg.gate_eps)
                             if cfg.gate else cfg.lambda_distil)
        else:
            st.distill, st.a_ens, st.lambda_eff = None, float("nan"), 0.0
        for c, a in zip(st.deploy.candidates, st.deploy.mix):
            self.trust_rows.append((self.round, i, c, float(a)))

    # ------------------------------------------------------------ updates
    def _unlabeled_batch(self, i, rng):
        U = self.nodes[i].unlabeled
        B = self.cfg.budget
        return self.pool.X[rng.choice(U, size=B, replace=B > len(U))]

    def distill_node(self, i):
        cfg, st = self.cfg, self.states[i]
        neigh = self.graph.open_neighborhood(i)
        st.retained = float("nan")
        if not neigh or st.distill is None:
            return
        X = self._unlabeled_batch(i, seeding.stream(cfg.seed, seeding.BATCH, i, self.round))
        probs = np.stack([self.query(i, j, X) for j in neigh])
        ens_probs = ensemble_predict(st.distill.mix, probs)
        keep = confidence_filter(ens_probs, cfg.tau_abs, cfg.tau_conf)
        st.retained = len(keep) / len(X)
        imp, pseudo = importance_weight(self.nodes[i].w, ens_probs[keep])
        if self.trace is not None:
            _, g = distill_grad(cfg.variant, self.specs[i], st.params, X[keep], ens_probs[keep], imp, cfg.alpha_kl)
            self.trace.append(("distill", self.round, i, st.lambda_eff, cfg.distill_lr, float(np.linalg.norm(g))))
        if cfg.variant == "hard":
            st.params, _ = distill_step_hard(self.specs[i], st.params, X[keep], pseudo, imp, st.lambda_eff, cfg.distill_lr)
        else:
            st.params, _ = distill_step_soft(self.specs[i], st.params, X[keep], ens_probs[keep], imp, st.lambda_eff,
                                            cfg.alpha_kl, cfg.distill_lr)

    def dml_node(self, i):
        cfg, st = self.cfg, self.states[i]
        neigh = self.graph.open_neighborhood(i)
        if not neigh:
            return
        own = self._unlabeled_batch(i, seeding.stream(cfg.seed, seeding.BATCH, i, self.round))
        grad = np.zeros_like(st.params)
        for j in neigh:
            # j answers on i's batch; i shares its own predictions on it back to j
            target = self.query(i, j, own)
            self.share(i, j, len(own))
            # j's batch arrived as a query payload along with j's shared predictions
            theirs = self._unlabeled_batch(j, seeding.stream(cfg.seed, seeding.BATCH, j, self.round))
            shared = predict_proba(self.specs[j], self.snapshot[j], theirs)
            for Xb, tb in ((own, target), (theirs, shared)):
                _, g = soft_loss_grad(self.specs[i], st.params, Xb, tb, np.ones(len(Xb)), cfg.dml_weight)
                grad += g
        st.params = st.params - cfg.distill_lr * grad

    def node_round(self, i):
        cfg, st, nd = self.cfg, self.states[i], self.nodes[i]
        X, y = nd.xy("stage2") if cfg.method in TRUST_METHODS else nd.xy("labeled")
        on_step = None
        if self.trace is not None:
            def on_step(params, idx, mask, i=i):
                self.trace.append(("sup", self.round, i, params.copy(), idx, mask))
        st.params = local_round(self.specs[i], st.params, X, y, self.sgd,
                               seeding.stream(cfg.seed, seeding.SUPERVISED, i, self.round), on_step)
        if self.round >= cfg.warmup and cfg.budget > 0:
            if cfg.method in TRUST_METHODS:
                self.distill_node(i)
            elif cfg.method == "dml":
                self.dml_node(i)

    # ------------------------------------------------------------ evaluation
    def evaluate(self, round_):
        n = self.n
        test, self_acc = np.zeros(n), np.zeros(n)
        a_deploy = np.full(n, np.nan)
        for i in range(n):
            st, nd = self.states[i], self.nodes[i]
            Xt, yt = nd.xy("test")
            self_acc[i] = accuracy(self.specs[i], st.params, Xt, yt)
            if self.cfg.method in TRUST_METHODS and st.deploy is not None and len(st.deploy.candidates) > 1:
                probs = {j: predict_proba(self.specs[j], self.states[j].params, Xt) for j in st.deploy.candidates}
                if self.cfg.adversarial == "permute":
                    probs = {j: (p if j == i else np.roll(p, 1, axis=-1)) for j, p in probs.items()}
                test[i] = float(np.mean(np.argmax(deploy_predict(st.deploy, probs), axis=-1) == yt))
            else:
                test[i] = self_acc[i]
            if st.probes:
                a_deploy[i] = deploy_score(st.deploy, st.probes, nd.w)
        tot = self.ledger.totals()
        row = MetricsRow(
            round=round_,
            test=test,
            self_=self_acc,
            a_self=np.array([s.a_self for s in self.states]),
            a_ens=np.array([s.a_ens for s in self.states]),
            a_deploy=a_deploy,
            lambda_eff=np.array([s.lambda_eff for s in self.states]),
            retained=np.array([s.retained for s in self.states]),
            cum_logit_bytes=tot["logit_bytes"],
            cum_total_bytes=tot["total_bytes"],
        )
        self.metrics.append(row)
        return row

    # ------------------------------------------------------------ driver
    def freeze(self):
        self.snapshot = [st.params.copy() for st in self.states]

    def step(self, node_order=None):
        """One Stage-2 round (``self.round`` is its 0-based index)."""
        cfg = self.cfg
        self.freeze()
        order = range(self.n) if node_order is None else node_order
        if cfg.method in TRUST_METHODS and self.round > 0 and self.round % cfg.trust_freq == 0:
            for i in order:
                self.reprobe(i)
        for i in order:
            self.node_round(i)
        self.round += 1
        return self.evaluate(self.round)

    def start(self):
        """Initial probe and trust fit on the Stage-1 predictors, then row 0."""
        self.freeze()
        if self.cfg.method in TRUST_METHODS:
            for i in range(self.n):
                self.reprobe(i)
        return self.evaluate(0)

    def run(self, node_order=None):
        self.start()
        for _ in range(self.cfg.stage2_rounds):
            self.step(node_order)
        return self.result()

    def result(self):
        return RunResult(
            config=self.cfg,
            graph=self.graph,
            nodes=self.nodes,
            specs=self.specs,
            stage1_params=self.stage1_params,
            params=[st.params.copy() for st in self.states],
            metrics=self.metrics,
            trust_rows=self.trust_rows,
            ledger=self.ledger,
            states=self.states,
        )


def run_experiment(cfg: RunConfig, stage1_params=None, node_order=None):
    """Full run for any method; ``stage1_params`` lets paired runs share Stage 1."""
    return Simulation(cfg, stage1_params).run(node_order)


def run_dml(cfg: RunConfig, stage1_params=None):
    return run_experiment(cfg.with_(method="dml"), stage1_params)


def feature_importance(result, node, repeats=10, seed=0):
    """Permutation importance of the trust features at the last reprobe of ``node``."""
    st = result.states[node]
    rng = seeding.stream(seed, seeding.IMPORTANCE, node)
    return permutation_importance(st.trust, st.features, st.true_probs, rng, repeats)


def mean_class_distribution(nodes, C):
    return np.mean([class_distribution(nd.pool.y[nd.labeled], C) for nd in nodes], axis=0)
