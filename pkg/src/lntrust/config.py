"""Run configuration and its flat ``key = value`` file format.

Comments mark each default as ``ref`` (the published reference setting) or
``desk`` (a desk-scale choice, with the reference value in parentheses when
one exists).
"""

from dataclasses import dataclass, fields, replace

from .data import SkewSpec
from .graph import TopologySpec
from .node_model import SgdConfig
from .trust import TrustFitConfig
from .weighting import KINDS as WEIGHTING_KINDS, WeightingParams

METHODS = ("lntrust", "independent", "dml") + WEIGHTING_KINDS


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    method: str = "lntrust"
    seed: int = 0
    # topology
    topology: str = "ba"
    n_nodes: int = 16  # desk (ref: 50)
    ba_m: int = 2  # ref
    edge_p: float = 0.1  # ref; recorded, unused by the BA generator
    geo_decay: float = 0.25  # desk
    # data
    features_csv: str = ""
    n_classes: int = 10  # ref
    feature_dim: int = 16  # desk
    blob_separation: float = 3.0  # desk
    noise: float = 1.0  # desk
    n_modes: int = 1  # desk
    skew: float = 10.0  # ref
    min_classes: int = 2  # ref
    alpha_size: float = 0.5  # desk (ref: 0.05; see README)
    per_node_samples: int = 1000  # ref
    test_fraction: float = 0.15  # ref
    unlabeled_per_node: int = 2000  # ref
    # heads
    hidden_leaf: int = 16  # desk
    hidden_hub: int = 64  # desk
    hub_fraction: float = 0.1  # ref (one wide head per ten nodes)
    # optimization
    stage1_rounds: int = 50  # ref
    stage2_rounds: int = 200  # ref
    sup_steps: int = 5  # ref
    batch_size: int = 32  # desk
    lr_sup: float = 0.1  # desk
    lr_dist: float = -1.0  # desk; negative means "same as lr_sup"
    weight_decay: float = 5e-4  # desk
    dropout: float = 0.5  # ref
    # distillation
    budget: int = 1000  # ref
    warmup: int = 5  # ref
    lambda_distil: float = 0.4  # ref
    tau_abs: float = 0.2  # ref
    tau_conf: float = 0.1  # ref
    alpha_kl: float = 0.3  # ref
    loss_variant: str = "auto"  # auto: hard for C <= 10, soft above
    gate: bool = True  # ref
    gate_eps: float = 1e-8  # desk
    # trust
    val_fraction: float = 0.2  # ref
    trust_freq: int = 10  # ref
    trust_hidden: int = 32  # ref
    trust_lr: float = 0.01  # ref
    trust_steps: int = 200  # ref
    trust_optimizer: str = "gd"  # desk
    trust_warm_start: bool = False  # desk; each refit starts from uniform weights
    profile_size: int = 100  # desk
    probe_mean: str = "all"  # all | present: classes averaged in the mean probe accuracy
    # weighting-rule baselines
    hedge_eta: float = 2.0  # desk
    linucb_ridge: float = 1.0  # desk
    linucb_beta: float = 1.0  # desk
    linucb_temperature: float = 1.0  # desk
    erm_lr: float = 0.05  # desk
    erm_steps: int = 300  # ref
    dml_weight: float = 0.1  # desk
    # scenario / accounting
    oracle_hub_samples: int = 0  # >0: the top-degree node holds this many class-balanced labels
    adversarial: str = "none"  # none | permute: responders return class-shifted predictions
    efficiency_bytes: str = "logits"  # logits | all

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {', '.join(METHODS)}")
        for name in ("stage1_rounds", "stage2_rounds", "sup_steps", "budget", "warmup", "trust_freq",
                     "trust_steps", "per_node_samples", "unlabeled_per_node", "profile_size",
                     "oracle_hub_samples"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.trust_freq == 0:
            raise ConfigError("trust_freq must be >= 1")
        if self.loss_variant not in ("auto", "hard", "soft"):
            raise ConfigError("loss_variant must be auto, hard or soft")
        if self.probe_mean not in ("all", "present"):
            raise ConfigError("probe_mean must be all or present")
        if self.adversarial not in ("none", "permute"):
            raise ConfigError("adversarial must be none or permute")
        if self.efficiency_bytes not in ("logits", "all"):
            raise ConfigError("efficiency_bytes must be logits or all")
        if self.trust_optimizer not in ("gd", "adam"):
            raise ConfigError("trust_optimizer must be gd or adam")
        if not 0 < self.val_fraction <= 0.5:
            raise ConfigError("val_fraction must lie in (0, 0.5]")

    # derived pieces --------------------------------------------------
    @property
    def variant(self):
        if self.loss_variant != "auto":
            return self.loss_variant
        return "hard" if self.n_classes <= 10 else "soft"

    @property
    def distill_lr(self):
        return self.lr_sup if self.lr_dist < 0 else self.lr_dist

    def topology_spec(self):
        return TopologySpec(kind=self.topology, n=self.n_nodes, m=self.ba_m, p=self.edge_p,
                            decay_len=self.geo_decay, seed=self.seed)

    def skew_spec(self):
        return SkewSpec(skew=self.skew, min_classes=self.min_classes, alpha_size=self.alpha_size,
                        per_node=self.per_node_samples, test_fraction=self.test_fraction,
                        unlabeled_per_node=self.unlabeled_per_node)

    def sgd(self):
        return SgdConfig(lr=self.lr_sup, weight_decay=self.weight_decay, steps_per_round=self.sup_steps,
                         batch_size=self.batch_size, dropout=self.dropout)

    def trust_fit(self):
        return TrustFitConfig(lr=self.trust_lr, steps=self.trust_steps, optimizer=self.trust_optimizer,
                              hidden=self.trust_hidden)

    def weighting(self):
        return WeightingParams(hedge_eta=self.hedge_eta, linucb_ridge=self.linucb_ridge,
                               linucb_beta=self.linucb_beta, linucb_temperature=self.linucb_temperature,
                               erm_lr=self.erm_lr, erm_steps=self.erm_steps)

    def with_(self, **kw):
        return replace(self, **kw)


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _convert(name, raw):
    ftype = _FIELDS[name].type
    raw = raw.strip()
    if ftype in (bool, "bool"):
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    if ftype in (int, "int"):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{name}: expected an integer, got {raw!r}") from None
    if ftype in (float, "float"):
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{name}: expected a number, got {raw!r}") from None
    return raw


def parse_assignments(lines, source="<config>"):
    """Parse ``key = value`` lines into a dict; errors carry line numbers."""
    values, errors = {}, []
    for lineno, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            errors.append(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
            continue
        key, raw = (s.strip() for s in text.split("=", 1))
        if key not in _FIELDS:
            errors.append(f"{source}:{lineno}: unknown key {key!r}")
            continue
        try:
            values[key] = _convert(key, raw)
        except ConfigError as exc:
            errors.append(f"{source}:{lineno}: {exc}")
    if errors:
        raise ConfigError("\n".join(errors))
    return values


def load_config(path, overrides=()):
    with open(path) as fh:
        values = parse_assignments(fh.read().splitlines(), source=str(path))
    values.update(parse_assignments(list(overrides), source="--set"))
    try:
        return RunConfig(**values)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def dump_config(cfg):
    return "".join(f"{f.name} = {_fmt(getattr(cfg, f.name))}\n" for f in fields(RunConfig))


def save_config(cfg, path):
    with open(path, "w", newline="\n") as fh:
        fh.write(dump_config(cfg))
