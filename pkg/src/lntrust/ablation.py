"""Parameter sweeps over the reference benchmark, one summary row per setting."""

import csv

import numpy as np

from .export import fmt
from .protocol import run_experiment
from .weighting import KINDS as WEIGHTING_KINDS

ABLATIONS = ("val_fraction", "budget", "freq", "gate", "tau", "weighting")
COLUMNS = ("ablation", "setting", "seeds", "test_mean", "test_std", "self_mean", "self_std",
           "stage1_mean", "deploy_gain", "logit_bytes_mean")


def sweep(which, cfg):
    """List of (label, config) pairs for one ablation."""
    if which == "val_fraction":
        return [(str(v), cfg.with_(val_fraction=v)) for v in (0.05, 0.1, 0.2, 0.3)]
    if which == "budget":
        B = cfg.budget
        return [(str(b), cfg.with_(budget=b)) for b in (0, B // 2, B, 3 * B // 2)]
    if which == "freq":
        # frequency rows share the low-validation regime of their reference table
        return [(str(f), cfg.with_(trust_freq=f, val_fraction=0.05)) for f in (1, 5, 10, 15)]
    if which == "gate":
        return [("on", cfg.with_(gate=True)), ("off", cfg.with_(gate=False))]
    if which == "tau":
        # tau_conf = 0 means no filtering at all, so the absolute floor is lifted too
        return [("0.0", cfg.with_(tau_conf=0.0, tau_abs=0.0)),
                ("0.1", cfg.with_(tau_conf=0.1)), ("0.2", cfg.with_(tau_conf=0.2))]
    if which == "weighting":
        return [(m, cfg.with_(method=m)) for m in ("lntrust",) + WEIGHTING_KINDS]
    raise ValueError(f"unknown ablation {which!r}; expected one of {', '.join(ABLATIONS)}")


def run_ablation(which, cfg, seeds, log=None):
    """Run every setting on every seed; Stage 1 is trained once per seed and shared."""
    settings = sweep(which, cfg)
    stage1 = {}
    rows = []
    for label, c in settings:
        tests, selfs, s1, nbytes = [], [], [], []
        for s in seeds:
            sc = c.with_(seed=s)
            res = run_experiment(sc, stage1_params=stage1.get(s))
            stage1.setdefault(s, res.stage1_params)
            tests.append(res.final.mean_test)
            selfs.append(res.final.mean_self)
            s1.append(res.metrics[0].mean_self)
            nbytes.append(res.final.cum_logit_bytes)
            if log:
                log(f"{which}={label} seed={s}: test={tests[-1]:.4f} self={selfs[-1]:.4f}")
        rows.append((which, label, len(seeds), np.mean(tests), np.std(tests), np.mean(selfs), np.std(selfs),
                     np.mean(s1), np.mean(tests) - np.mean(s1), np.mean(nbytes)))
    return rows


def write_ablation(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow(r[:2] + tuple(fmt(v) for v in r[2:]))
