"""Writers for run artifacts. All text files use LF endings and a fixed column order."""

import csv
import json
import os

import numpy as np

from .config import dump_config
from .data import partition_summary

METRICS_COLUMNS = ("round", "mean_test", "mean_self", "mean_a_self", "mean_a_ens", "mean_a_deploy",
                   "mean_lambda_eff", "mean_retained", "cum_logit_bytes", "cum_total_bytes")
NODE_COLUMNS = ("round", "node", "test", "self", "a_self", "a_ens", "a_deploy", "lambda_eff", "retained")
TRUST_COLUMNS = ("round", "node", "candidate", "weight")


def fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "nan" if np.isnan(x) else repr(x)


def _nanmean(v):
    v = np.asarray(v, dtype=np.float64)
    return float("nan") if np.all(np.isnan(v)) else float(np.nanmean(v))


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def write_metrics(result, path):
    rows = [
        (m.round, m.mean_test, m.mean_self, _nanmean(m.a_self), _nanmean(m.a_ens), _nanmean(m.a_deploy),
         _nanmean(m.lambda_eff), _nanmean(m.retained), m.cum_logit_bytes, m.cum_total_bytes)
        for m in result.metrics
    ]
    _write_rows(path, METRICS_COLUMNS, rows)


def write_node_metrics(result, path):
    rows = []
    for m in result.metrics:
        for i in range(len(m.test)):
            rows.append((m.round, i, m.test[i], m.self_[i], m.a_self[i], m.a_ens[i], m.a_deploy[i],
                         m.lambda_eff[i], m.retained[i]))
    _write_rows(path, NODE_COLUMNS, rows)


def write_trust(result, path):
    _write_rows(path, TRUST_COLUMNS, result.trust_rows)


def write_ledger(result, path):
    with open(path, "w", newline="\n") as fh:
        json.dump(result.ledger.summary(), fh, indent=1, sort_keys=True)
        fh.write("\n")


def write_run(result, out_dir):
    """All artifacts of one run; returns the list of written paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "config.txt": lambda p: open(p, "w", newline="\n").write(dump_config(result.config)),
        "metrics.csv": lambda p: write_metrics(result, p),
        "node_metrics.csv": lambda p: write_node_metrics(result, p),
        "trust.csv": lambda p: write_trust(result, p),
        "ledger.json": lambda p: write_ledger(result, p),
        "partition.json": lambda p: _write_json(partition_summary(result.nodes), p),
        "graph.json": lambda p: result.graph.to_json(p),
    }
    written = []
    for name, fn in paths.items():
        p = os.path.join(out_dir, name)
        fn(p)
        written.append(p)
    return written


def _write_json(obj, path):
    with open(path, "w", newline="\n") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")
