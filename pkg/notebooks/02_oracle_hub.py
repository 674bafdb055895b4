"""A well-trained hub among skewed leaves: does the learned trust find it?

The highest-degree node gets a large class-balanced labeled set. We compare
the deployed accuracy of every weighting rule and look at which trust
features the fitted scorer relies on.
"""

import numpy as np

from lntrust import RunConfig, run_experiment
from lntrust.protocol import feature_importance
from lntrust.trust import FEATURE_NAMES

cfg = RunConfig(oracle_hub_samples=3000, stage2_rounds=60)
stage1 = None
for method in ("lntrust", "hedge", "weighted_majority", "linucb", "simplex_erm"):
    res = run_experiment(cfg.with_(method=method), stage1)
    stage1 = res.stage1_params
    hub = int(np.argmax(res.graph.degrees))
    on_hub = [res.states[i].deploy.as_dict()[hub] for i in res.graph.open_neighborhood(hub)]
    print(f"{method:18s} test={res.final.mean_test:.4f}  mean weight on hub={np.mean(on_hub):.3f}")
    if method == "lntrust":
        ln = res

leaf = ln.graph.open_neighborhood(hub)[0]
mean, std = feature_importance(ln, leaf, repeats=20)
print(f"\npermutation importance at node {leaf}:")
for name, m, s in sorted(zip(FEATURE_NAMES, mean, std), key=lambda t: -t[1]):
    print(f"  {name:13s} {m:+.4f} ± {s:.4f}")
