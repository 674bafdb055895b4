"""Quick tour: one reduced run, the per-round trajectory and one node's trust weights.

Run with ``python notebooks/01_quickstart.py`` (about ten seconds).
"""

import numpy as np

from lntrust import RunConfig, run_experiment

cfg = RunConfig(stage2_rounds=40, budget=500)
ln = run_experiment(cfg)
solo = run_experiment(cfg.with_(method="independent"), stage1_params=ln.stage1_params)

print("round  test(lntrust)  self(lntrust)  self(independent)")
for a, b in zip(ln.metrics[::10], solo.metrics[::10]):
    print(f"{a.round:5d}  {a.mean_test:13.4f}  {a.mean_self:13.4f}  {b.mean_self:17.4f}")

# The highest-degree node and the weights it deploys over its closed neighborhood.
hub = int(np.argmax(ln.graph.degrees))
leaf = ln.graph.open_neighborhood(hub)[0]
print(f"\nnode {leaf} deploys:", {j: round(a, 3) for j, a in ln.states[leaf].deploy.as_dict().items()})
print(f"gate weight {ln.states[leaf].lambda_eff:.3f}, a_self {ln.states[leaf].a_self:.3f}, "
      f"a_ens {ln.states[leaf].a_ens:.3f}")

tot = ln.ledger.totals()
print(f"\nlogit bytes {tot['logit_bytes']:,}  (training responses {tot['training_logit_bytes']:,})")
