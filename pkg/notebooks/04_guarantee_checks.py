"""The numerical guarantee checks at reduced trial counts.

``lntrust verify`` runs the same checks at full size and writes a JSON report.
"""

from lntrust.verify import TheoryConfig, run_all

tcfg = TheoryConfig(oracle_trials=40, mc_samples=20_000, tracking_reps=500, drift_seeds=(0,),
                    drift_rounds=20, grad_trials=20, density_trials=40)
for report in run_all(tcfg):
    print(report.line())
