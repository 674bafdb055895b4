"""Pseudo-label budget and gate ablations on one seed.

Prints the same table ``lntrust ablate budget`` and ``lntrust ablate gate``
would write, for a shortened schedule.
"""

from lntrust import RunConfig
from lntrust.ablation import run_ablation

cfg = RunConfig(stage2_rounds=60)
for which in ("budget", "gate"):
    print(f"\n{which}")
    print(f"{'setting':>10s} {'test':>7s} {'self':>7s} {'gain over stage 1':>18s}")
    for row in run_ablation(which, cfg, seeds=[0]):
        print(f"{row[1]:>10s} {row[3]:7.4f} {row[5]:7.4f} {row[8]:+18.4f}")
