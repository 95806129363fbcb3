"""Build the retraining-resilience table and query it by interpolation.

The table answers: at fault rate r, how many retraining epochs does a chip
need before it meets the accuracy constraint again?

Run:  python3 demos/03_resilience_table.py   (about a minute)
"""

from dataclasses import replace

from chipfit.pipeline import (
    ExperimentConfig,
    build_table,
    derive_dataset,
    population_fault_maps,
    pretrain_model,
)
from chipfit.resilience import epochs_for_rate

cfg = ExperimentConfig()  # 16x16 array, 40 chips around 10% fault rate
data = derive_dataset(cfg)
model, baseline = pretrain_model(cfg, data)
cfg = replace(cfg, constraint=baseline - 0.01)
print(f"baseline {baseline:.4f}, constraint {cfg.constraint:.4f} "
      f"(one point below)\n")

maps = population_fault_maps(cfg)
table = build_table(cfg, maps, model, data)

print("rate      epochs min/mean/max   acc before retrain  reachable")
for row in table.rows:
    print(f"{row.rate:.4f}    {row.epochs_min:3.0f} / {row.epochs_mean:4.1f} "
          f"/ {row.epochs_max:3.0f}        {row.acc_no_retrain:.4f}           "
          f"{row.reachable}")

print("\ninterpolated max-statistic queries between the measured nodes:")
for rate in (0.05, 0.11, 0.17, 0.23):
    q = epochs_for_rate(table, rate, "max")
    flag = " (clamped)" if q.clamped else ""
    print(f"  rate {rate:.2f} -> {q.epochs:.2f} epochs{flag}")

print("\nHarder damage needs more retraining; budgets round these up to")
print("whole epochs per chip.")
