"""Where does merging two chips' fault maps start paying for itself?

Training one model for two chips costs one (bigger) retraining run instead
of two smaller ones. On a steep cost curve that only pays when the maps
overlap enough. This sweep finds the break-even overlap on a synthetic
exponential table.

Run:  python3 demos/04_grouping_break_even.py
"""

import math

import numpy as np

from chipfit.faultmap import FaultMap, HardwareConfig
from chipfit.fusion import group_and_fuse, relative_saving
from chipfit.resilience import ResilienceTable, TableRow

hw = HardwareConfig(16, 16)


def synthetic_table(scale):
    rows = []
    r = 0.005
    while r <= 0.5:
        cost = math.exp(scale * r) - 1.0
        rows.append(TableRow(rate=r, epochs_min=cost, epochs_mean=cost,
                             epochs_max=cost, acc_no_retrain=0.5))
        r = round(r + 0.01, 10)
    return ResilienceTable(constraint=0.9, reps=5, e_max=50, rows=tuple(rows))


def overlap_pair(seed, rate, share):
    rng = np.random.default_rng(seed)
    count = round(rate * hw.total)
    n_shared = math.ceil(share * count)
    flat = rng.choice(hw.total, size=2 * count - n_shared, replace=False)
    coords = [(int(f) // hw.cols, int(f) % hw.cols) for f in flat]
    a = FaultMap(chip_id="a", dims=hw.dims,
                 faults=frozenset(coords[:count]))
    b = FaultMap(chip_id="b", dims=hw.dims,
                 faults=frozenset(coords[:n_shared] + coords[count:]))
    return a, b


table = synthetic_table(scale=20.0)
print("cost(r) = exp(20 r) - 1; two chips at rate 0.10 each\n")
print("overlap  fused-rate  saving(epochs)  merged?")
for share in (0.0, 0.2, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0):
    savings, merged = [], 0
    for seed in range(20):
        a, b = overlap_pair(seed, rate=0.10, share=share)
        savings.append(relative_saving(a, b, table))
        result = group_and_fuse([a, b], table, samples=1, sweeps=1, seed=seed)
        merged += len(result.groups) == 1
    fused = a.fault_rate + b.fault_rate - share * a.fault_rate  # approx
    print(f"{share:5.1f}    {fused:8.3f}   {np.mean(savings):12.2f}   "
          f"{merged}/20")

print("\nIndependent chips (overlap ~1%) never merge; heavily correlated")
print("fault maps always do. The savings gate draws the line by itself.")
