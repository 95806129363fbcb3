"""Generate chip fault maps, fuse them, and look at overlap statistics.

Run:  python3 demos/01_fault_maps.py
"""

import numpy as np

from chipfit.faultmap import HardwareConfig, combined_rate, fuse, generate_fault_map


def show(fm, hw):
    grid = fm.to_matrix()
    print(f"{fm.chip_id}: rate {fm.fault_rate:.4f} ({len(fm.faults)} faulty PEs)")
    for r in range(hw.rows):
        print("   " + "".join("X" if grid[r, c] else "." for c in range(hw.cols)))


hw = HardwareConfig(16, 16)
a = generate_fault_map(hw, 0.10, seed=1, chip_id="chip-a")
b = generate_fault_map(hw, 0.10, seed=2, chip_id="chip-b")

print("Two independently manufactured chips with ~10% dead PEs:\n")
show(a, hw)
print()
show(b, hw)

ab = fuse(a, b)
overlap = len(a.faults & b.faults) / hw.total
print(f"\nFused map ({ab.chip_id}): rate {ab.fault_rate:.4f}")
print(f"measured overlap {overlap:.4f}, inclusion-exclusion gives "
      f"{combined_rate(a.fault_rate, b.fault_rate, overlap):.4f}")

print("\nFor independent maps the expected overlap is rate_a * rate_b;")
print("sampling 2000 pairs at rate 0.1 on the 16x16 array:")
rng = np.random.default_rng(0)
overlaps = []
for _ in range(2000):
    x = generate_fault_map(hw, 0.1, int(rng.integers(2**31)), "x")
    y = generate_fault_map(hw, 0.1, int(rng.integers(2**31)), "y")
    overlaps.append(len(x.faults & y.faults) / hw.total)
print(f"mean measured overlap {np.mean(overlaps):.5f} "
      f"vs independent prediction {a.fault_rate * b.fault_rate:.5f}")
