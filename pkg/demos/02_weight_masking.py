"""How PE faults translate into weight masks, and what they cost in accuracy.

Each weight (neuron n, input i) lives on PE (i mod rows, n mod cols) under
the weight-stationary dataflow, so one dead PE silences a whole congruence
class of weights in every layer.

Run:  python3 demos/02_weight_masking.py
"""

import numpy as np

from chipfit.faultmap import HardwareConfig, generate_fault_map
from chipfit.mapping import derive_model_masks, masked_fraction
from chipfit.tinynet import ModelSpec, TrainConfig, evaluate, make_dataset, pretrain

hw = HardwareConfig(16, 16)
data = make_dataset("blobs", 4000, 16, 4, noise=1.0, seed=1)
model, baseline = pretrain(ModelSpec((24, 24)), data,
                           TrainConfig(learning_rate=0.2, batch_size=512,
                                       max_epochs=150, seed=1))
print(f"fault-free baseline accuracy: {baseline:.4f}\n")

print("rate   masked-weights  accuracy  drop")
for rate in (0.0, 0.05, 0.10, 0.15, 0.20, 0.30, 0.50):
    accs, fracs = [], []
    for seed in range(5):
        fm = generate_fault_map(hw, rate, seed=100 + seed, chip_id="probe")
        masks = derive_model_masks(model.shapes(), hw, fm)
        fracs.append(np.mean([masked_fraction(m) for m in masks]))
        accs.append(evaluate(model, masks, data))
    print(f"{rate:.2f}   {np.mean(fracs):14.4f}  {np.mean(accs):.4f}  "
          f"{baseline - np.mean(accs):+.4f}")

print("\nThe masked-weight fraction tracks the PE fault rate, and accuracy")
print("degrades smoothly until the array is badly damaged.")
