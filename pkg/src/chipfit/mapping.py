"""Placement of dense-layer weights onto the PE array, and the prune masks
a chip's fault map implies.

Placement rule (weight-stationary, fixed, and enforced by the brute-force
tiler in the test suite):

    weight (n, i) of a layer  --  neuron n, input i  --  is always held by
    PE (i mod rows, n mod cols).

A layer wider than the array is loaded segment by segment: inputs tile over
the array rows, neurons tile over the array columns, and every segment
reuses the same physical grid. The hardware bypasses faulty PEs, which
forces whatever weight sits on them to zero, so the mask for a layer kills
weight (n, i) exactly when PE (i mod rows, n mod cols) is faulty. Biases
live outside the array and are never masked.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .faultmap import FaultMap, HardwareConfig


@dataclass(frozen=True)
class LayerShape:
    """Dense layer dimensions: out_dim neurons, each reading in_dim inputs."""

    in_dim: int
    out_dim: int

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise ValueError(
                f"layer dims must be >= 1, got out={self.out_dim} in={self.in_dim}"
            )


def derive_weight_mask(
    layer: LayerShape, hw: HardwareConfig, fmap: FaultMap
) -> np.ndarray:
    """Boolean (out_dim, in_dim) mask: True = weight kept, False = forced to zero.

    Dims must match exactly between the fault map and the array; a mismatch
    is an error, never a silent truncation.
    """
    if fmap.dims != hw.dims:
        raise ValueError(
            f"fault map dims {fmap.dims} do not match array dims {hw.dims}"
        )
    faulty = fmap.to_matrix()
    row_of_input = np.arange(layer.in_dim) % hw.rows
    col_of_neuron = np.arange(layer.out_dim) % hw.cols
    # mask[n, i] = not faulty[i mod rows, n mod cols]
    return ~faulty[row_of_input[None, :], col_of_neuron[:, None]]


def derive_model_masks(
    shapes: Sequence[LayerShape], hw: HardwareConfig, fmap: FaultMap
) -> list[np.ndarray]:
    """One mask per layer of a model, all from the same fault map."""
    return [derive_weight_mask(s, hw, fmap) for s in shapes]


def masked_fraction(mask: np.ndarray) -> float:
    """Fraction of weights forced to zero by the mask."""
    mask = np.asarray(mask)
    if mask.size == 0:
        raise ValueError("empty mask")
    return float(mask.size - np.count_nonzero(mask)) / mask.size
