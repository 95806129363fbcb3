"""Grouping and fusion of chip fault maps ahead of consolidated retraining.

One retraining run can serve several chips if their fault maps are merged
(set union) first: the run pins the union's weights to zero, so each
member chip sees a model that is already valid for its own subset of
faults. Whether a merge pays depends on the cost curve. Retraining cost
grows steeply with fault rate, so merging two unrelated maps usually
costs more than two separate runs, while maps that overlap heavily are
nearly free to serve together. Savings are estimated from the resilience
table before any merge is accepted.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .faultmap import FaultMap, fuse
from .resilience import (
    ResilienceTable,
    UnreachableRateError,
    epochs_for_rate,
)

# How a partner is chosen among the sampled candidates:
#   "least-rate"  - merge the partner whose union has the smallest fault
#                   rate (the cost curve is increasing, so this is the
#                   cheapest union); the default.
#   "min-saving"  - gate on the smallest saving among the candidates.
#                   Rarely merges anything; kept selectable so the two
#                   policies can be compared head to head.
CANDIDATE_RULES = ("least-rate", "min-saving")


@dataclass(frozen=True)
class FusionResult:
    """Merged maps sorted by fault rate, the original chip indices each one
    serves, and its whole-epoch retraining budget."""

    maps: tuple[FaultMap, ...]
    groups: tuple[tuple[int, ...], ...]
    budgets: tuple[int, ...]
    statistic: str

    def __post_init__(self):
        if not (len(self.maps) == len(self.groups) == len(self.budgets)):
            raise ValueError("maps, groups and budgets must be parallel")

    @property
    def total_budget(self) -> int:
        return sum(self.budgets)


def relative_saving(
    a: FaultMap, b: FaultMap, table: ResilienceTable, statistic: str = "max"
) -> float:
    """Epochs saved if one run serves both maps: cost(a) + cost(b) - cost(a|b).

    Costs are the real-valued interpolated epochs. Returns -inf when the
    fused rate falls where the constraint is unreachable, or past the top
    of the table: the clamped extrapolation up there flattens a steeply
    rising cost curve, so trusting it would let merges chain into fault
    rates nobody ever measured.
    """
    cost_a = epochs_for_rate(table, a.fault_rate, statistic).epochs
    cost_b = epochs_for_rate(table, b.fault_rate, statistic).epochs
    fused_rate = fuse(a, b).fault_rate
    if table.rows and fused_rate > table.rows[-1].rate:
        return float("-inf")
    try:
        cost_ab = epochs_for_rate(table, fused_rate, statistic).epochs
    except UnreachableRateError:
        return float("-inf")
    return cost_a + cost_b - cost_ab


def group_and_fuse(
    maps: Sequence[FaultMap],
    table: ResilienceTable,
    samples: int,
    sweeps: int,
    seed: int = 0,
    statistic: str = "max",
    candidate_rule: str = "least-rate",
) -> FusionResult:
    """Greedy sweeps merging map pairs whose estimated saving is positive.

    The working list stays sorted by fault rate. Each position draws up to
    `samples` random partners from the maps after it (all of them when
    fewer remain). Under "least-rate" the partner with the smallest fused
    fault rate wins, ties going to the earliest position; the merge
    happens only if its saving is positive. After a merge the union is
    re-inserted at its rate-sorted position and the same list position is
    examined again. The last list position is never a left-hand pick.

    Group membership comes back as indices into the input `maps`.
    """
    maps = list(maps)
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")
    if sweeps < 1:
        raise ValueError(f"sweeps must be >= 1, got {sweeps}")
    if candidate_rule not in CANDIDATE_RULES:
        raise ValueError(
            f"candidate_rule must be one of {CANDIDATE_RULES}, got {candidate_rule!r}"
        )
    for m in maps[1:]:
        if m.dims != maps[0].dims:
            raise ValueError(
                f"all maps must share dims; saw {maps[0].dims} and {m.dims}"
            )
    if not maps:
        return FusionResult((), (), (), statistic)

    order = sorted(range(len(maps)), key=lambda k: maps[k].fault_rate)
    fmaps = [maps[k] for k in order]
    groups: list[list[int]] = [[k] for k in order]
    rng = np.random.default_rng(seed)

    for _sweep in range(sweeps):
        i = 0
        while i < len(fmaps) - 1:
            suffix = len(fmaps) - i - 1
            if suffix <= samples:
                cand = list(range(i + 1, len(fmaps)))
            else:
                picks = rng.choice(suffix, size=samples, replace=False)
                cand = sorted(i + 1 + int(p) for p in picks)

            if candidate_rule == "least-rate":
                best = None
                best_union = None
                for j in cand:
                    union = len(fmaps[i].faults | fmaps[j].faults)
                    if best is None or union < best_union:
                        best, best_union = j, union
                saving = relative_saving(fmaps[i], fmaps[best], table, statistic)
            else:  # "min-saving"
                saving, best = min(
                    ((relative_saving(fmaps[i], fmaps[j], table, statistic), j) for j in cand),
                    key=lambda t: t[0],
                )

            i += 1
            if saving > 0:
                a, b = fmaps[i - 1], fmaps[best]
                ga, gb = groups[i - 1], groups[best]
                del fmaps[best], groups[best]
                del fmaps[i - 1], groups[i - 1]
                merged = fuse(a, b)
                pos = bisect.bisect_right([m.fault_rate for m in fmaps], merged.fault_rate)
                fmaps.insert(pos, merged)
                groups.insert(pos, sorted(ga + gb))
                i -= 1

    budgets = tuple(
        math.ceil(epochs_for_rate(table, m.fault_rate, statistic).epochs) for m in fmaps
    )
    return FusionResult(
        maps=tuple(fmaps),
        groups=tuple(tuple(g) for g in groups),
        budgets=budgets,
        statistic=statistic,
    )


def plan_with_fusion(
    maps: Sequence[FaultMap],
    table: ResilienceTable,
    samples: int,
    sweeps: int,
    seed: int = 0,
    statistic: str = "max",
) -> tuple[FusionResult, int]:
    """Group, fuse and budget a population; returns (result, total epochs).

    Merges are only ever accepted at positive real-valued saving, so the
    sum of interpolated group costs never exceeds the per-chip total under
    the same statistic; whole-epoch rounding can add at most one epoch per
    group on top of that bound.
    """
    result = group_and_fuse(maps, table, samples, sweeps, seed=seed, statistic=statistic)
    return result, result.total_budget
