"""Retraining-resilience characterization of a pretrained model.

How many retraining epochs does a chip with a given fault rate need before
the masked model climbs back to an accuracy constraint? The answer is
measured once per fault rate on a ladder of probe rates (several seeded
fault maps per rate, worst/mean/best recorded) and then interpolated for
any chip that comes along later. Rates whose constraint cannot be met
within the epoch cap are kept in the table but flagged unreachable; they
poison any query that needs them.
"""

from __future__ import annotations

import bisect
import json
import math
import warnings
from dataclasses import dataclass, replace
from statistics import fmean
from typing import Sequence

from .faultmap import FaultMap, HardwareConfig, generate_fault_map
from .mapping import derive_model_masks
from .seeding import subseed
from .tinynet import DatasetPair, TinyModel, TrainConfig, evaluate, train_masked

SCHEMA_VERSION = 1

STATISTICS = ("min", "mean", "max")


class UnreachableRateError(ValueError):
    """The constraint cannot be met inside the queried fault-rate bracket."""

    def __init__(self, message, rates=(), chip_ids=()):
        super().__init__(message)
        self.rates = tuple(rates)
        self.chip_ids = tuple(chip_ids)


def fault_rate_list(
    rates: Sequence[float], max_rate: float, max_interval: float, step_ratio: float
) -> list[float]:
    """Ladder of probe fault rates: geometric growth capped to a linear step.

    Starts at the smallest observed rate. Each step adds
    min(current * step_ratio, max_interval), and the value is appended
    after the increment, so the last entry lands just past the larger of
    max_rate and the largest observed rate. Dense where rates are small
    and the cost curve moves fastest, evenly spaced once the cap kicks in.
    """
    rates = [float(r) for r in rates]
    if not rates:
        raise ValueError("need at least one observed fault rate")
    if max_interval <= 0 or step_ratio <= 0:
        raise ValueError(
            f"max_interval and step_ratio must be positive, got {max_interval}, {step_ratio}"
        )
    current = min(rates)
    if current < 0:
        raise ValueError(f"fault rates must be >= 0, got {current}")
    if current == 0:
        raise ValueError(
            "smallest observed fault rate is 0, so the ladder cannot grow; "
            "start it from a positive rate"
        )
    bound = max(max(rates), max_rate)
    ladder = [current]
    while current <= bound:
        current += min(current * step_ratio, max_interval)
        ladder.append(current)
    return ladder


@dataclass(frozen=True)
class TableRow:
    """Measured retraining effort at one probe fault rate."""

    rate: float
    epochs_min: float
    epochs_mean: float
    epochs_max: float
    acc_no_retrain: float
    reachable: bool = True

    def __post_init__(self):
        if not self.epochs_min <= self.epochs_mean <= self.epochs_max:
            raise ValueError(
                f"row at rate {self.rate}: min/mean/max out of order "
                f"({self.epochs_min}, {self.epochs_mean}, {self.epochs_max})"
            )

    def epochs(self, statistic: str) -> float:
        _check_statistic(statistic)
        return getattr(self, f"epochs_{statistic}")


@dataclass(frozen=True)
class ResilienceTable:
    """Rows sorted by strictly increasing fault rate, plus build parameters."""

    constraint: float
    reps: int
    e_max: int
    rows: tuple[TableRow, ...]
    dims: tuple[int, int] | None = None

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))
        rates = [r.rate for r in self.rows]
        if any(b <= a for a, b in zip(rates, rates[1:])):
            raise ValueError(f"table rates must be strictly increasing, got {rates}")

    @property
    def rates(self) -> list[float]:
        return [r.rate for r in self.rows]


def _check_statistic(statistic: str) -> None:
    if statistic not in STATISTICS:
        raise ValueError(f"statistic must be one of {STATISTICS}, got {statistic!r}")


def build_resilience_table(
    pretrained: TinyModel,
    hw: HardwareConfig,
    data: DatasetPair,
    rate_ladder: Sequence[float],
    constraint: float,
    reps: int = 5,
    e_max: int = 50,
    seed: int = 0,
    train: TrainConfig | None = None,
) -> ResilienceTable:
    """Measure epochs-to-constraint at every ladder rate.

    Per rate and repetition: inject a fresh seeded fault map, mask the
    pretrained model, record the accuracy without any retraining, then
    retrain until the first epoch whose test accuracy reaches the
    constraint (or the e_max cap). A row is reachable only if every
    repetition got there; epochs for a failed repetition are recorded at
    the cap, never silently clipped into a reachable-looking number.

    Sub-seeds depend only on (seed, rate index, repetition), so rows can
    be computed in any order with identical results.
    """
    if not 0.0 < constraint < 1.0:
        raise ValueError(f"constraint must be in (0, 1), got {constraint}")
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    if e_max < 1:
        raise ValueError(f"e_max must be >= 1, got {e_max}")
    ladder = [float(r) for r in rate_ladder]
    if not ladder:
        raise ValueError("empty rate ladder")
    if any(b <= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError(f"rate ladder must be strictly increasing, got {ladder}")
    if train is None:
        train = TrainConfig()

    baseline = evaluate(pretrained, None, data)
    if constraint > baseline:
        warnings.warn(
            f"constraint {constraint} exceeds the fault-free baseline accuracy "
            f"{baseline}; expect unreachable rows",
            stacklevel=2,
        )

    shapes = pretrained.shapes()
    rows = []
    for ri, rate in enumerate(ladder):
        epochs, accs0 = [], []
        reachable = True
        for j in range(reps):
            fmap = generate_fault_map(
                hw, rate, seed=subseed(seed, ri, j, 0), chip_id=f"probe-{ri}-{j}"
            )
            masks = derive_model_masks(shapes, hw, fmap)
            acc0 = evaluate(pretrained, masks, data)
            accs0.append(acc0)
            if acc0 >= constraint:
                epochs.append(0)
                continue
            cfg = replace(
                train,
                max_epochs=e_max,
                seed=subseed(seed, ri, j, 1),
                stop_accuracy=constraint,
            )
            _, history = train_masked(pretrained, masks, data, cfg)
            if history and history[-1] >= constraint:
                epochs.append(len(history))
            else:
                epochs.append(e_max)
                reachable = False
        rows.append(
            TableRow(
                rate=rate,
                epochs_min=float(min(epochs)),
                epochs_mean=float(fmean(epochs)),
                epochs_max=float(max(epochs)),
                acc_no_retrain=float(fmean(accs0)),
                reachable=reachable,
            )
        )
    return ResilienceTable(
        constraint=constraint, reps=reps, e_max=e_max, rows=tuple(rows), dims=hw.dims
    )


@dataclass(frozen=True)
class InterpolatedEpochs:
    """Result of a table query: real-valued epochs, plus a clamp flag for
    queries outside the table range (the boundary row's value is used)."""

    epochs: float
    clamped: bool = False


def _require_reachable(table: ResilienceTable, row: TableRow) -> None:
    if not row.reachable:
        raise UnreachableRateError(
            f"constraint {table.constraint} is unreachable within {table.e_max} "
            f"epochs at table rate {row.rate}",
            rates=(row.rate,),
        )


def epochs_for_rate(
    table: ResilienceTable, rate: float, statistic: str = "max"
) -> InterpolatedEpochs:
    """Piecewise-linear lookup of the chosen statistic at an arbitrary rate.

    Exact at table nodes. Out-of-range rates clamp to the nearest boundary
    row and come back flagged. A query whose bracket touches an
    unreachable row raises UnreachableRateError rather than inventing a
    number.
    """
    _check_statistic(statistic)
    rows = table.rows
    if not rows:
        raise ValueError("empty resilience table")
    rate = float(rate)
    if rate < 0:
        raise ValueError(f"rate must be >= 0, got {rate}")

    if rate <= rows[0].rate:
        _require_reachable(table, rows[0])
        return InterpolatedEpochs(rows[0].epochs(statistic), clamped=rate < rows[0].rate)
    if rate >= rows[-1].rate:
        _require_reachable(table, rows[-1])
        return InterpolatedEpochs(rows[-1].epochs(statistic), clamped=rate > rows[-1].rate)

    hi = bisect.bisect_left(table.rates, rate)
    if rows[hi].rate == rate:
        _require_reachable(table, rows[hi])
        return InterpolatedEpochs(rows[hi].epochs(statistic))
    lo = hi - 1
    _require_reachable(table, rows[lo])
    _require_reachable(table, rows[hi])
    w = (rate - rows[lo].rate) / (rows[hi].rate - rows[lo].rate)
    value = rows[lo].epochs(statistic) + w * (rows[hi].epochs(statistic) - rows[lo].epochs(statistic))
    return InterpolatedEpochs(value)


@dataclass(frozen=True)
class ChipPlan:
    """Whole-epoch retraining budget per chip, before any grouping."""

    statistic: str
    budgets: dict[str, int]

    @property
    def total(self) -> int:
        return sum(self.budgets.values())


def select_retraining_amounts(
    table: ResilienceTable, maps: Sequence[FaultMap], statistic: str = "max"
) -> ChipPlan:
    """Budget each chip from its own fault rate: ceil of the interpolated epochs.

    Permutation-invariant (each chip is budgeted independently). Chips
    whose rate falls in an unreachable bracket raise one combined
    UnreachableRateError naming them all.
    """
    _check_statistic(statistic)
    ids = [m.chip_id for m in maps]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate chip_ids in the map collection")
    if table.dims is not None:
        for m in maps:
            if m.dims != table.dims:
                raise ValueError(
                    f"chip {m.chip_id!r} dims {m.dims} do not match table dims {table.dims}"
                )
    budgets: dict[str, int] = {}
    bad = []
    for m in maps:
        try:
            q = epochs_for_rate(table, m.fault_rate, statistic)
        except UnreachableRateError:
            bad.append(m.chip_id)
            continue
        budgets[m.chip_id] = math.ceil(q.epochs)
    if bad:
        raise UnreachableRateError(
            f"constraint unreachable for chips: {', '.join(bad)}", chip_ids=tuple(bad)
        )
    return ChipPlan(statistic=statistic, budgets=budgets)


def save_table(table: ResilienceTable, path) -> None:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "constraint": table.constraint,
        "reps": table.reps,
        "e_max": table.e_max,
        "dims": list(table.dims) if table.dims is not None else None,
        "rows": [
            {
                "rate": r.rate,
                "epochs_min": r.epochs_min,
                "epochs_mean": r.epochs_mean,
                "epochs_max": r.epochs_max,
                "acc_no_retrain": r.acc_no_retrain,
                "reachable": r.reachable,
            }
            for r in table.rows
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, separators=(",", ":"))
        fh.write("\n")


def load_table(path) -> ResilienceTable:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise ValueError(f"table file {path}: invalid JSON ({e})") from e
    try:
        rows = tuple(
            TableRow(
                rate=float(r["rate"]),
                epochs_min=float(r["epochs_min"]),
                epochs_mean=float(r["epochs_mean"]),
                epochs_max=float(r["epochs_max"]),
                acc_no_retrain=float(r["acc_no_retrain"]),
                reachable=bool(r["reachable"]),
            )
            for r in doc["rows"]
        )
        dims = doc.get("dims")
        return ResilienceTable(
            constraint=float(doc["constraint"]),
            reps=int(doc["reps"]),
            e_max=int(doc["e_max"]),
            rows=rows,
            dims=tuple(dims) if dims is not None else None,
        )
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ValueError) and not isinstance(e, (KeyError, TypeError)):
            raise ValueError(f"table file {path}: {e}") from e
        raise ValueError(f"table file {path}: malformed ({e})") from e


def write_table_csv(table: ResilienceTable, path) -> None:
    """Plot-friendly CSV of the table rows."""
    lines = [f"# schema_version={SCHEMA_VERSION}", "rate,min,mean,max,acc_no_retrain"]
    for r in table.rows:
        lines.append(
            f"{r.rate!r},{r.epochs_min!r},{r.epochs_mean!r},{r.epochs_max!r},{r.acc_no_retrain!r}"
        )
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
