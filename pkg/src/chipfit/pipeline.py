"""End-to-end experiment pipeline over a population of faulty chips.

Three strategies share the same fault maps, dataset and pretrained model:

  planned       - build the resilience table, budget every chip by
                  interpolation, group-and-fuse the population, then run
                  one retraining per group with early stop at the
                  constraint.
  individual    - one retraining per chip at a fixed epoch budget.
  random-pairs  - pair chips at random, fuse each pair, one retraining
                  per pair at a fixed budget.

Each chip is always scored with its own mask against the model of the
group that serves it. Every stage derives its randomness from the master
seed through fixed streams, so identical configs reproduce identical
reports byte for byte, whatever the worker count.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Sequence

import numpy as np

from . import seeding
from .faultmap import FaultMap, HardwareConfig, fuse, generate_fault_map
from .fusion import group_and_fuse
from .mapping import derive_model_masks
from .resilience import (
    ResilienceTable,
    UnreachableRateError,
    build_resilience_table,
    epochs_for_rate,
    fault_rate_list,
    select_retraining_amounts,
)
from .seeding import subseed
from .tinynet import (
    DatasetPair,
    ModelSpec,
    TinyModel,
    TrainConfig,
    evaluate,
    make_dataset,
    pretrain,
    train_masked,
)

SCHEMA_VERSION = 1

RATE_FLOOR = 0.001  # sampled chip rates are clipped into [RATE_FLOOR, 1.0]


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one experiment needs; mirrors the config JSON field for field."""

    rows: int = 16
    cols: int = 16
    n_chips: int = 40
    rate_mean: float = 0.1
    rate_sigma: float = 0.02
    dataset_kind: str = "blobs"
    n_samples: int = 4000
    n_features: int = 16
    n_classes: int = 4
    noise: float = 1.0
    hidden: tuple[int, ...] = (24, 24)
    learning_rate: float = 0.2
    batch_size: int = 512
    pretrain_epochs: int = 150
    constraint: float = 0.94
    statistic: str = "max"
    max_rate: float = 0.2
    max_interval: float = 0.05
    step_ratio: float = 0.5
    fusion_samples: int = 5
    fusion_sweeps: int = 2
    reps: int = 5
    e_max: int = 50
    seed: int = 1

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.n_chips < 1:
            raise ValueError(f"n_chips must be >= 1, got {self.n_chips}")
        if not 0.0 < self.constraint < 1.0:
            raise ValueError(f"constraint must be in (0, 1), got {self.constraint}")
        if self.rate_sigma < 0:
            raise ValueError(f"rate_sigma must be >= 0, got {self.rate_sigma}")

    @property
    def hardware(self) -> HardwareConfig:
        return HardwareConfig(self.rows, self.cols)

    @property
    def train_template(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate, batch_size=self.batch_size
        )


# Named presets: "toy" runs in seconds on a laptop, "large" is the
# full-size population (256x256 array, 100 chips) and takes real compute.
PRESETS = {
    "toy": ExperimentConfig(),
    "large": ExperimentConfig(
        rows=256,
        cols=256,
        n_chips=100,
        n_features=64,
        n_classes=4,
        hidden=(128, 128),
        pretrain_epochs=60,
    ),
}


def preset(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}, expected one of {tuple(PRESETS)}")
    return PRESETS[name]


def save_config(config: ExperimentConfig, path) -> None:
    doc = {"schema_version": SCHEMA_VERSION, **asdict(config)}
    doc["hidden"] = list(config.hidden)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise ValueError(f"config file {path}: invalid JSON ({e})") from e
    if not isinstance(doc, dict):
        raise ValueError(f"config file {path}: expected a JSON object")
    doc.pop("schema_version", None)
    known = {f for f in ExperimentConfig.__dataclass_fields__}
    unknown = set(doc) - known
    if unknown:
        raise ValueError(f"config file {path}: unknown fields {sorted(unknown)}")
    try:
        return ExperimentConfig(**doc)
    except TypeError as e:
        raise ValueError(f"config file {path}: {e}") from e


@dataclass(frozen=True)
class ChipOutcome:
    """One report row: how one chip ended up."""

    chip_id: str
    rate: float
    group: int
    budget: int
    executed: int
    accuracy: float
    met: bool


@dataclass(frozen=True)
class Report:
    """Per-chip outcomes plus the per-strategy epoch totals."""

    strategy: str
    constraint: float
    rows: tuple[ChipOutcome, ...]
    total_budget: int
    total_executed: int

    @property
    def met_fraction(self) -> float:
        if not self.rows:
            return 0.0
        return sum(r.met for r in self.rows) / len(self.rows)


@dataclass(frozen=True)
class PlanGroup:
    """One retraining run to schedule: merged map, members, epoch budget."""

    merged: FaultMap
    chip_ids: tuple[str, ...]
    budget: int


@dataclass(frozen=True)
class RetrainPlan:
    """Budgeted groups plus the per-chip budgets they came from."""

    statistic: str
    per_chip: dict[str, int]
    groups: tuple[PlanGroup, ...]
    unplanned: tuple[str, ...] = ()


# ---------------------------------------------------------------- stages


def derive_dataset(config: ExperimentConfig) -> DatasetPair:
    return make_dataset(
        kind=config.dataset_kind,
        n_samples=config.n_samples,
        n_features=config.n_features,
        n_classes=config.n_classes,
        noise=config.noise,
        seed=subseed(config.seed, seeding.DATASET),
    )


def pretrain_model(config: ExperimentConfig, data: DatasetPair):
    """Fault-free baseline for this config; returns (model, test accuracy)."""
    cfg = replace(
        config.train_template,
        max_epochs=config.pretrain_epochs,
        seed=subseed(config.seed, seeding.PRETRAIN),
    )
    return pretrain(ModelSpec(hidden=config.hidden), data, cfg)


def population_fault_maps(config: ExperimentConfig) -> list[FaultMap]:
    """One seeded fault map per chip, rates drawn from the config's Gaussian.

    Sampled rates are clipped into [0.001, 1.0] so every chip has at least
    a sliver of damage and none exceeds a fully dead array.
    """
    rng = np.random.default_rng(subseed(config.seed, seeding.CHIP_RATES))
    rates = np.clip(
        rng.normal(config.rate_mean, config.rate_sigma, size=config.n_chips),
        RATE_FLOOR,
        1.0,
    )
    hw = config.hardware
    return [
        generate_fault_map(
            hw,
            float(rates[i]),
            seed=subseed(config.seed, seeding.CHIP_MAPS, i),
            chip_id=f"chip-{i:03d}",
        )
        for i in range(config.n_chips)
    ]


def build_table(
    config: ExperimentConfig, maps: Sequence[FaultMap], model: TinyModel, data: DatasetPair
) -> ResilienceTable:
    """Resilience table over the ladder spanned by the population's rates.

    The ladder recurrence needs a positive starting rate, so it is built
    from the positive rates only. Populations that also contain fault-free
    chips get an extra probe node at rate 0 (free to measure, and it pins
    their interpolated budgets to exactly 0); an entirely fault-free
    population needs nothing but that node.
    """
    positive = [m.fault_rate for m in maps if m.fault_rate > 0]
    if positive:
        ladder = fault_rate_list(
            positive,
            max_rate=config.max_rate,
            max_interval=config.max_interval,
            step_ratio=config.step_ratio,
        )
        if len(positive) < len(maps):
            ladder = [0.0, *ladder]
    else:
        ladder = [0.0]
    return build_resilience_table(
        model,
        config.hardware,
        data,
        ladder,
        constraint=config.constraint,
        reps=config.reps,
        e_max=config.e_max,
        seed=subseed(config.seed, seeding.TABLE),
        train=config.train_template,
    )


def make_plan(
    config: ExperimentConfig, table: ResilienceTable, maps: Sequence[FaultMap]
) -> RetrainPlan:
    """Per-chip budgets plus fused groups for the planned strategy.

    Chips whose rate sits in an unreachable bracket cannot be budgeted;
    they are excluded from grouping and carried in `unplanned` so the
    report can show them as failures instead of crashing the run.
    """
    plannable, unplanned = [], []
    for m in maps:
        try:
            epochs_for_rate(table, m.fault_rate, config.statistic)
            plannable.append(m)
        except UnreachableRateError:
            unplanned.append(m.chip_id)

    per_chip = (
        select_retraining_amounts(table, plannable, config.statistic).budgets
        if plannable
        else {}
    )
    result = group_and_fuse(
        plannable,
        table,
        samples=config.fusion_samples,
        sweeps=config.fusion_sweeps,
        seed=subseed(config.seed, seeding.FUSION),
        statistic=config.statistic,
    )
    groups = tuple(
        PlanGroup(
            merged=merged,
            chip_ids=tuple(plannable[k].chip_id for k in members),
            budget=budget,
        )
        for merged, members, budget in zip(result.maps, result.groups, result.budgets)
    )
    return RetrainPlan(
        statistic=config.statistic,
        per_chip=per_chip,
        groups=groups,
        unplanned=tuple(unplanned),
    )


def _run_jobs(fn, jobs, workers):
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def execute_plan(
    config: ExperimentConfig,
    model: TinyModel,
    data: DatasetPair,
    maps: Sequence[FaultMap],
    plan: RetrainPlan,
    strategy: str,
    early_stop: bool = True,
    workers: int = 1,
):
    """Run one retraining per plan group and score every chip with its own mask.

    Returns (report, trained group models). Group g trains from the
    pretrained model under the merged mask with seed stream (seed,
    GROUP_TRAIN, g); job results are assembled in group order, so worker
    count cannot change the outcome. A zero budget ships the pretrained
    model as-is. Unplanned chips get no retraining and appear with group
    -1.
    """
    by_id = {m.chip_id: m for m in maps}
    hw = config.hardware
    shapes = model.shapes()

    def job(item):
        g, group = item
        masks = derive_model_masks(shapes, hw, group.merged)
        if group.budget == 0:
            trained, executed = model, 0
        else:
            cfg = replace(
                config.train_template,
                max_epochs=group.budget,
                seed=subseed(config.seed, seeding.GROUP_TRAIN, g),
                stop_accuracy=config.constraint if early_stop else None,
            )
            trained, history = train_masked(model, masks, data, cfg)
            executed = len(history)
        outcomes = []
        for cid in group.chip_ids:
            chip = by_id[cid]
            acc = evaluate(trained, derive_model_masks(shapes, hw, chip), data)
            outcomes.append(
                ChipOutcome(
                    chip_id=cid,
                    rate=chip.fault_rate,
                    group=g,
                    budget=group.budget,
                    executed=executed,
                    accuracy=acc,
                    met=acc >= config.constraint,
                )
            )
        return executed, outcomes, trained

    results = _run_jobs(job, list(enumerate(plan.groups)), workers)

    rows: list[ChipOutcome] = []
    group_models: list[TinyModel] = []
    total_executed = 0
    for executed, outcomes, trained in results:
        total_executed += executed
        rows.extend(outcomes)
        group_models.append(trained)
    for cid in plan.unplanned:
        chip = by_id[cid]
        acc = evaluate(model, derive_model_masks(shapes, hw, chip), data)
        rows.append(
            ChipOutcome(
                chip_id=cid,
                rate=chip.fault_rate,
                group=-1,
                budget=0,
                executed=0,
                accuracy=acc,
                met=acc >= config.constraint,
            )
        )
    rows.sort(key=lambda r: r.chip_id)
    report = Report(
        strategy=strategy,
        constraint=config.constraint,
        rows=tuple(rows),
        total_budget=sum(g.budget for g in plan.groups),
        total_executed=total_executed,
    )
    return report, group_models


# ------------------------------------------------------------ strategies


def run_planned(config: ExperimentConfig, workers: int = 1) -> Report:
    """Full pipeline: fault maps, pretrain, table, plan, grouped retraining."""
    data = derive_dataset(config)
    model, _baseline = pretrain_model(config, data)
    maps = population_fault_maps(config)
    table = build_table(config, maps, model, data)
    plan = make_plan(config, table, maps)
    report, _ = execute_plan(
        config, model, data, maps, plan, strategy="planned", early_stop=True,
        workers=workers,
    )
    return report


def individual_plan(
    config: ExperimentConfig, maps: Sequence[FaultMap], epochs_per_chip: int
) -> RetrainPlan:
    """Trivial plan: every chip is its own group at a fixed budget."""
    if epochs_per_chip < 0:
        raise ValueError(f"epochs_per_chip must be >= 0, got {epochs_per_chip}")
    return RetrainPlan(
        statistic=config.statistic,
        per_chip={m.chip_id: epochs_per_chip for m in maps},
        groups=tuple(
            PlanGroup(merged=m, chip_ids=(m.chip_id,), budget=epochs_per_chip)
            for m in maps
        ),
    )


def random_pairs_plan(
    config: ExperimentConfig, maps: Sequence[FaultMap], epochs_per_group: int
) -> RetrainPlan:
    """Seeded random pairing, fusing each pair; the odd chip out trains alone.

    Pairing ignores fault rates entirely; that is the point of this
    baseline.
    """
    if epochs_per_group < 0:
        raise ValueError(f"epochs_per_group must be >= 0, got {epochs_per_group}")
    rng = np.random.default_rng(subseed(config.seed, seeding.PAIRING))
    order = [int(k) for k in rng.permutation(len(maps))]
    groups = []
    for start in range(0, len(order) - 1, 2):
        a, b = maps[order[start]], maps[order[start + 1]]
        groups.append(
            PlanGroup(
                merged=fuse(a, b), chip_ids=(a.chip_id, b.chip_id),
                budget=epochs_per_group,
            )
        )
    if len(order) % 2:
        last = maps[order[-1]]
        groups.append(
            PlanGroup(merged=last, chip_ids=(last.chip_id,), budget=epochs_per_group)
        )
    return RetrainPlan(
        statistic=config.statistic,
        per_chip={m.chip_id: epochs_per_group for m in maps},
        groups=tuple(groups),
    )


def run_baseline_individual(
    config: ExperimentConfig, epochs_per_chip: int, workers: int = 1
) -> Report:
    """One fixed-budget retraining per chip; no table, no early stop."""
    data = derive_dataset(config)
    model, _ = pretrain_model(config, data)
    maps = population_fault_maps(config)
    plan = individual_plan(config, maps, epochs_per_chip)
    report, _ = execute_plan(
        config, model, data, maps, plan,
        strategy=f"individual-e{epochs_per_chip}", early_stop=False, workers=workers,
    )
    return report


def run_baseline_random_pairs(
    config: ExperimentConfig, epochs_per_group: int, workers: int = 1
) -> Report:
    """Random pairing baseline: fuse each pair, fixed budget per pair."""
    data = derive_dataset(config)
    model, _ = pretrain_model(config, data)
    maps = population_fault_maps(config)
    plan = random_pairs_plan(config, maps, epochs_per_group)
    report, _ = execute_plan(
        config, model, data, maps, plan,
        strategy=f"random-pairs-e{epochs_per_group}", early_stop=False, workers=workers,
    )
    return report


# ------------------------------------------------------------------- IO


def save_plan(plan: RetrainPlan, path) -> None:
    dims = plan.groups[0].merged.dims if plan.groups else None
    doc = {
        "schema_version": SCHEMA_VERSION,
        "statistic": plan.statistic,
        "dims": list(dims) if dims is not None else None,
        "per_chip": dict(sorted(plan.per_chip.items())),
        "unplanned": list(plan.unplanned),
        "groups": [
            {
                "chip_ids": list(g.chip_ids),
                "budget": g.budget,
                "merged": {
                    "chip_id": g.merged.chip_id,
                    "faults": [list(f) for f in g.merged.sorted_faults()],
                },
            }
            for g in plan.groups
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, separators=(",", ":"))
        fh.write("\n")


def load_plan(path) -> RetrainPlan:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise ValueError(f"plan file {path}: invalid JSON ({e})") from e
    try:
        dims = doc["dims"]
        groups = []
        for g in doc["groups"]:
            merged = FaultMap(
                chip_id=g["merged"]["chip_id"],
                dims=tuple(dims),
                faults=frozenset(tuple(f) for f in g["merged"]["faults"]),
            )
            groups.append(
                PlanGroup(
                    merged=merged,
                    chip_ids=tuple(g["chip_ids"]),
                    budget=int(g["budget"]),
                )
            )
        return RetrainPlan(
            statistic=doc["statistic"],
            per_chip={k: int(v) for k, v in doc["per_chip"].items()},
            groups=tuple(groups),
            unplanned=tuple(doc.get("unplanned", ())),
        )
    except (KeyError, TypeError) as e:
        raise ValueError(f"plan file {path}: malformed ({e})") from e


def write_report_csv(report: Report, path) -> None:
    """Canonical report CSV; identical reports serialize to identical bytes."""
    lines = [
        f"# schema_version={SCHEMA_VERSION}",
        f"# strategy={report.strategy}",
        f"# constraint={report.constraint!r}",
        "chip_id,rate,group,budget,executed,accuracy,met",
    ]
    for r in report.rows:
        lines.append(
            f"{r.chip_id},{r.rate!r},{r.group},{r.budget},{r.executed},"
            f"{r.accuracy!r},{int(r.met)}"
        )
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def read_report_csv(path) -> Report:
    with open(path) as fh:
        raw = fh.read()

    def bad(msg):
        return ValueError(f"report file {path}: {msg}")

    strategy = None
    constraint = None
    rows = []
    header_seen = False
    for line in raw.splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("strategy="):
                strategy = body.removeprefix("strategy=")
            elif body.startswith("constraint="):
                constraint = float(body.removeprefix("constraint="))
            continue
        if not header_seen:
            if line != "chip_id,rate,group,budget,executed,accuracy,met":
                raise bad(f"unexpected header {line!r}")
            header_seen = True
            continue
        parts = line.split(",")
        if len(parts) != 7:
            raise bad(f"expected 7 fields, got {len(parts)}: {line!r}")
        try:
            rows.append(
                ChipOutcome(
                    chip_id=parts[0],
                    rate=float(parts[1]),
                    group=int(parts[2]),
                    budget=int(parts[3]),
                    executed=int(parts[4]),
                    accuracy=float(parts[5]),
                    met=bool(int(parts[6])),
                )
            )
        except ValueError as e:
            raise bad(f"bad row {line!r} ({e})") from e
    if strategy is None or constraint is None or not header_seen:
        raise bad("missing strategy/constraint comments or header")
    total_budget = 0
    total_executed = 0
    seen_groups = set()
    for r in rows:
        if r.group >= 0 and r.group not in seen_groups:
            seen_groups.add(r.group)
            total_budget += r.budget
            total_executed += r.executed
    return Report(
        strategy=strategy,
        constraint=constraint,
        rows=tuple(rows),
        total_budget=total_budget,
        total_executed=total_executed,
    )


def write_summary_csv(reports: Sequence[Report], path) -> None:
    """Side-by-side totals: strategy, executed epochs, constraint-met percent."""
    lines = [f"# schema_version={SCHEMA_VERSION}", "strategy,total_epochs,met_pct"]
    for rep in reports:
        lines.append(f"{rep.strategy},{rep.total_executed},{100.0 * rep.met_fraction!r}")
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
