"""End-to-end planning pipeline: config, population, table, plan, reports."""

from dataclasses import replace

import numpy as np
import pytest

from chipfit.faultmap import FaultMap, fuse
from chipfit.pipeline import (
    ExperimentConfig,
    PRESETS,
    Report,
    build_table,
    derive_dataset,
    execute_plan,
    individual_plan,
    load_config,
    load_plan,
    make_plan,
    population_fault_maps,
    preset,
    pretrain_model,
    random_pairs_plan,
    read_report_csv,
    run_baseline_individual,
    run_baseline_random_pairs,
    run_planned,
    save_config,
    save_plan,
    write_report_csv,
    write_summary_csv,
)
from chipfit.mapping import derive_model_masks
from chipfit.tinynet import evaluate

# kept deliberately tiny: 8x8 array, 6 chips, one thin hidden layer
SMALL = replace(
    ExperimentConfig(),
    rows=8, cols=8, n_chips=6, rate_mean=0.08, rate_sigma=0.02,
    n_samples=400, n_features=8, hidden=(12,),
    learning_rate=0.1, batch_size=32, pretrain_epochs=40,
    constraint=0.9, reps=2, e_max=15, seed=3,
)


def small_setup():
    data = derive_dataset(SMALL)
    model, baseline = pretrain_model(SMALL, data)
    maps = population_fault_maps(SMALL)
    return data, model, baseline, maps


# -------------------------------------------------------------------- config

def test_config_round_trip(tmp_path):
    p = tmp_path / "config.json"
    save_config(SMALL, p)
    assert load_config(p) == SMALL


def test_config_rejects_unknown_fields(tmp_path):
    import json
    p = tmp_path / "config.json"
    save_config(SMALL, p)
    doc = json.loads(p.read_text())
    doc["typo_field"] = 1
    p.write_text(json.dumps(doc))
    with pytest.raises(ValueError):
        load_config(p)


def test_presets_are_valid_configs():
    assert "large" in PRESETS
    cfg = preset("large")
    assert cfg.rows == 256 and cfg.cols == 256
    with pytest.raises(ValueError):
        preset("gigantic")


# ---------------------------------------------------------------- population

def test_population_is_seeded_and_clipped():
    maps = population_fault_maps(SMALL)
    again = population_fault_maps(SMALL)
    other = population_fault_maps(replace(SMALL, seed=4))
    assert [m.faults for m in maps] == [m.faults for m in again]
    assert [m.faults for m in maps] != [m.faults for m in other]
    assert [m.chip_id for m in maps] == [f"chip-{i:03d}" for i in range(6)]
    for m in maps:
        assert 0.0 <= m.fault_rate <= 1.0
        assert m.dims == (8, 8)


def test_population_extreme_mean_stays_in_range():
    lo = population_fault_maps(replace(SMALL, rate_mean=0.0, rate_sigma=0.0))
    hi = population_fault_maps(replace(SMALL, rate_mean=5.0, rate_sigma=0.0))
    # floor 0.001 on an 8x8 array rounds to zero faults; cap is a dead array
    assert all(m.fault_rate == 0.0 for m in lo)
    assert all(m.fault_rate == 1.0 for m in hi)


# --------------------------------------------------------------------- table

def test_build_table_covers_population_range():
    data, model, baseline, maps = small_setup()
    table = build_table(SMALL, maps, model, data)
    rates = [m.fault_rate for m in maps]
    assert table.rows[0].rate == pytest.approx(min(rates))
    assert table.rows[-1].rate >= max(rates)
    assert table.dims == (8, 8)
    assert table.constraint == SMALL.constraint


def test_build_table_all_healthy_population():
    cfg = replace(SMALL, rate_mean=0.0, rate_sigma=0.0)
    data = derive_dataset(cfg)
    model, _ = pretrain_model(cfg, data)
    maps = population_fault_maps(cfg)
    table = build_table(cfg, maps, model, data)
    assert [r.rate for r in table.rows] == [0.0]
    assert table.rows[0].epochs_max == 0.0


def test_build_table_mixed_zero_and_positive_rates():
    data, model, baseline, _ = small_setup()
    maps = [
        FaultMap(chip_id="healthy", dims=(8, 8), faults=frozenset()),
        population_fault_maps(SMALL)[0],
    ]
    table = build_table(SMALL, maps, model, data)
    assert table.rows[0].rate == 0.0
    assert table.rows[0].epochs_max == 0.0
    assert table.rows[-1].rate >= maps[1].fault_rate


# ------------------------------------------------------------------ planning

def test_make_plan_budgets_and_groups_partition():
    data, model, baseline, maps = small_setup()
    table = build_table(SMALL, maps, model, data)
    plan = make_plan(SMALL, table, maps)
    assert set(plan.per_chip) == {m.chip_id for m in maps}
    covered = sorted(cid for g in plan.groups for cid in g.chip_ids)
    assert covered == sorted(m.chip_id for m in maps)
    assert plan.unplanned == ()
    by_id = {m.chip_id: m for m in maps}
    for g in plan.groups:
        union = frozenset().union(*(by_id[c].faults for c in g.chip_ids))
        assert g.merged.faults == union
        assert g.budget >= 0


def test_plan_round_trip(tmp_path):
    data, model, baseline, maps = small_setup()
    table = build_table(SMALL, maps, model, data)
    plan = make_plan(SMALL, table, maps)
    p = tmp_path / "plan.json"
    save_plan(plan, p)
    back = load_plan(p)
    assert back.statistic == plan.statistic
    assert back.per_chip == plan.per_chip
    assert back.unplanned == plan.unplanned
    assert len(back.groups) == len(plan.groups)
    for ga, gb in zip(back.groups, plan.groups):
        assert ga.chip_ids == gb.chip_ids
        assert ga.budget == gb.budget
        assert ga.merged.faults == gb.merged.faults


# ----------------------------------------------------------------- execution

def test_execute_plan_deployed_accuracy_is_group_model_accuracy():
    data, model, baseline, maps = small_setup()
    table = build_table(SMALL, maps, model, data)
    plan = make_plan(SMALL, table, maps)
    report, group_models = execute_plan(SMALL, model, data, maps, plan, "planned")
    assert len(group_models) == len(plan.groups)
    hw = SMALL.hardware
    outcome = {o.chip_id: o for o in report.rows}
    chip_map = {m.chip_id: m for m in maps}
    for g, gm in zip(plan.groups, group_models):
        union_masks = derive_model_masks(model.shapes(), hw, g.merged)
        union_acc = evaluate(gm, union_masks, data)
        for cid in g.chip_ids:
            chip_masks = derive_model_masks(model.shapes(), hw, chip_map[cid])
            own_acc = evaluate(gm, chip_masks, data)
            assert outcome[cid].accuracy == own_acc
            # zeroed union weights make the chip's own mask a no-op on top
            assert own_acc == union_acc


def test_execute_plan_rows_sorted_and_met_consistent():
    data, model, baseline, maps = small_setup()
    table = build_table(SMALL, maps, model, data)
    plan = make_plan(SMALL, table, maps)
    report, _ = execute_plan(SMALL, model, data, maps, plan, "planned")
    ids = [o.chip_id for o in report.rows]
    assert ids == sorted(ids)
    for o in report.rows:
        assert o.met == (o.accuracy >= SMALL.constraint)
        assert 0 <= o.executed <= o.budget
    assert report.strategy == "planned"
    assert report.constraint == SMALL.constraint


def test_execute_plan_worker_count_does_not_change_results():
    data, model, baseline, maps = small_setup()
    table = build_table(SMALL, maps, model, data)
    plan = make_plan(SMALL, table, maps)
    a, _ = execute_plan(SMALL, model, data, maps, plan, "planned", workers=1)
    b, _ = execute_plan(SMALL, model, data, maps, plan, "planned", workers=4)
    assert a == b


def test_zero_budget_ships_the_pretrained_model():
    data, model, baseline, maps = small_setup()
    plan = individual_plan(SMALL, maps, 0)
    report, group_models = execute_plan(
        SMALL, model, data, maps, plan, "individual-e0", early_stop=False)
    hw = SMALL.hardware
    for m, o, gm in zip(maps, sorted(report.rows, key=lambda r: r.chip_id),
                        group_models):
        masks = derive_model_masks(model.shapes(), hw, m)
        assert o.accuracy == evaluate(model, masks, data)
        assert o.executed == 0
    assert report.total_executed == 0


def test_all_healthy_population_runs_for_free():
    cfg = replace(SMALL, rate_mean=0.0, rate_sigma=0.0)
    report = run_planned(cfg)
    assert report.total_executed == 0
    assert report.met_fraction == 1.0
    assert all(o.met for o in report.rows)


def test_run_planned_is_deterministic():
    a = run_planned(SMALL)
    b = run_planned(SMALL, workers=3)
    assert a == b


def test_max_statistic_meets_at_least_as_often_as_mean():
    met_max = run_planned(SMALL).met_fraction
    met_mean = run_planned(replace(SMALL, statistic="mean")).met_fraction
    assert met_max >= met_mean


def test_individual_zero_epochs_equals_no_retraining_accuracy():
    report = run_baseline_individual(SMALL, 0)
    assert report.strategy == "individual-e0"
    assert report.total_executed == 0
    data, model, baseline, maps = small_setup()
    hw = SMALL.hardware
    by_id = {m.chip_id: m for m in maps}
    for o in report.rows:
        masks = derive_model_masks(model.shapes(), hw, by_id[o.chip_id])
        assert o.accuracy == evaluate(model, masks, data)


def test_more_individual_epochs_never_hurt_here():
    met = [run_baseline_individual(SMALL, e).met_fraction for e in (0, 2, 6)]
    assert met[0] <= met[1] <= met[2]


def test_random_pairs_structure_and_odd_chip():
    maps = population_fault_maps(SMALL)  # 6 chips -> 3 pairs
    plan = random_pairs_plan(SMALL, maps, 2)
    assert len(plan.groups) == 3
    assert all(len(g.chip_ids) == 2 for g in plan.groups)
    odd = random_pairs_plan(SMALL, maps[:5], 2)
    sizes = sorted(len(g.chip_ids) for g in odd.groups)
    assert sizes == [1, 2, 2]
    covered = sorted(c for g in odd.groups for c in g.chip_ids)
    assert covered == sorted(m.chip_id for m in maps[:5])


def test_identical_map_population_pairs_for_free():
    base = population_fault_maps(SMALL)[2]
    clones = [FaultMap(chip_id=f"t{i}", dims=base.dims, faults=base.faults)
              for i in range(6)]
    plan = random_pairs_plan(SMALL, clones, 3)
    for g in plan.groups:
        assert g.merged.faults == base.faults  # idempotent fuse
    data, model, baseline, _ = small_setup()
    paired, _ = execute_plan(SMALL, model, data, clones, plan, "random-pairs-e3",
                             early_stop=False)
    solo, _ = execute_plan(SMALL, model, data, clones,
                           individual_plan(SMALL, clones, 3), "individual-e3",
                           early_stop=False)
    assert paired.total_executed * 2 == solo.total_executed


def test_run_baseline_random_pairs_tag_and_totals():
    report = run_baseline_random_pairs(SMALL, 1)
    assert report.strategy == "random-pairs-e1"
    assert report.total_executed == 3  # 3 groups x 1 epoch, no early stop
    assert len(report.rows) == 6


# ------------------------------------------------------------------- reports

def test_report_csv_round_trip(tmp_path):
    report = run_planned(SMALL)
    p = tmp_path / "report.csv"
    write_report_csv(report, p)
    back = read_report_csv(p)
    assert back == report


def test_report_csv_is_stable_bytes(tmp_path):
    report = run_planned(SMALL)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_report_csv(report, p1)
    write_report_csv(run_planned(SMALL, workers=2), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_report_header_and_types(tmp_path):
    report = run_baseline_individual(SMALL, 1)
    p = tmp_path / "report.csv"
    write_report_csv(report, p)
    lines = p.read_text().splitlines()
    meta = [l for l in lines if l.startswith("#")]
    assert any("schema_version" in l for l in meta)
    assert any("strategy=individual-e1" in l for l in meta)
    header = next(l for l in lines if not l.startswith("#"))
    assert header == "chip_id,rate,group,budget,executed,accuracy,met"


def test_read_report_rejects_corrupt_header(tmp_path):
    report = run_baseline_individual(SMALL, 0)
    p = tmp_path / "report.csv"
    write_report_csv(report, p)
    text = p.read_text().replace("chip_id,rate", "chip,rate")
    p.write_text(text)
    with pytest.raises(ValueError):
        read_report_csv(p)


def test_summary_csv(tmp_path):
    reports = [run_baseline_individual(SMALL, 0), run_baseline_individual(SMALL, 1)]
    p = tmp_path / "summary.csv"
    write_summary_csv(reports, p)
    lines = [l for l in p.read_text().splitlines() if not l.startswith("#")]
    assert lines[0] == "strategy,total_epochs,met_pct"
    assert lines[1].startswith("individual-e0,0,")
    assert len(lines) == 3


def test_report_accounting_identity():
    report = run_planned(SMALL)
    first_seen = {}
    for o in report.rows:
        if o.group >= 0 and o.group not in first_seen:
            first_seen[o.group] = (o.budget, o.executed)
    assert report.total_budget == sum(b for b, _ in first_seen.values())
    assert report.total_executed == sum(e for _, e in first_seen.values())
    assert report.met_fraction == sum(o.met for o in report.rows) / len(report.rows)
