"""chipfit: resilience-driven planning of fault-aware retraining for
accelerator chips with permanently faulty PE arrays.

The workflow in one breath: model each chip's dead PEs as a fault map,
derive the weight mask its dataflow implies, measure once how many
retraining epochs each fault rate needs to recover an accuracy
constraint, then budget whole populations of chips by interpolation and
merge compatible chips so one retraining run serves many.
"""

from .faultmap import (
    FaultMap,
    HardwareConfig,
    combined_rate,
    fuse,
    generate_fault_map,
    load_fault_maps,
    save_fault_maps,
)
from .fusion import FusionResult, group_and_fuse, plan_with_fusion, relative_saving
from .mapping import LayerShape, derive_model_masks, derive_weight_mask, masked_fraction
from .pipeline import (
    ChipOutcome,
    ExperimentConfig,
    Report,
    RetrainPlan,
    load_config,
    preset,
    read_report_csv,
    run_baseline_individual,
    run_baseline_random_pairs,
    run_planned,
    save_config,
    write_report_csv,
    write_summary_csv,
)
from .resilience import (
    ChipPlan,
    InterpolatedEpochs,
    ResilienceTable,
    TableRow,
    UnreachableRateError,
    build_resilience_table,
    epochs_for_rate,
    fault_rate_list,
    select_retraining_amounts,
)
from .tinynet import (
    DatasetPair,
    ModelSpec,
    SyntheticDataset,
    TinyModel,
    TrainConfig,
    evaluate,
    make_dataset,
    pretrain,
    train_masked,
)

__version__ = "0.1.0"

__all__ = [
    "ChipOutcome",
    "ChipPlan",
    "DatasetPair",
    "ExperimentConfig",
    "FaultMap",
    "FusionResult",
    "HardwareConfig",
    "InterpolatedEpochs",
    "LayerShape",
    "ModelSpec",
    "Report",
    "ResilienceTable",
    "RetrainPlan",
    "SyntheticDataset",
    "TableRow",
    "TinyModel",
    "TrainConfig",
    "UnreachableRateError",
    "build_resilience_table",
    "combined_rate",
    "derive_model_masks",
    "derive_weight_mask",
    "epochs_for_rate",
    "evaluate",
    "fault_rate_list",
    "fuse",
    "generate_fault_map",
    "group_and_fuse",
    "load_config",
    "load_fault_maps",
    "make_dataset",
    "masked_fraction",
    "plan_with_fusion",
    "preset",
    "pretrain",
    "read_report_csv",
    "relative_saving",
    "run_baseline_individual",
    "run_baseline_random_pairs",
    "run_planned",
    "save_config",
    "save_fault_maps",
    "select_retraining_amounts",
    "train_masked",
    "write_report_csv",
    "write_summary_csv",
]
