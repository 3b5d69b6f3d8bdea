from layerlens.probing.pipeline import (
    LabelRow,
    ProbingDataError,
    build_dataset,
    labels_from_store,
    read_labels,
    read_results,
    run_probing,
    write_results,
)
from layerlens.probing.probe import (
    DEFAULT_GRID,
    SPLITS,
    Probe,
    ProbeDataset,
    ProbeDivergenceError,
    ProbeHyperparams,
    ProbeResult,
    control_experiment,
    evaluate_probe,
    grid_configs,
    grid_search_cv,
    mean_pool,
    probe_dataset,
    split_train_test,
    train_probe,
)
from layerlens.probing.stats import CRITICAL_VALUES, pooled_z, significance_test, stars_for

__all__ = [
    "CRITICAL_VALUES",
    "DEFAULT_GRID",
    "LabelRow",
    "Probe",
    "ProbeDataset",
    "ProbeDivergenceError",
    "ProbeHyperparams",
    "ProbeResult",
    "ProbingDataError",
    "SPLITS",
    "build_dataset",
    "control_experiment",
    "evaluate_probe",
    "grid_configs",
    "grid_search_cv",
    "labels_from_store",
    "mean_pool",
    "pooled_z",
    "probe_dataset",
    "read_labels",
    "read_results",
    "run_probing",
    "significance_test",
    "split_train_test",
    "stars_for",
    "train_probe",
    "write_results",
]
