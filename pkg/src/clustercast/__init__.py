"""Clustered multi-group forecasting with swarm-blended parameter transfer."""

from .clustering import (
    ClusterModel,
    assign,
    euclidean_distance,
    kmeans_fit,
    label_agreement,
    relabel_by_peak,
    update_centers,
)
from .dataset import (
    ClusterProfileSpec,
    RawSeriesTable,
    Scaler,
    SupervisedDataset,
    SyntheticSpec,
    default_synthetic_spec,
    fit_apply_scaler,
    generate_synthetic,
    load_csv,
    make_windows,
    split,
)
from .harness import ExperimentConfig, RunRecord, prepare_data, run_experiment
from .predictor import (
    AdamState,
    ParameterSet,
    TrainConfig,
    adam_step,
    forward,
    gradient,
    init_params,
    load_params,
    rmse,
    save_params,
    train,
)
from .transfer import (
    PsoConfig,
    TransferSolution,
    blend,
    decode,
    evaluate_particle,
    init_swarm,
    pso_step,
    run_transfer,
)

__version__ = "0.1.0"
