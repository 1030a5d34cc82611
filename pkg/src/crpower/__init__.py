"""Transmit-power policies for an underlay cognitive-radio link: closed-form
water-filling laws, dual/Dinkelbach solvers over fading ensembles, a small
feedforward-network imitator, and benchmarking of the imitation."""

from .channel import (
    ChannelDistribution,
    Dataset,
    DatasetFormatError,
    SolverConvergenceError,
    export_csv,
    generate_dataset,
    read_dataset,
    sample_ensemble,
    write_dataset,
)
from .evalbench import (
    EvalReport,
    EvalRow,
    evaluate_pair,
    sweep,
    time_policies,
    training_curves,
)
from .mlp import (
    MlpModel,
    ModelFormatError,
    TrainConfig,
    TrainHistory,
    backward,
    batch_loss,
    forward,
    init_model,
    load_model,
    save_model,
    sgd_step,
    train,
)
from .model import (
    ChannelRealization,
    DualState,
    PolicyKind,
    SystemParams,
    WaterLevelUnboundedError,
    instantaneous_rate,
    power_cost,
    power_ee,
    power_se,
)
from .solver import (
    GridSpec,
    PolicyMetrics,
    SolveReport,
    SolverOptions,
    brute_force_small,
    ergodic_metrics,
    estimate_constraints,
    solve_ee,
    solve_se_duals,
)

__version__ = "0.1.0"
