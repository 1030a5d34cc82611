"""Quality and wall-clock comparison of the trained network against the
conventional solver, plus training-diagnostic curve extraction.

Quality rows mirror the reference comparison tables: the conventional policy
is re-solved from scratch on the test ensemble (timing covers the full
subgradient/Dinkelbach solve), the network is a single batched forward pass.
"""

from __future__ import annotations

import csv
import json
import platform
import time
from dataclasses import asdict, dataclass, field
from statistics import median

import numpy as np

from . import mlp
from .model import DualState, PolicyKind, SystemParams
from .solver import (
    SolverOptions,
    _policy_metrics_arrays,
    ensemble_arrays,
    solve_ee,
    solve_se_duals,
)

REPORT_COLUMNS = ["p_in", "metric_conv", "metric_dnn", "quality_ratio",
                  "time_conv_s", "time_dnn_s", "time_ratio",
                  "avg_power_dnn", "avg_interference_dnn"]


@dataclass
class EvalRow:
    p_in: float
    metric_conventional: float
    metric_dnn: float
    quality_ratio: float
    time_conventional: float
    time_dnn: float
    time_ratio: float
    avg_power_dnn: float
    avg_interference_dnn: float
    metric_stderr: float = 0.0
    constraint_flag: bool = False


@dataclass
class EvalReport:
    rows: list
    environment: str = field(default_factory=lambda: platform.platform())
    seeds: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)


def _conventional_solve(kind, ensemble, params, opts):
    solve = solve_se_duals if kind is PolicyKind.SE else solve_ee
    return solve(ensemble, params, opts)


def _metric(kind, metrics):
    return metrics.ergodic_rate if kind is PolicyKind.SE else metrics.ee


def metric_stderr(kind: PolicyKind, p: np.ndarray, g_ss, g_sp, h_ps,
                  params: SystemParams) -> float:
    """Monte Carlo standard error of the ensemble metric under a policy."""
    from .model import rate_array
    rates = rate_array(p, g_ss, h_ps, params)
    n = len(rates)
    if kind is PolicyKind.SE:
        return float(np.std(rates) / np.sqrt(n))
    # Delta method for the ratio of two sample means.
    costs = params.zeta * p + params.p_c
    r, c = float(np.mean(rates)), float(np.mean(costs))
    var = np.var(rates / c - r / c ** 2 * costs)
    return float(np.sqrt(var / n))


def time_policies(model: mlp.MlpModel, kind: PolicyKind, params: SystemParams,
                  ensemble, repetitions: int = 5,
                  opts: SolverOptions = SolverOptions(), predict_fn=None):
    """Median wall-clock of the full conventional solve vs the network's
    batched forward pass, 1 warmup run each, monotonic clock."""
    if repetitions < 3:
        raise ValueError("repetitions must be >= 3")
    g_ss, g_sp, h_ps = ensemble_arrays(ensemble)
    x = np.column_stack([g_ss, g_sp, h_ps])
    if predict_fn is None:
        predict_fn = lambda xs: mlp.batch_forward(model, xs)

    def timed(fn):
        fn()  # warmup
        samples = []
        for _ in range(repetitions):
            # Repeat the body until the interval dwarfs the timer resolution.
            inner = 1
            while True:
                t0 = time.perf_counter()
                for _ in range(inner):
                    fn()
                dt = time.perf_counter() - t0
                if dt > 1e-4:
                    samples.append(dt / inner)
                    break
                inner *= 10
        return median(samples)

    t_conv = timed(lambda: _conventional_solve(kind, ensemble, params, opts))
    t_dnn = timed(lambda: predict_fn(x))
    return t_conv, t_dnn


def evaluate_pair(model: mlp.MlpModel, kind: PolicyKind, params: SystemParams,
                  ensemble, opts: SolverOptions = SolverOptions(),
                  repetitions: int = 5, predict_fn=None) -> EvalRow:
    """One comparison row: conventional solve vs network policy on the same
    test ensemble.  predict_fn overrides the network (testing hook)."""
    meta_params = model.training_meta.get("params") if model is not None else None
    if meta_params is not None:
        trained_for = SystemParams(**meta_params)
        if trained_for != params:
            raise ValueError(
                f"model was trained for {trained_for}, evaluated with {params}")
        meta_kind = model.training_meta.get("kind")
        if meta_kind is not None and PolicyKind(meta_kind) is not kind:
            raise ValueError(f"model was trained for kind {meta_kind!r}, not {kind}")

    g_ss, g_sp, h_ps = ensemble_arrays(ensemble)
    x = np.column_stack([g_ss, g_sp, h_ps])

    conv = _conventional_solve(kind, ensemble, params, opts)
    metric_conv = conv.ergodic_rate if kind is PolicyKind.SE else conv.ee

    p_dnn = predict_fn(x) if predict_fn is not None else mlp.batch_forward(model, x)
    p_dnn = np.asarray(p_dnn, dtype=np.float64)
    dnn = _policy_metrics_arrays(p_dnn, g_ss, g_sp, h_ps, params)
    metric_dnn = _metric(kind, dnn)

    t_conv, t_dnn = time_policies(model, kind, params, ensemble,
                                  repetitions=repetitions, opts=opts,
                                  predict_fn=predict_fn)

    stderr = metric_stderr(kind, p_dnn, g_ss, g_sp, h_ps, params)
    flag = (dnn.avg_power > 1.05 * params.p_th
            or dnn.avg_interference > 1.05 * params.p_in)
    return EvalRow(
        p_in=params.p_in,
        metric_conventional=metric_conv,
        metric_dnn=metric_dnn,
        quality_ratio=metric_dnn / metric_conv if metric_conv else 0.0,
        time_conventional=t_conv,
        time_dnn=t_dnn,
        time_ratio=t_dnn / t_conv if t_conv else float("inf"),
        avg_power_dnn=dnn.avg_power,
        avg_interference_dnn=dnn.avg_interference,
        metric_stderr=stderr,
        constraint_flag=flag,
    )


def sweep(models: dict, kind: PolicyKind, base_params: SystemParams,
          p_in_values, make_ensemble, opts: SolverOptions = SolverOptions(),
          repetitions: int = 5, seeds=None, config=None) -> EvalReport:
    """Evaluate one trained model per interference budget.

    models maps p_in -> MlpModel; make_ensemble(params) supplies the test
    ensemble for each sweep point.
    """
    from dataclasses import replace
    rows = []
    for p_in in sorted(p_in_values):
        if p_in not in models:
            raise KeyError(f"no trained model for p_in={p_in}")
        params = replace(base_params, p_in=p_in)
        ensemble = make_ensemble(params)
        rows.append(evaluate_pair(models[p_in], kind, params, ensemble,
                                  opts=opts, repetitions=repetitions))
    return EvalReport(rows=rows, seeds=seeds or {}, config=config or {})


def write_report(report: EvalReport, csv_path, sidecar_path=None):
    """CSV rows plus a JSON sidecar echoing config, seeds, and environment."""
    with open(csv_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(REPORT_COLUMNS)
        for r in report.rows:
            w.writerow([r.p_in, r.metric_conventional, r.metric_dnn,
                        r.quality_ratio, r.time_conventional, r.time_dnn,
                        r.time_ratio, r.avg_power_dnn, r.avg_interference_dnn])
    if sidecar_path is not None:
        doc = {
            "environment": report.environment,
            "seeds": report.seeds,
            "config": report.config,
            "rows": [asdict(r) for r in report.rows],
        }
        with open(sidecar_path, "w") as f:
            json.dump(doc, f, indent=2)


def training_curves(history: mlp.TrainHistory, sample_every: int = 1):
    """Subsampled (step, prediction, target, batch MSE, holdout MSE) rows."""
    if not history.steps:
        raise ValueError("history is empty")
    if sample_every < 1:
        raise ValueError("sample_every must be >= 1")
    rows = []
    for i in range(0, len(history.steps), sample_every):
        rows.append({
            "step": history.steps[i],
            "pred": history.pred_sample[i],
            "target": history.target_sample[i],
            "batch_mse": history.batch_mse[i],
            "holdout_mse": history.holdout_mse[i],
        })
    return rows


def write_curves(rows, path):
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=["step", "pred", "target",
                                          "batch_mse", "holdout_mse"])
        w.writeheader()
        w.writerows(rows)
