"""Command-line pipeline: solve -> gen -> train -> eval / bench / curves.

Built-in defaults reproduce the reference simulation setup; a JSON config
file overrides defaults, and explicit flags override both.  Exit codes:
0 success, 2 invalid configuration, 3 solver non-convergence, 4 missing
prerequisite artifact.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from . import evalbench, mlp, plots
from .channel import (
    ChannelDistribution,
    Dataset,
    DatasetFormatError,
    SolverConvergenceError,
    dataset_checksum,
    export_csv,
    generate_dataset,
    read_dataset,
    sample_ensemble,
    write_dataset,
)
from .mlp import ModelFormatError, TrainConfig
from .model import PolicyKind, SystemParams
from .solver import SolverOptions, solve_ee, solve_se_duals

EXIT_OK = 0
EXIT_BAD_CONFIG = 2
EXIT_NO_CONVERGENCE = 3
EXIT_MISSING_PREREQ = 4

DEFAULT_SWEEP = (0.01, 0.02, 0.03, 0.04, 0.05, 0.06)


@dataclass
class RunConfig:
    # link parameters (reference simulation values)
    p_p: float = 0.06
    noise_var: float = 0.01
    zeta: float = 0.2
    p_c: float = 0.05
    p_th: float = 0.1
    p_in: float = 0.06
    # fading distribution
    mean_ss: float = 1.0
    mean_sp: float = 0.5
    mean_ps: float = 0.5
    # solver
    step_size: float = 0.1
    dual_tol: float = 1e-3
    max_dual_iters: int = 20000
    dinkelbach_tol: float = 1e-6
    max_dinkelbach_iters: int = 50
    # training
    batch_size: int = 128
    learning_rate: float = 1e-2
    epochs: int = 40
    eval_every: int = 50
    lr_decay: float = 1.0
    normalize_inputs: bool = True
    log_inputs: bool = True
    hidden_layers: int = 3
    hidden_width: int = 200
    model_seed: int = 1
    # dataset sizes and sweep
    n_train: int = 100_000
    n_test: int = 1000
    p_in_sweep: list = field(default_factory=lambda: list(DEFAULT_SWEEP))
    # misc
    seed: int = 0
    out: str = "out"
    threads: int = 0  # 0 = library default

    def __post_init__(self):
        if list(self.p_in_sweep) != sorted(set(self.p_in_sweep)):
            raise ValueError("p_in_sweep must be strictly increasing")

    def system_params(self, p_in=None):
        return SystemParams(p_p=self.p_p, noise_var=self.noise_var,
                            zeta=self.zeta, p_c=self.p_c, p_th=self.p_th,
                            p_in=self.p_in if p_in is None else p_in)

    def distribution(self, seed=None):
        return ChannelDistribution(mean_ss=self.mean_ss, mean_sp=self.mean_sp,
                                   mean_ps=self.mean_ps,
                                   seed=self.seed if seed is None else seed)

    def solver_options(self):
        return SolverOptions(step_size=self.step_size,
                             max_dual_iters=self.max_dual_iters,
                             dual_tol=self.dual_tol,
                             dinkelbach_tol=self.dinkelbach_tol,
                             max_dinkelbach_iters=self.max_dinkelbach_iters)

    def train_config(self):
        return TrainConfig(batch_size=self.batch_size,
                           learning_rate=self.learning_rate,
                           epochs=self.epochs, shuffle_seed=self.seed,
                           eval_every=self.eval_every, lr_decay=self.lr_decay,
                           normalize_inputs=self.normalize_inputs,
                           log_inputs=self.log_inputs)

    def dims(self):
        return (3,) + (self.hidden_width,) * self.hidden_layers + (1,)

    def checksum(self):
        doc = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(doc.encode()).hexdigest()


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _kind(value) -> PolicyKind:
    try:
        return PolicyKind(value.lower())
    except ValueError:
        raise CliError(f"unknown policy kind {value!r} (expected se or ee)",
                       EXIT_BAD_CONFIG) from None


def build_config(args) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise CliError(f"config file not found: {path}", EXIT_BAD_CONFIG)
        try:
            loaded = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise CliError(f"config file is not valid JSON: {e}", EXIT_BAD_CONFIG)
        if not isinstance(loaded, dict):
            raise CliError("config file must hold a JSON object", EXIT_BAD_CONFIG)
        unknown = set(loaded) - set(RunConfig.__dataclass_fields__)
        if unknown:
            raise CliError(f"unknown config keys: {sorted(unknown)}", EXIT_BAD_CONFIG)
        values.update(loaded)
    for name in RunConfig.__dataclass_fields__:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    try:
        return RunConfig(**values)
    except (TypeError, ValueError) as e:
        raise CliError(f"invalid configuration: {e}", EXIT_BAD_CONFIG)


def _outdir(cfg) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _report_to_json(report, cfg):
    doc = asdict(report)
    doc["duals"] = asdict(report.duals)
    doc["config_checksum"] = cfg.checksum()
    return doc


def cmd_solve(args) -> int:
    cfg = build_config(args)
    kind = _kind(args.kind)
    params = cfg.system_params()
    ensemble = sample_ensemble(cfg.distribution(), args.n or cfg.n_train)
    solve = solve_se_duals if kind is PolicyKind.SE else solve_ee
    report = solve(ensemble, params, cfg.solver_options())
    print(f"kind={kind.value} converged={report.converged} "
          f"dual_iters={report.dual_iterations} "
          f"dinkelbach_iters={report.dinkelbach_iterations}")
    print(f"tau={report.duals.tau:.6g} mu={report.duals.mu:.6g} "
          f"eta={report.duals.eta:.6g}")
    print(f"ergodic_rate={report.ergodic_rate:.6g} bits/s/Hz  "
          f"ee={report.ee:.6g} bits/Hz/Joule")
    print(f"avg_power={report.avg_power:.6g} W (budget {params.p_th} W)  "
          f"avg_interference={report.avg_interference:.6g} W "
          f"(budget {params.p_in} W)")
    out = _outdir(cfg)
    with open(out / f"solve_{kind.value}.json", "w") as f:
        json.dump(_report_to_json(report, cfg), f, indent=2)
    if not report.converged:
        print("error: solver did not converge within iteration caps",
              file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def _dataset_path(out: Path, kind: PolicyKind, p_in: float) -> Path:
    return out / f"dataset_{kind.value}_pin{p_in:g}.crds"


def _model_path(out: Path, kind: PolicyKind, p_in: float) -> Path:
    return out / f"model_{kind.value}_pin{p_in:g}.json"


def cmd_gen(args) -> int:
    cfg = build_config(args)
    kind = _kind(args.kind)
    out = _outdir(cfg)
    try:
        ds = generate_dataset(cfg.distribution(), args.n or cfg.n_train,
                              cfg.system_params(), kind, cfg.solver_options())
    except SolverConvergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    path = _dataset_path(out, kind, cfg.p_in)
    write_dataset(ds, path)
    print(f"wrote {path} ({len(ds)} rows, duals tau={ds.duals.tau:.6g} "
          f"mu={ds.duals.mu:.6g} eta={ds.duals.eta:.6g})")
    if args.format == "csv":
        csv_path = path.with_suffix(".csv")
        export_csv(ds, csv_path)
        print(f"wrote {csv_path}")
    return EXIT_OK


def _load_dataset(path) -> Dataset:
    p = Path(path)
    if not p.exists():
        raise CliError(f"dataset file not found: {p} (run `gen` first)",
                       EXIT_MISSING_PREREQ)
    try:
        return read_dataset(p)
    except DatasetFormatError as e:
        raise CliError(f"unreadable dataset {p}: {e}", EXIT_BAD_CONFIG)


def cmd_train(args) -> int:
    cfg = build_config(args)
    ds = _load_dataset(args.dataset)
    holdout = None
    if args.holdout_dataset:
        hds = _load_dataset(args.holdout_dataset)
        holdout = (hds.inputs, hds.targets)
    model = mlp.init_model(cfg.dims(), cfg.model_seed)
    model, history = mlp.train(model, ds, cfg.train_config(), holdout=holdout)
    model.training_meta = {
        "seed": cfg.model_seed,
        "cfg": asdict(cfg.train_config()),
        "dataset_checksum": dataset_checksum(ds),
        "params": asdict(ds.params),
        "kind": ds.kind.value,
        "config_checksum": cfg.checksum(),
    }
    out = _outdir(cfg)
    model_path = Path(args.model_out) if args.model_out else \
        _model_path(out, ds.kind, ds.params.p_in)
    mlp.save_model(model, model_path)
    history_path = model_path.with_name(model_path.stem + "_history.csv")
    evalbench.write_curves(evalbench.training_curves(history), history_path)
    print(f"wrote {model_path} (final batch MSE {history.batch_mse[-1]:.3e}, "
          f"checksum {history.final_checksum[:12]})")
    print(f"wrote {history_path}")
    return EXIT_OK


def _load_models(paths):
    models = {}
    for p in paths:
        path = Path(p)
        if not path.exists():
            raise CliError(f"model file not found: {path} (run `train` first)",
                           EXIT_MISSING_PREREQ)
        try:
            m = mlp.load_model(path)
        except ModelFormatError as e:
            raise CliError(f"unreadable model {path}: {e}", EXIT_BAD_CONFIG)
        meta = m.training_meta
        if "params" not in meta:
            raise CliError(f"model {path} lacks training metadata",
                           EXIT_BAD_CONFIG)
        models[meta["params"]["p_in"]] = m
    return models


def cmd_eval(args) -> int:
    cfg = build_config(args)
    models = _load_models(args.model)
    kind = _kind(args.kind)
    test_seed = cfg.seed + 1_000_003

    def make_ensemble(params):
        return sample_ensemble(cfg.distribution(seed=test_seed), cfg.n_test)

    report = evalbench.sweep(
        models, kind, cfg.system_params(), sorted(models),
        make_ensemble, opts=cfg.solver_options(),
        repetitions=args.repetitions,
        seeds={"train": cfg.seed, "test": test_seed},
        config={**asdict(cfg), "config_checksum": cfg.checksum()})
    out = _outdir(cfg)
    csv_path = out / f"eval_{kind.value}.csv"
    evalbench.write_report(report, csv_path, csv_path.with_suffix(".json"))
    plots.render_eval_figure(report, kind, out / f"eval_{kind.value}.png")
    plots.render_timing_figure(report, out / f"eval_{kind.value}_timing.png")
    for r in report.rows:
        print(f"p_in={r.p_in:g}: conv={r.metric_conventional:.4f} "
              f"dnn={r.metric_dnn:.4f} ratio={r.quality_ratio:.4f} "
              f"time_ratio={r.time_ratio:.5f}"
              + ("  [constraint flag]" if r.constraint_flag else ""))
    print(f"wrote {csv_path}, sidecar, and figures")
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = build_config(args)
    models = _load_models(args.model)
    kind = _kind(args.kind)
    ensemble = sample_ensemble(cfg.distribution(seed=cfg.seed + 1_000_003),
                               cfg.n_test)
    out = _outdir(cfg)
    rows = []
    for p_in in sorted(models):
        params = replace(cfg.system_params(), p_in=p_in)
        t_conv, t_dnn = evalbench.time_policies(
            models[p_in], kind, params, ensemble,
            repetitions=args.repetitions, opts=cfg.solver_options())
        rows.append({"p_in": p_in, "time_conv_s": t_conv, "time_dnn_s": t_dnn,
                     "time_ratio": t_dnn / t_conv})
        print(f"p_in={p_in:g}: conventional {t_conv:.4f}s  "
              f"dnn {t_dnn:.6f}s  ratio {t_dnn / t_conv:.5f}")
    csv_path = out / f"bench_{kind.value}.csv"
    with open(csv_path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=["p_in", "time_conv_s", "time_dnn_s",
                                          "time_ratio"])
        w.writeheader()
        w.writerows(rows)
    plots.render_bench_figure(rows, out / f"bench_{kind.value}.png")
    print(f"wrote {csv_path} and figure")
    return EXIT_OK


def cmd_curves(args) -> int:
    cfg = build_config(args)
    path = Path(args.history)
    if not path.exists():
        raise CliError(f"history file not found: {path} (run `train` first)",
                       EXIT_MISSING_PREREQ)
    history = mlp.TrainHistory()
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            history.steps.append(int(row["step"]))
            history.pred_sample.append(float(row["pred"]))
            history.target_sample.append(float(row["target"]))
            history.batch_mse.append(float(row["batch_mse"]))
            history.holdout_mse.append(float(row["holdout_mse"]))
    if not history.steps:
        raise CliError(f"history file {path} is empty", EXIT_BAD_CONFIG)
    rows = evalbench.training_curves(history, args.sample_every)
    out = _outdir(cfg)
    csv_path = out / "curves.csv"
    evalbench.write_curves(rows, csv_path)
    plots.render_training_figures(rows, out / "curves_mse.png",
                                  out / "curves_pred.png")
    print(f"wrote {csv_path} and figures ({len(rows)} rows)")
    return EXIT_OK


def _add_config_flags(p):
    g = p.add_argument_group("configuration (flags > JSON config > defaults)")
    g.add_argument("--config", metavar="PATH.json", help="JSON config file")
    for name, kind_ in [
            ("p-th", float), ("p-in", float), ("p-p", float),
            ("noise-var", float), ("zeta", float), ("p-c", float),
            ("mean-ss", float), ("mean-sp", float), ("mean-ps", float),
            ("step-size", float), ("dual-tol", float),
            ("max-dual-iters", int), ("dinkelbach-tol", float),
            ("max-dinkelbach-iters", int),
            ("batch-size", int), ("learning-rate", float), ("epochs", int),
            ("eval-every", int), ("lr-decay", float),
            ("hidden-layers", int), ("hidden-width", int), ("model-seed", int),
            ("n-train", int), ("n-test", int),
            ("seed", int), ("threads", int)]:
        g.add_argument(f"--{name}", type=kind_, default=None)
    g.add_argument("--no-normalize", dest="normalize_inputs",
                   action="store_const", const=False, default=None,
                   help="disable input standardization")
    g.add_argument("--no-log-inputs", dest="log_inputs",
                   action="store_const", const=False, default=None,
                   help="standardize raw gains instead of log-gains")
    g.add_argument("--out", default=None, help="output directory")


def make_parser():
    parser = argparse.ArgumentParser(
        prog="crpower",
        description="Underlay cognitive-radio power policies: dual/Dinkelbach "
                    "solvers, a neural-network imitator, and benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="converge the duals on a seeded ensemble")
    p.add_argument("--kind", required=True, choices=["se", "ee"])
    p.add_argument("--n", type=int, default=None, help="ensemble size")
    _add_config_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("gen", help="generate an oracle-labeled dataset")
    p.add_argument("--kind", required=True, choices=["se", "ee"])
    p.add_argument("--n", type=int, default=None, help="dataset rows")
    p.add_argument("--format", choices=["bin", "csv"], default="bin",
                   help="csv additionally writes a CSV export")
    _add_config_flags(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train the network on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--holdout-dataset", default=None)
    p.add_argument("--model-out", default=None)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="compare network vs conventional solver")
    p.add_argument("--kind", required=True, choices=["se", "ee"])
    p.add_argument("--model", required=True, action="append",
                   help="trained model file (repeatable, one per p_in)")
    p.add_argument("--repetitions", type=int, default=5)
    _add_config_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="wall-clock timing comparison")
    p.add_argument("--kind", required=True, choices=["se", "ee"])
    p.add_argument("--model", required=True, action="append")
    p.add_argument("--repetitions", type=int, default=5)
    _add_config_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("curves", help="subsample training diagnostics")
    p.add_argument("--history", required=True, help="history CSV from `train`")
    p.add_argument("--sample-every", type=int, default=1)
    _add_config_flags(p)
    p.set_defaults(func=cmd_curves)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except SolverConvergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BAD_CONFIG


if __name__ == "__main__":
    sys.exit(main())
