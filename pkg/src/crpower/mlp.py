"""From-scratch feedforward network and mini-batch gradient-descent trainer.

Architecture is 3 inputs -> ReLU hidden layers -> 1 ReLU output, so predicted
powers are nonnegative by construction.  Training minimizes
J = 1/(2M) * sum (prediction - target)^2 per batch with plain gradient steps.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np

MODEL_FORMAT_VERSION = 1
DEFAULT_DIMS = (3, 200, 200, 200, 1)


class ModelFormatError(ValueError):
    """Malformed or shape-inconsistent model file."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass
class MlpModel:
    dims: tuple
    weights: list            # per layer, shape (out, in)
    biases: list             # per layer, shape (out,)
    input_transform: tuple | None = None  # (scale[3], shift[3]): y = scale*x + shift
    input_log: bool = False  # apply elementwise log before the affine transform
    training_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        if len(self.weights) != len(self.dims) - 1 or len(self.biases) != len(self.dims) - 1:
            raise ValueError("layer count inconsistent with dims")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.dims[i + 1], self.dims[i]):
                raise ValueError(f"weight {i} shape {w.shape} != "
                                 f"({self.dims[i + 1]}, {self.dims[i]})")
            if b.shape != (self.dims[i + 1],):
                raise ValueError(f"bias {i} shape {b.shape} != ({self.dims[i + 1]},)")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError("parameters must be finite")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    learning_rate: float = 1e-2
    epochs: int = 40
    shuffle_seed: int = 0
    eval_every: int = 50
    lr_decay: float = 1.0       # per-epoch multiplier on the learning rate
    normalize_inputs: bool = True
    log_inputs: bool = True     # standardize log-gains instead of raw gains
    normalize_targets: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if not (0 < self.lr_decay <= 1):
            raise ValueError("lr_decay must be in (0, 1]")


@dataclass
class TrainHistory:
    steps: list = field(default_factory=list)
    batch_mse: list = field(default_factory=list)
    holdout_mse: list = field(default_factory=list)   # nan where not evaluated
    pred_sample: list = field(default_factory=list)   # first batch example
    target_sample: list = field(default_factory=list)
    final_checksum: str = ""


def init_model(dims, seed) -> MlpModel:
    """He-scaled normal weights (variance 2/fan_in), zero biases."""
    dims = tuple(int(d) for d in dims)
    if len(dims) < 2 or dims[0] != 3 or dims[-1] != 1 or any(d < 1 for d in dims):
        raise ValueError("dims must start with 3, end with 1, all >= 1")
    rng = np.random.Generator(np.random.Philox(seed))
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), (fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(dims=dims, weights=weights, biases=biases)


def _apply_transform(model, x):
    if model.input_log:
        # Channel gains are positive; the clamp only guards exact zeros.
        x = np.log(np.maximum(x, 1e-300))
    if model.input_transform is None:
        return x
    scale, shift = model.input_transform
    return x * scale + shift


def batch_forward(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Predicted powers for a (m, 3) batch; returns shape (m,)."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if not np.all(np.isfinite(x)):
        raise ValueError("inputs must be finite")
    a = _apply_transform(model, x)
    for w, b in zip(model.weights, model.biases):
        a = np.maximum(a @ w.T + b, 0.0)
    out = a[:, 0]
    return float(out[0]) if squeeze else out


def forward(model: MlpModel, x) -> float:
    """Predicted power for one 3-vector of gains."""
    return batch_forward(model, np.asarray(x, dtype=np.float64))


def batch_loss(model: MlpModel, inputs, targets) -> float:
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if inputs.shape[0] == 0:
        raise ValueError("batch must be non-empty")
    if inputs.shape[0] != targets.shape[0]:
        raise ValueError("inputs/targets length mismatch")
    diff = batch_forward(model, inputs) - targets
    return float(np.sum(diff * diff) / (2 * len(targets)))


def backward(model: MlpModel, inputs, targets):
    """Exact gradients of batch_loss; ReLU subgradient at 0 taken as 0."""
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if inputs.shape[0] == 0:
        raise ValueError("batch must be non-empty")
    if inputs.shape[0] != targets.shape[0]:
        raise ValueError("inputs/targets length mismatch")
    if not np.all(np.isfinite(inputs)):
        raise ValueError("inputs must be finite")
    m = inputs.shape[0]

    activations = [_apply_transform(model, inputs)]
    pre = []
    for w, b in zip(model.weights, model.biases):
        z = activations[-1] @ w.T + b
        pre.append(z)
        activations.append(np.maximum(z, 0.0))

    # dJ/dy with J = 1/(2m) sum (y - t)^2, gated through the output ReLU.
    delta = (activations[-1][:, 0] - targets)[:, None] / m
    delta = delta * (pre[-1] > 0)
    grads_w = [None] * len(model.weights)
    grads_b = [None] * len(model.biases)
    for layer in range(len(model.weights) - 1, -1, -1):
        grads_w[layer] = delta.T @ activations[layer]
        grads_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ model.weights[layer]) * (pre[layer - 1] > 0)
    return grads_w, grads_b


def sgd_step(model: MlpModel, grads, learning_rate) -> MlpModel:
    grads_w, grads_b = grads
    if len(grads_w) != len(model.weights) or len(grads_b) != len(model.biases):
        raise ValueError("gradient layer count mismatch")
    weights, biases = [], []
    for w, b, gw, gb in zip(model.weights, model.biases, grads_w, grads_b):
        if gw.shape != w.shape or gb.shape != b.shape:
            raise ValueError("gradient shape mismatch")
        weights.append(w - learning_rate * gw)
        biases.append(b - learning_rate * gb)
    return replace(model, weights=weights, biases=biases)


def fit_input_transform(inputs: np.ndarray):
    """Per-feature standardization: y = (x - mean) / std."""
    mean = inputs.mean(axis=0)
    std = inputs.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    scale = 1.0 / std
    return scale, -mean * scale


def model_checksum(model: MlpModel) -> str:
    h = hashlib.sha256()
    for w, b in zip(model.weights, model.biases):
        h.update(np.ascontiguousarray(w).tobytes())
        h.update(np.ascontiguousarray(b).tobytes())
    return h.hexdigest()


def train(model: MlpModel, dataset, cfg: TrainConfig = TrainConfig(),
          holdout=None):
    """Mini-batch gradient descent over the dataset.

    holdout, when given, is an (inputs, targets) pair whose MSE is recorded
    at every history point.  Deterministic for fixed model and shuffle seeds.

    Targets are standardized internally when normalize_targets is set: descent
    runs against targets / std(targets), and the scale is folded back into the
    final ReLU layer of the returned model (relu(z)*s == relu(z*s) for s > 0),
    so the saved model still predicts in watts.  This keeps the optimization
    well conditioned when typical powers are far from unit scale.  When the
    final-layer bias is untouched (all zero, as after init_model), it is warm
    started at the mean target so the output unit begins in its active region.
    All recorded history values (MSE, samples) are in physical units.
    """
    inputs = np.asarray(dataset.inputs, dtype=np.float64)
    targets = np.asarray(dataset.targets, dtype=np.float64)
    n = inputs.shape[0]
    if n == 0:
        raise ValueError("dataset must be non-empty")

    if cfg.normalize_inputs and model.input_transform is None:
        # Standardizing log-gains (default) linearizes the steep reciprocal
        # wall the optimal power shows near small interference gains, which
        # raw-gain inputs fit poorly under tight interference budgets.
        basis = np.log(np.maximum(inputs, 1e-300)) if cfg.log_inputs else inputs
        model = replace(model, input_log=cfg.log_inputs,
                        input_transform=fit_input_transform(basis))

    t_scale = float(targets.std()) if cfg.normalize_targets else 1.0
    if t_scale <= 0.0:
        t_scale = 1.0
    fresh = not np.any(model.biases[-1])
    if t_scale != 1.0:
        targets = targets / t_scale
        if not fresh:
            # Warm start in physical units: change the output layer's units so
            # training continues from the same function.  A fresh He init is
            # already the right scale for unit-variance targets and must not
            # be inflated by 1/std (that amplifies hidden-layer gradients and
            # kills the net), so it trains in normalized space directly.
            model = replace(model,
                            weights=[w.copy() for w in model.weights],
                            biases=[b.copy() for b in model.biases])
            model.weights[-1] /= t_scale
            model.biases[-1] /= t_scale
    if fresh:
        model = replace(model, biases=list(model.biases))
        model.biases[-1] = np.full_like(model.biases[-1], targets.mean())
    holdout_targets = None
    if holdout is not None:
        holdout_targets = np.asarray(holdout[1], dtype=np.float64) / t_scale

    rng = np.random.Generator(np.random.Philox(cfg.shuffle_seed))
    history = TrainHistory()
    lr = cfg.learning_rate
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            bx, bt = inputs[idx], targets[idx]
            grads = backward(model, bx, bt)
            model = sgd_step(model, grads, lr)
            step += 1
            if step % cfg.eval_every == 0:
                pred = batch_forward(model, bx)
                mse = float(np.mean((pred - bt) ** 2))
                if not np.isfinite(mse):
                    raise DivergenceError(
                        f"non-finite loss at step {step} (epoch {epoch})")
                history.steps.append(step)
                history.batch_mse.append(mse * t_scale * t_scale)
                history.pred_sample.append(float(pred[0]) * t_scale)
                history.target_sample.append(float(bt[0]) * t_scale)
                if holdout is not None:
                    hp = batch_forward(model, np.asarray(holdout[0]))
                    history.holdout_mse.append(
                        float(np.mean((hp - holdout_targets) ** 2))
                        * t_scale * t_scale)
                else:
                    history.holdout_mse.append(float("nan"))
        lr *= cfg.lr_decay
    if t_scale != 1.0:
        model = replace(model,
                        weights=list(model.weights), biases=list(model.biases))
        model.weights[-1] = model.weights[-1] * t_scale
        model.biases[-1] = model.biases[-1] * t_scale
    history.final_checksum = model_checksum(model)
    return model, history


def save_model(model: MlpModel, path):
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "dims": list(model.dims),
        "activation": "relu_all",
        "input_transform": None if model.input_transform is None else {
            "scale": [float(v) for v in model.input_transform[0]],
            "shift": [float(v) for v in model.input_transform[1]],
        },
        "input_log": model.input_log,
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "training_meta": model.training_meta,
    }
    with open(path, "w") as f:
        json.dump(doc, f)


def load_model(path) -> MlpModel:
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ModelFormatError(f"not valid JSON: {e}") from None
    if not isinstance(doc, dict) or doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ModelFormatError("missing or unsupported format_version")
    if doc.get("activation") != "relu_all":
        raise ModelFormatError(f"unsupported activation {doc.get('activation')!r}")
    try:
        dims = tuple(int(d) for d in doc["dims"])
        weights = [np.array(w, dtype=np.float64) for w in doc["weights"]]
        biases = [np.array(b, dtype=np.float64) for b in doc["biases"]]
        transform = None
        if doc.get("input_transform") is not None:
            t = doc["input_transform"]
            transform = (np.array(t["scale"], dtype=np.float64),
                         np.array(t["shift"], dtype=np.float64))
        model = MlpModel(dims=dims, weights=weights, biases=biases,
                         input_transform=transform,
                         input_log=bool(doc.get("input_log", False)),
                         training_meta=doc.get("training_meta", {}))
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFormatError(f"inconsistent model file: {e}") from None
    return model
