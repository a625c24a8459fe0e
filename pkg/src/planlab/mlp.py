"""Small feedforward regressor mapping encoded situations to cost-to-horizon.

Everything is plain numpy so gradients are exactly checkable and training is
bit-reproducible from a seed: rectifier hidden layers, identity output,
mini-batch gradient descent with classical momentum on squared error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels as K
from .errors import ConfigError, ModelParseError, TrainingDivergedError, ValidationError
from .heuristics import DpTable, EpsilonBand, h_dp
from .lattice import LatticeParams, Node, SituationTensor, build_occupancy_grid, render_situation

MODEL_FORMAT_VERSION = "mlp-1"

# Pre-encoding the whole dataset is faster than per-batch encoding but costs
# n_records * input_dim floats; above this many entries fall back to lazy
# per-batch encoding.
_PREENCODE_ENTRY_LIMIT = 40_000_000


def input_dim(params: LatticeParams) -> int:
    """Four one-hot cell channels plus four normalized state scalars."""
    return 4 * params.n_ks * params.n_kt * params.n_kl + 4


def encode(tensor: SituationTensor, params: LatticeParams) -> np.ndarray:
    """Flatten a situation tensor into the model input vector.

    Channel-major layout: one channel per non-free cell code over (ks, kt, l)
    cells, then the scalars kv, kt, ks, l scaled into [0, 1].
    """
    if tuple(tensor.dims) != params.dims:
        raise ConfigError(f"tensor dims {tuple(tensor.dims)} do not match params {params.dims}")
    out = np.empty(input_dim(params), dtype=np.float64)
    K.encode_into(tensor.cells, tensor.l, tensor.ks, tensor.kt, tensor.kv, params.n_kv, out)
    return out


@dataclass
class MlpModel:
    """Weights and layout of the regressor; output is a single real."""

    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "relu"
    init_seed: Optional[int] = None

    def copy(self) -> "MlpModel":
        return MlpModel(
            layer_dims=list(self.layer_dims),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            activation=self.activation,
            init_seed=self.init_seed,
        )


def init_model(layer_dims: list[int], seed: int) -> MlpModel:
    """He-scaled normal weights, zero biases, deterministic in the seed."""
    if len(layer_dims) < 2 or layer_dims[-1] != 1:
        raise ConfigError(f"layer_dims must end in 1 output unit, got {layer_dims}")
    if any(d < 1 for d in layer_dims):
        raise ConfigError(f"layer_dims must be positive, got {layer_dims}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out, dtype=np.float64))
    return MlpModel(layer_dims=list(layer_dims), weights=weights, biases=biases, init_seed=seed)


def _forward(model: MlpModel, X: np.ndarray):
    # Returns per-layer pre-activations and activations for backprop.
    zs, activations = [], [X]
    a = X
    last = len(model.weights) - 1
    for i, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ W.T + b
        zs.append(z)
        a = z if i == last else np.maximum(z, 0.0)
        activations.append(a)
    return zs, activations


def predict_batch(model: MlpModel, X: np.ndarray) -> np.ndarray:
    if X.ndim != 2 or X.shape[1] != model.layer_dims[0]:
        raise ConfigError(f"input shape {X.shape} does not match input dim {model.layer_dims[0]}")
    _, activations = _forward(model, X)
    return activations[-1][:, 0]


def predict(model: MlpModel, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.layer_dims[0]:
        raise ConfigError(f"input length {x.shape} does not match input dim {model.layer_dims[0]}")
    return float(predict_batch(model, x[None, :])[0])


def _backward(model: MlpModel, zs, activations, dpred):
    # dpred is dLoss/d(output column), shape (batch, 1).
    grads_w = [None] * len(model.weights)
    grads_b = [None] * len(model.biases)
    delta = dpred
    for i in range(len(model.weights) - 1, -1, -1):
        grads_w[i] = delta.T @ activations[i]
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i]) * (zs[i - 1] > 0.0)
    return grads_w, grads_b


def squared_error_gradients(model: MlpModel, x: np.ndarray, target: float):
    """Parameter gradients of (predict(x) - target)^2 for a single sample."""
    X = np.asarray(x, dtype=np.float64)[None, :]
    zs, activations = _forward(model, X)
    pred = activations[-1]
    dpred = 2.0 * (pred - target)
    return _backward(model, zs, activations, dpred)


def grad_check(model: MlpModel, x: np.ndarray, target: float, step: float = 1e-5) -> float:
    """Max relative error of analytic vs central finite-difference gradients.

    Relative error uses max(1, |analytic|, |numeric|) as denominator so tiny
    gradients compare absolutely.
    """
    x = np.asarray(x, dtype=np.float64)
    grads_w, grads_b = squared_error_gradients(model, x, target)
    worst = 0.0

    def loss() -> float:
        return (predict(model, x) - target) ** 2

    for arrays, grads in ((model.weights, grads_w), (model.biases, grads_b)):
        for arr, grad in zip(arrays, grads):
            flat = arr.reshape(-1)
            gflat = np.asarray(grad).reshape(-1)
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + step
                up = loss()
                flat[j] = orig - step
                down = loss()
                flat[j] = orig
                numeric = (up - down) / (2.0 * step)
                analytic = gflat[j]
                denom = max(1.0, abs(analytic), abs(numeric))
                worst = max(worst, abs(analytic - numeric) / denom)
    return worst


@dataclass(frozen=True, slots=True)
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 64
    epochs: int = 30
    seed: int = 0
    label_cap_mode: str = "epsilon-dp"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if not (0.0 <= self.momentum < 1.0):
            raise ValidationError("momentum must be in [0, 1)")
        if self.label_cap_mode not in ("epsilon-dp", "drop"):
            raise ValidationError(f"unknown label_cap_mode {self.label_cap_mode!r}")


class _RecordEncoder:
    """Encodes dataset records on demand, caching one grid per scenario."""

    def __init__(self, dataset, params: LatticeParams):
        self.params = params
        self.scenarios = {s.id: s for s in dataset.scenarios}
        self._grids = {}

    def grid(self, sid: str):
        g = self._grids.get(sid)
        if g is None:
            g = build_occupancy_grid(self.scenarios[sid])
            self._grids[sid] = g
        return g

    def encode_record(self, record, out: np.ndarray) -> None:
        node = Node(l=record.l, ks=record.ks, kt=record.kt, kv=record.kv)
        tensor = render_situation(node, self.grid(record.sid))
        K.encode_into(tensor.cells, node.l, node.ks, node.kt, node.kv, self.params.n_kv, out)


def _targets(dataset, table: DpTable, band: EpsilonBand, mode: str, params: LatticeParams):
    records, targets = [], []
    for r in dataset.records:
        if r.dead_end:
            if mode == "drop":
                continue
            node = Node(l=r.l, ks=r.ks, kt=r.kt, kv=r.kv)
            targets.append(band.epsilon * h_dp(node, table, params))
        else:
            targets.append(r.label)
        records.append(r)
    return records, np.asarray(targets, dtype=np.float64)


def _dataset_matrix(records, encoder: _RecordEncoder, dim: int) -> np.ndarray:
    X = np.empty((len(records), dim), dtype=np.float64)
    for i, r in enumerate(records):
        encoder.encode_record(r, X[i])
    return X


def _epoch_mse(model, records, targets, encoder, X, batch_size) -> float:
    if len(records) == 0:
        return float("nan")
    total = 0.0
    dim = model.layer_dims[0]
    scratch = np.empty((batch_size, dim), dtype=np.float64)
    for lo in range(0, len(records), batch_size):
        hi = min(lo + batch_size, len(records))
        if X is not None:
            batch = X[lo:hi]
        else:
            batch = scratch[: hi - lo]
            for i in range(lo, hi):
                encoder.encode_record(records[i], batch[i - lo])
        pred = predict_batch(model, batch)
        diff = pred - targets[lo:hi]
        total += float(diff @ diff)
    return total / len(records)


def train(
    model: MlpModel,
    train_set,
    val_set,
    cfg: TrainConfig,
    table: DpTable,
    band: EpsilonBand,
) -> tuple[MlpModel, list[dict]]:
    """Momentum SGD on mean squared error; returns a trained copy and the log.

    Finite labels are regression targets as-is; dead-end records map to the
    clamp ceiling eps * h_dp of their node (or are dropped, per
    cfg.label_cap_mode). Deterministic in cfg.seed.
    """
    params = table.params
    for s in list(train_set.scenarios) + list(val_set.scenarios):
        if s.params != params:
            raise ConfigError(f"scenario {s.id} params do not match the DP table")

    train_records, y_train = _targets(train_set, table, band, cfg.label_cap_mode, params)
    val_records, y_val = _targets(val_set, table, band, cfg.label_cap_mode, params)
    if not train_records or not val_records:
        raise ValidationError("empty dataset after label mapping")

    dim = input_dim(params)
    if model.layer_dims[0] != dim:
        raise ConfigError(f"model input size {model.layer_dims[0]} != encoding size {dim}")

    train_encoder = _RecordEncoder(train_set, params)
    val_encoder = _RecordEncoder(val_set, params)
    X_train = X_val = None
    if len(train_records) * dim <= _PREENCODE_ENTRY_LIMIT:
        X_train = _dataset_matrix(train_records, train_encoder, dim)
    if len(val_records) * dim <= _PREENCODE_ENTRY_LIMIT:
        X_val = _dataset_matrix(val_records, val_encoder, dim)

    model = model.copy()
    vel_w = [np.zeros_like(w) for w in model.weights]
    vel_b = [np.zeros_like(b) for b in model.biases]
    rng = np.random.default_rng(cfg.seed)
    n = len(train_records)
    scratch = np.empty((cfg.batch_size, dim), dtype=np.float64)
    log: list[dict] = []

    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            if X_train is not None:
                batch = X_train[idx]
            else:
                batch = scratch[: idx.size]
                for row, i in enumerate(idx):
                    train_encoder.encode_record(train_records[i], batch[row])
            yb = y_train[idx]
            zs, activations = _forward(model, batch)
            pred = activations[-1]
            diff = pred[:, 0] - yb
            loss = float(diff @ diff) / idx.size
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch offset {lo}; "
                    f"reduce the learning rate ({cfg.learning_rate})"
                )
            dpred = (2.0 / idx.size) * diff[:, None]
            grads_w, grads_b = _backward(model, zs, activations, dpred)
            for i in range(len(model.weights)):
                vel_w[i] = cfg.momentum * vel_w[i] - cfg.learning_rate * grads_w[i]
                vel_b[i] = cfg.momentum * vel_b[i] - cfg.learning_rate * grads_b[i]
                model.weights[i] += vel_w[i]
                model.biases[i] += vel_b[i]
        log.append(
            {
                "epoch": epoch,
                "train_mse": _epoch_mse(
                    model, train_records, y_train, train_encoder, X_train, cfg.batch_size
                ),
                "val_mse": _epoch_mse(
                    model, val_records, y_val, val_encoder, X_val, cfg.batch_size
                ),
            }
        )
    return model, log


def save_model(model: MlpModel, path) -> None:
    doc = {
        "version": MODEL_FORMAT_VERSION,
        "layer_dims": list(model.layer_dims),
        "activation": model.activation,
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f)
        f.write("\n")


def load_model(path) -> MlpModel:
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ModelParseError(
                f"{path}: malformed model file at line {e.lineno} column {e.colno}"
            ) from e
    version = doc.get("version")
    if version != MODEL_FORMAT_VERSION:
        raise ModelParseError(
            f"{path}: unsupported model version {version!r}, expected {MODEL_FORMAT_VERSION!r}"
        )
    layer_dims = [int(d) for d in doc["layer_dims"]]
    weights = [np.asarray(w, dtype=np.float64) for w in doc["weights"]]
    biases = [np.asarray(b, dtype=np.float64) for b in doc["biases"]]
    if len(weights) != len(layer_dims) - 1 or len(biases) != len(weights):
        raise ModelParseError(f"{path}: layer count does not match layer_dims")
    for i, (w, b) in enumerate(zip(weights, biases)):
        if w.shape != (layer_dims[i + 1], layer_dims[i]) or b.shape != (layer_dims[i + 1],):
            raise ModelParseError(f"{path}: weight shapes inconsistent at layer {i}")
    return MlpModel(
        layer_dims=layer_dims,
        weights=weights,
        biases=biases,
        activation=doc.get("activation", "relu"),
    )
