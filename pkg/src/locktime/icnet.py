"""Graph-convolutional runtime regressor with attention readouts.

Architecture: two graph convolutions H_l = ReLU(A · H_{l-1} · Θ_l) over a
per-gate feature matrix, a feature-level aggregation collapsing hidden
features to one scalar per gate, a gate-level aggregation collapsing
gates to one scalar z, and an exp or identity output head.

Aggregations come in attention / sum / mean variants.  Attention scoring
is built so the whole network is invariant to gate reordering:

* feature attention scores each hidden feature f by theta_feat[f] times
  the feature's mean over gates, softmaxes the scores into a_feat, and
  takes the weighted column sum s = H @ a_feat (one scalar per gate);
* gate attention scores gate i by the shared scalar theta_gate * s_i,
  softmaxes into a_gate, and returns z = a_gate . s.

The exp head is trained in the log domain (latent z regresses the
transformed label); the linear head regresses raw labels.  Gradients are
closed-form backpropagation, checked against finite differences in the
test suite.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .netlist import ONE_HOT_INDEX, GateType, GraphMatrix, graph_matrix
from .numerics import (
    AdamState,
    NonFiniteError,
    ParamStore,
    adam_step,
    check_finite,
    init_adam,
    init_params,
    params_from_doc,
    params_to_doc,
    relu_grad,
    softmax,
)
from .obfuscate import ObfuscationInstance

GRAPH_REPRS = ("adjacency", "laplacian")
AGG_MODES = ("attention", "sum", "mean")
OUTPUT_HEADS = ("exp", "linear")
FEATURE_SETS = ("location_only", "all_features")
TARGET_TRANSFORMS = ("log1p", "log")

CHECKPOINT_FORMAT = "icnet-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    graph_repr: str = "adjacency"
    self_loops: bool = True
    directed: bool = False
    conv_layers: int = 2
    hidden_dims: tuple = (32, 16)
    feat_agg: str = "attention"
    gate_agg: str = "attention"
    output_head: str = "exp"
    feature_set: str = "all_features"
    init_scheme: str = "uniform_glorot"
    target_transform: str = "log1p"  # exp-head label transform
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 500
    convergence_tol: float = 1e-5  # relative train-loss change over 10 epochs
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))
        if len(self.hidden_dims) != self.conv_layers:
            raise ValueError(f"hidden_dims length {len(self.hidden_dims)} != "
                             f"conv_layers {self.conv_layers}")
        for name, value, options in [
            ("graph_repr", self.graph_repr, GRAPH_REPRS),
            ("feat_agg", self.feat_agg, AGG_MODES),
            ("gate_agg", self.gate_agg, AGG_MODES),
            ("output_head", self.output_head, OUTPUT_HEADS),
            ("feature_set", self.feature_set, FEATURE_SETS),
            ("target_transform", self.target_transform, TARGET_TRANSFORMS),
        ]:
            if value not in options:
                raise ValueError(f"{name} must be one of {options}, got {value!r}")

    @property
    def feature_dim(self) -> int:
        return 1 if self.feature_set == "location_only" else 1 + len(ONE_HOT_INDEX)

    def to_dict(self) -> dict:
        return {
            "graph_repr": self.graph_repr, "self_loops": self.self_loops,
            "directed": self.directed, "conv_layers": self.conv_layers,
            "hidden_dims": list(self.hidden_dims), "feat_agg": self.feat_agg,
            "gate_agg": self.gate_agg, "output_head": self.output_head,
            "feature_set": self.feature_set, "init_scheme": self.init_scheme,
            "target_transform": self.target_transform,
            "learning_rate": self.learning_rate, "batch_size": self.batch_size,
            "max_epochs": self.max_epochs, "convergence_tol": self.convergence_tol,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelConfig":
        doc = dict(doc)
        doc["hidden_dims"] = tuple(doc["hidden_dims"])
        return cls(**doc)


def baseline_gcn_config(cfg: ModelConfig) -> ModelConfig:
    """The Laplacian-GCN-mean reference: same capacity, no attention."""
    return replace(cfg, graph_repr="laplacian", feat_agg="mean", gate_agg="mean")


@dataclass(frozen=True)
class FeatureMatrix:
    data: np.ndarray  # n x F; column 0 = mask, 1..10 = one-hot type


@dataclass
class Prediction:
    yhat: float
    z: float
    a_feat: np.ndarray | None
    a_gate: np.ndarray | None
    wall_seconds: float = 0.0


@dataclass
class Model:
    config: ModelConfig
    params: ParamStore


@dataclass
class GraphSample:
    """One training example: structure matrix, features, raw label."""

    a: np.ndarray
    x: np.ndarray
    label: float
    instance_id: str = ""
    censored: bool = False

    @property
    def mask_total(self) -> float:
        return float(self.x[:, 0].sum())


def new_model(config: ModelConfig) -> Model:
    params = init_params(config.feature_dim, config.hidden_dims,
                         config.init_scheme, config.seed)
    return Model(config, params)


def build_graph_input(inst: ObfuscationInstance,
                      config: ModelConfig) -> tuple[GraphMatrix, FeatureMatrix]:
    gm = graph_matrix(inst.obfuscated, kind=config.graph_repr,
                      directed=config.directed, self_loops=config.self_loops)
    n = inst.obfuscated.n
    mask = inst.mask_array()
    if config.feature_set == "location_only":
        x = mask[:, None].copy()
    else:
        x = np.zeros((n, config.feature_dim), dtype=np.float64)
        x[:, 0] = mask
        for g in inst.obfuscated.gates:
            x[g.id, 1 + ONE_HOT_INDEX[g.type]] = 1.0
    return gm, FeatureMatrix(x)


def sample_from_instance(inst: ObfuscationInstance, config: ModelConfig,
                         label: float, instance_id: str = "",
                         censored: bool = False) -> GraphSample:
    gm, fm = build_graph_input(inst, config)
    return GraphSample(gm.data, fm.data, float(label), instance_id, censored)


# --- aggregation primitives ---

def attention_aggregate(mat: np.ndarray, theta: np.ndarray, axis: int):
    """Collapse one axis of ``mat`` by softmax attention; returns (out, att).

    axis=0 treats rows as slices: logits_i = theta . mat[i, :], output is
    the attention-weighted row sum (length ncols).  axis=1 treats columns
    as slices: logits_f = theta[f] * mean(mat[:, f]) — per-column weight
    times the column's gate-mean, which keeps the scoring independent of
    the gate count — output is mat @ att (length nrows).
    """
    mat = np.asarray(mat, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64).ravel()
    if mat.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {mat.shape}")
    if theta.shape[0] != mat.shape[1]:
        raise ValueError(f"theta length {theta.shape[0]} != slice width {mat.shape[1]}")
    if axis == 0:
        att = softmax(mat @ theta)
        return att @ mat, att
    if axis == 1:
        att = softmax(theta * mat.mean(axis=0))
        return mat @ att, att
    raise ValueError(f"axis must be 0 or 1, got {axis}")


@dataclass
class _Cache:
    """Intermediates of one forward pass, consumed by backprop."""

    ms: list  # M_l = A @ P_{l-1}
    zs: list  # Z_l = M_l @ theta_l
    ps: list  # P_0 = X, P_l = relu(Z_l)
    mu: np.ndarray | None
    a_feat: np.ndarray | None
    s: np.ndarray
    a_gate: np.ndarray | None
    z: float


def _forward(model: Model, a: np.ndarray, x: np.ndarray) -> _Cache:
    cfg = model.config
    p = model.params
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"structure matrix must be square, got {a.shape}")
    if x.shape != (n, cfg.feature_dim):
        raise ValueError(f"feature matrix must be {(n, cfg.feature_dim)} "
                         f"for feature_set={cfg.feature_set!r}, got {x.shape}")
    ms, zs, ps = [], [], [np.asarray(x, dtype=np.float64)]
    # non-finite values are reported via NonFiniteError, not numpy warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for l in range(cfg.conv_layers):
            m = a @ ps[-1]
            z = m @ p[f"conv{l}"]
            check_finite(f"conv{l} pre-activation", z)
            ms.append(m)
            zs.append(z)
            ps.append(np.maximum(z, 0.0))
    h = ps[-1]

    mu = a_feat = None
    if cfg.feat_agg == "attention":
        mu = h.mean(axis=0)
        a_feat = softmax(p["feat"] * mu)
        s = h @ a_feat
    elif cfg.feat_agg == "sum":
        s = h.sum(axis=1)
    else:
        s = h.mean(axis=1)
    check_finite("feature aggregation", s)

    a_gate = None
    if cfg.gate_agg == "attention":
        a_gate = softmax(p["gate"][0] * s)
        z_out = float(a_gate @ s)
    elif cfg.gate_agg == "sum":
        z_out = float(s.sum())
    else:
        z_out = float(s.mean())
    check_finite("gate aggregation", np.asarray([z_out]))
    return _Cache(ms, zs, ps, mu, a_feat, s, a_gate, z_out)


def forward(model: Model, a, x) -> Prediction:
    a = np.asarray(a.data if isinstance(a, GraphMatrix) else a, dtype=np.float64)
    x = np.asarray(x.data if isinstance(x, FeatureMatrix) else x, dtype=np.float64)
    t0 = time.perf_counter()
    cache = _forward(model, a, x)
    if model.config.output_head == "exp":
        with np.errstate(over="ignore"):
            yhat = float(np.exp(cache.z))
        check_finite("output head", np.asarray([yhat]))
    else:
        yhat = cache.z
    return Prediction(yhat, cache.z, cache.a_feat, cache.a_gate,
                      time.perf_counter() - t0)


def predict(model: Model, inst: ObfuscationInstance) -> Prediction:
    gm, fm = build_graph_input(inst, model.config)
    return forward(model, gm, fm)


def target_value(config: ModelConfig, label: float) -> float:
    """The quantity the latent z regresses for a raw label."""
    if config.output_head == "linear":
        return float(label)
    if config.target_transform == "log1p":
        return float(np.log1p(label))
    if label <= 0:
        raise ValueError("target_transform='log' requires positive labels; "
                         "use 'log1p' for labels that can be zero")
    return float(np.log(label))


def predicted_label(model: Model, pred: Prediction) -> float:
    """Inverse-transform the latent back to the raw label scale."""
    if model.config.output_head == "linear":
        return pred.z
    if model.config.target_transform == "log1p":
        return float(np.expm1(pred.z))
    return float(np.exp(pred.z))


def _backward(model: Model, a: np.ndarray, cache: _Cache, dz: float) -> ParamStore:
    """Closed-form gradients of dz * z w.r.t. every parameter."""
    cfg = model.config
    p = model.params
    n = a.shape[0]
    h = cache.ps[-1]
    s, z = cache.s, cache.z
    grads = {k: np.zeros_like(v) for k, v in p.arrays.items()}

    if cfg.gate_agg == "attention":
        b = cache.a_gate
        theta_g = p["gate"][0]
        grads["gate"][0] = dz * float(b @ (s * s) - z * z)
        ds = dz * (b + theta_g * b * (s - z))
    elif cfg.gate_agg == "sum":
        ds = np.full(n, dz)
    else:
        ds = np.full(n, dz / n)

    hw = h.shape[1]
    if cfg.feat_agg == "attention":
        a_f = cache.a_feat
        da = h.T @ ds
        de = a_f * (da - float(a_f @ da))
        grads["feat"][:] = cache.mu * de
        dmu = p["feat"] * de
        dh = np.outer(ds, a_f) + dmu[None, :] / n
    elif cfg.feat_agg == "sum":
        dh = np.repeat(ds[:, None], hw, axis=1)
    else:
        dh = np.repeat(ds[:, None], hw, axis=1) / hw

    dp = dh
    for l in range(cfg.conv_layers - 1, -1, -1):
        dzl = relu_grad(cache.zs[l], dp)
        grads[f"conv{l}"][:] = cache.ms[l].T @ dzl
        dm = dzl @ p[f"conv{l}"].T
        dp = a.T @ dm
    return ParamStore(grads)


def loss_and_grads(model: Model, samples: list) -> tuple[float, ParamStore]:
    """Batch MSE on the head's training scale plus exact parameter grads.

    exp head: residual z - target_transform(label); linear head:
    residual z - label.  MSE is the mean of squared residuals.
    """
    if not samples:
        raise ValueError("empty batch")
    total = model.params.zeros_like()
    sq = 0.0
    inv_b = 1.0 / len(samples)
    for smp in samples:
        cache = _forward(model, np.asarray(smp.a, dtype=np.float64),
                         np.asarray(smp.x, dtype=np.float64))
        r = cache.z - target_value(model.config, smp.label)
        sq += r * r
        g = _backward(model, np.asarray(smp.a, dtype=np.float64), cache,
                      2.0 * r * inv_b)
        for k in total.arrays:
            total.arrays[k] += g.arrays[k]
    mse = sq * inv_b
    if not np.isfinite(mse):
        raise NonFiniteError("batch loss")
    return mse, total


def batch_mse(model: Model, samples: list) -> float:
    sq = 0.0
    for smp in samples:
        cache = _forward(model, np.asarray(smp.a, dtype=np.float64),
                         np.asarray(smp.x, dtype=np.float64))
        r = cache.z - target_value(model.config, smp.label)
        sq += r * r
    return sq / len(samples)


@dataclass
class TrainResult:
    model: Model
    log: list  # dicts: epoch, train_mse, val_mse, wall_seconds
    train_indices: tuple
    test_indices: tuple
    epochs_run: int = 0

    def log_csv(self) -> str:
        lines = ["epoch,train_mse,val_mse,wall_seconds"]
        for row in self.log:
            lines.append(f"{row['epoch']},{row['train_mse']:.10g},"
                         f"{row['val_mse']:.10g},{row['wall_seconds']:.6f}")
        return "\n".join(lines) + "\n"


def split_indices(n: int, seed: int, test_fraction: float = 0.2):
    """Seeded disjoint-and-exhaustive train/test split."""
    if not 0.0 <= test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in [0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_test = int(round(n * test_fraction))
    if test_fraction > 0 and n > 1:
        n_test = max(1, n_test)
    n_test = min(n_test, n - 1) if n > 0 else 0
    test = tuple(sorted(int(i) for i in order[:n_test]))
    train = tuple(sorted(int(i) for i in order[n_test:]))
    return train, test


def train(dataset: list, config: ModelConfig, include_censored: bool = False,
          test_fraction: float = 0.2) -> TrainResult:
    """Alg.-style loop: split, shuffle, batch, ADAM, stop on convergence.

    Stopping uses the train loss only; the held-out split's mse is logged
    per epoch as val_mse for reporting.
    """
    usable = [s for s in dataset if include_censored or not s.censored]
    if not usable:
        raise ValueError("dataset is empty (or fully censored)")
    train_idx, test_idx = split_indices(len(usable), config.seed, test_fraction)
    train_set = [usable[i] for i in train_idx]
    test_set = [usable[i] for i in test_idx]
    if len(train_set) < 2:
        raise ValueError(f"need at least 2 training samples, got {len(train_set)}")

    model = new_model(config)
    state = init_adam(model.params, lr=config.learning_rate)
    shuffle_rng = np.random.default_rng(config.seed + 1)
    log = []
    history: list[float] = []
    t0 = time.perf_counter()
    epochs = 0
    for epoch in range(config.max_epochs):
        epochs = epoch + 1
        order = shuffle_rng.permutation(len(train_set))
        for lo in range(0, len(order), config.batch_size):
            batch = [train_set[i] for i in order[lo:lo + config.batch_size]]
            _, grads = loss_and_grads(model, batch)
            new_params, state = adam_step(model.params, grads, state)
            model = Model(model.config, new_params)
        train_mse = batch_mse(model, train_set)
        val_mse = batch_mse(model, test_set) if test_set else float("nan")
        log.append({"epoch": epoch, "train_mse": train_mse, "val_mse": val_mse,
                    "wall_seconds": time.perf_counter() - t0})
        history.append(train_mse)
        if len(history) > 10:
            prev = history[-11]
            if abs(prev - train_mse) / max(prev, 1e-12) < config.convergence_tol:
                break
    return TrainResult(model, log, train_idx, test_idx, epochs)


# --- flat baselines ---

def baseline_aggregate_features(a, x, mode: str = "sum") -> np.ndarray:
    """Collapse the gate axis of (A, X) into one flat vector."""
    a = np.asarray(a.data if isinstance(a, GraphMatrix) else a, dtype=np.float64)
    x = np.asarray(x.data if isinstance(x, FeatureMatrix) else x, dtype=np.float64)
    if mode == "sum":
        return np.concatenate([a.sum(axis=0), x.sum(axis=0)])
    if mode == "mean":
        return np.concatenate([a.mean(axis=0), x.mean(axis=0)])
    raise ValueError(f"mode must be 'sum' or 'mean', got {mode!r}")


def fit_linear(features: np.ndarray, labels: np.ndarray,
               ridge_lambda: float = 0.0) -> np.ndarray:
    """Least squares / ridge with an unpenalized intercept (last weight).

    ridge_lambda = 0 uses the minimum-norm solution, so rank-deficient
    systems are fine.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64).ravel()
    if x.ndim != 2 or x.shape[0] != y.shape[0] or x.shape[0] < 1:
        raise ValueError(f"bad shapes: features {x.shape}, labels {y.shape}")
    if ridge_lambda < 0:
        raise ValueError("ridge_lambda must be >= 0")
    xb = np.hstack([x, np.ones((x.shape[0], 1))])
    if ridge_lambda == 0.0:
        w, *_ = np.linalg.lstsq(xb, y, rcond=None)
        return w
    reg = ridge_lambda * np.eye(xb.shape[1])
    reg[-1, -1] = 0.0  # intercept unpenalized
    return np.linalg.solve(xb.T @ xb + reg, xb.T @ y)


def linear_predict(weights: np.ndarray, features: np.ndarray) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    xb = np.hstack([x, np.ones((x.shape[0], 1))])
    return xb @ weights


# --- checkpointing ---

def save_checkpoint(model: Model, path) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "params": params_to_doc(model.params),
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def load_checkpoint(path) -> Model:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"not a model checkpoint: {path}")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    return Model(ModelConfig.from_dict(doc["config"]), params_from_doc(doc["params"]))
