"""One-hidden-layer ReLU voltage surrogate: forward pass, Adam training, metrics."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, EmptySplit, NonFiniteLoss
from .scenarios import Dataset, NormStats, min_voltage_targets  # noqa: F401  (re-export)

SURROGATE_FORMAT = "nnopf-surrogate/1"
MAPE_FLOOR = 1e-6


@dataclass
class MlpParams:
    w1: np.ndarray  # (H, 2N)
    b1: np.ndarray  # (H,)
    w2: np.ndarray  # (n_out, H)
    b2: np.ndarray  # (n_out,)

    def __post_init__(self):
        h, n_in = self.w1.shape
        if self.b1.shape != (h,) or self.w2.shape[1] != h or self.b2.shape != (self.w2.shape[0],):
            raise DimensionMismatch("inconsistent MLP parameter shapes")

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def n_in(self) -> int:
        return self.w1.shape[1]

    @property
    def n_out(self) -> int:
        return self.w2.shape[0]

    def copy(self) -> "MlpParams":
        return MlpParams(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 500
    batch_size: int = 256
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    patience: int = 50

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")


@dataclass(frozen=True)
class Metrics:
    rmse: float
    mae: float
    max_error: float
    mape: float  # percent
    r2: float

    def as_dict(self) -> dict:
        return {"RMSE": self.rmse, "MAE": self.mae, "Max Error": self.max_error,
                "MAPE": self.mape, "R2": self.r2}


def init_params(n_in: int, hidden: int, n_out: int, rng: np.random.Generator) -> MlpParams:
    """Glorot-uniform weights, zero biases."""
    a1 = np.sqrt(6.0 / (n_in + hidden))
    a2 = np.sqrt(6.0 / (hidden + n_out))
    return MlpParams(
        w1=rng.uniform(-a1, a1, size=(hidden, n_in)),
        b1=np.zeros(hidden),
        w2=rng.uniform(-a2, a2, size=(n_out, hidden)),
        b2=np.zeros(n_out),
    )


def forward_normalized(params: MlpParams, xn: np.ndarray) -> np.ndarray:
    z = xn @ params.w1.T + params.b1
    return np.maximum(z, 0.0) @ params.w2.T + params.b2


def forward(params: MlpParams, stats: NormStats, x) -> np.ndarray:
    """Raw injections (2N,) or (m, 2N) -> voltages in p.u."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.n_in or stats.mu_x.shape != (params.n_in,):
        raise DimensionMismatch(f"expected {params.n_in} inputs, got {x.shape[-1]}")
    if stats.mu_y.shape != (params.n_out,):
        raise DimensionMismatch("output statistics do not match the network")
    yn = forward_normalized(params, stats.normalize_x(x))
    return stats.denormalize_y(yn)


def activation_pattern(params: MlpParams, stats: NormStats, x) -> np.ndarray:
    """Boolean mask of neurons with nonnegative pre-activation."""
    z = stats.normalize_x(x) @ params.w1.T + params.b1
    return z >= 0.0


def loss_and_grad(params: MlpParams, xn: np.ndarray, yn: np.ndarray):
    """Mean squared error over all entries and its gradient.

    Returns (loss, (g_w1, g_b1, g_w2, g_b2)).
    """
    z = xn @ params.w1.T + params.b1
    h = np.maximum(z, 0.0)
    pred = h @ params.w2.T + params.b2
    err = pred - yn
    loss = float(np.mean(err**2))
    g_pred = 2.0 * err / err.size
    g_w2 = g_pred.T @ h
    g_b2 = g_pred.sum(axis=0)
    g_h = g_pred @ params.w2
    g_z = g_h * (z > 0)
    g_w1 = g_z.T @ xn
    g_b1 = g_z.sum(axis=0)
    return loss, (g_w1, g_b1, g_w2, g_b2)


def _mse(params, xn, yn) -> float:
    return float(np.mean((forward_normalized(params, xn) - yn) ** 2))


def train(
    dataset: Dataset,
    stats: NormStats,
    hidden: int,
    config: TrainConfig = TrainConfig(),
    variant: str = "full",
    history: list | None = None,
) -> MlpParams:
    """Mini-batch Adam on normalized MSE; returns the best-validation parameters.

    ``history`` (if given) receives one ``(epoch, train_mse, val_mse)`` tuple
    per epoch, with epoch 0 recording the initialization.
    """
    if hidden < 1:
        raise ValueError("hidden width must be >= 1")
    if len(dataset.train) == 0:
        raise EmptySplit("training split is empty")
    y_all = dataset.targets(variant)
    xn_tr = stats.normalize_x(dataset.inputs[dataset.train])
    yn_tr = stats.normalize_y(y_all[dataset.train])
    if len(dataset.val):
        xn_va = stats.normalize_x(dataset.inputs[dataset.val])
        yn_va = stats.normalize_y(y_all[dataset.val])
    else:
        xn_va, yn_va = xn_tr, yn_tr

    rng = np.random.default_rng(config.seed)
    params = init_params(xn_tr.shape[1], hidden, yn_tr.shape[1], rng)
    best = params.copy()
    best_val = _mse(params, xn_va, yn_va)
    if history is not None:
        history.append((0, _mse(params, xn_tr, yn_tr), best_val))

    tensors = [params.w1, params.b1, params.w2, params.b2]
    m = [np.zeros_like(t) for t in tensors]
    v = [np.zeros_like(t) for t in tensors]
    b1, b2, eps, lr = config.beta1, config.beta2, config.epsilon, config.learning_rate
    step = 0
    since_best = 0
    n = len(xn_tr)
    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            loss, grads = loss_and_grad(params, xn_tr[idx], yn_tr[idx])
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"loss became non-finite at epoch {epoch}")
            step += 1
            c1 = 1.0 - b1**step
            c2 = 1.0 - b2**step
            for t, g, mk, vk in zip(tensors, grads, m, v):
                mk *= b1
                mk += (1.0 - b1) * g
                vk *= b2
                vk += (1.0 - b2) * g * g
                t -= lr * (mk / c1) / (np.sqrt(vk / c2) + eps)
        val = _mse(params, xn_va, yn_va)
        if not np.isfinite(val):
            raise NonFiniteLoss(f"validation loss became non-finite at epoch {epoch}")
        if history is not None:
            history.append((epoch, _mse(params, xn_tr, yn_tr), val))
        if val < best_val:
            best_val = val
            best = params.copy()
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break
    return best


def metrics_from_arrays(y_true, y_pred) -> Metrics:
    t = np.asarray(y_true, dtype=float).ravel()
    p = np.asarray(y_pred, dtype=float).ravel()
    if t.size == 0:
        raise EmptySplit("no samples to evaluate")
    err = p - t
    rmse = float(np.sqrt(np.mean(err**2)))
    mae = float(np.mean(np.abs(err)))
    mx = float(np.max(np.abs(err)))
    keep = np.abs(t) >= MAPE_FLOOR
    mape = float(100.0 * np.mean(np.abs(err[keep] / t[keep]))) if keep.any() else 0.0
    ss_tot = float(np.sum((t - t.mean()) ** 2))
    ss_res = float(np.sum(err**2))
    if ss_tot > 0:
        r2 = 1.0 - ss_res / ss_tot
    else:
        r2 = 1.0 if ss_res == 0 else float("-inf")
    return Metrics(rmse, mae, mx, mape, r2)


def evaluate(
    params: MlpParams, stats: NormStats, dataset: Dataset, split: str = "test", variant: str = "full"
) -> Metrics:
    """Metrics on denormalized voltages, R^2 pooled over every output."""
    idx = dataset.split(split)
    if len(idx) == 0:
        raise EmptySplit(f"{split} split is empty")
    pred = forward(params, stats, dataset.inputs[idx])
    return metrics_from_arrays(dataset.targets(variant)[idx], pred)


def evaluate_min_voltage(params: MlpParams, stats: NormStats, dataset: Dataset, split="test") -> Metrics:
    """Minimum-voltage accuracy of any surrogate (min over outputs for full-profile models)."""
    idx = dataset.split(split)
    if len(idx) == 0:
        raise EmptySplit(f"{split} split is empty")
    pred = forward(params, stats, dataset.inputs[idx]).min(axis=1)
    return metrics_from_arrays(dataset.targets_min[idx], pred)


def per_output_rmse(params: MlpParams, stats: NormStats, dataset: Dataset, split="test") -> np.ndarray:
    idx = dataset.split(split)
    pred = forward(params, stats, dataset.inputs[idx])
    return np.sqrt(np.mean((pred - dataset.targets_full[idx]) ** 2, axis=0))


# --- persistence -----------------------------------------------------------


def _pack(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": np.asarray(a, dtype=float).ravel(order="C").tolist()}


def _unpack(d: dict) -> np.ndarray:
    return np.asarray(d["data"], dtype=float).reshape(d["shape"], order="C")


def surrogate_to_dict(params: MlpParams, stats: NormStats, variant: str, load_buses) -> dict:
    return {
        "format": SURROGATE_FORMAT,
        "variant": variant,
        "hidden": params.hidden,
        "n_in": params.n_in,
        "n_out": params.n_out,
        "load_buses": [int(b) for b in load_buses],
        "layout": "row-major",
        "w1": _pack(params.w1),
        "b1": _pack(params.b1),
        "w2": _pack(params.w2),
        "b2": _pack(params.b2),
        "norm_stats": {
            "mu_x": _pack(stats.mu_x),
            "sigma_x": _pack(stats.sigma_x),
            "mu_y": _pack(stats.mu_y),
            "sigma_y": _pack(stats.sigma_y),
        },
    }


def surrogate_from_dict(d: dict):
    """Returns (params, stats, variant, load_buses)."""
    if d.get("format") != SURROGATE_FORMAT:
        raise ValueError("not an nnopf surrogate document")
    params = MlpParams(_unpack(d["w1"]), _unpack(d["b1"]), _unpack(d["w2"]), _unpack(d["b2"]))
    ns = d["norm_stats"]
    stats = NormStats(_unpack(ns["mu_x"]), _unpack(ns["sigma_x"]), _unpack(ns["mu_y"]),
                      _unpack(ns["sigma_y"]))
    if params.n_in != d["n_in"] or params.n_out != d["n_out"]:
        raise DimensionMismatch("declared shapes disagree with stored weights")
    return params, stats, d["variant"], tuple(d["load_buses"])


def save_surrogate(path, params: MlpParams, stats: NormStats, variant: str, load_buses) -> None:
    Path(path).write_text(json.dumps(surrogate_to_dict(params, stats, variant, load_buses), indent=1))


def load_surrogate(path):
    return surrogate_from_dict(json.loads(Path(path).read_text()))
