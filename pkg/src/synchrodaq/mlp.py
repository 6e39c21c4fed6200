"""Small feed-forward network that learns the residual left over by a
rigid frame-to-frame map.

The network consumes a 3D position and emits a 3D position correction.
Implemented directly on numpy so the analytic gradients can be audited
against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Frame
from .rigid import RigidTransform

HIDDEN_LAYERS = (16, 16)


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 0.005
    epochs: int = 50
    weight_decay: float = 1.5
    dropout: float = 0.5
    batch_size: int = 64
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if min(self.learning_rate, self.epochs, self.batch_size) <= 0:
            raise ValueError("learning_rate, epochs and batch_size must be positive")
        if self.weight_decay < 0 or not (0 <= self.dropout < 1):
            raise ValueError("weight_decay must be >= 0 and dropout in [0, 1)")


class ResidualMlp:
    """Position-residual network: layers 3 -> 16 -> 16 -> 3, ReLU hidden units.

    Inputs are standardized with statistics captured at training time.
    The output layer initializes to zero, so an untrained model leaves the
    rigid map untouched exactly. Dropout acts on the final hidden layer
    during training only.
    """

    def __init__(self, target: Frame, hidden=HIDDEN_LAYERS, dropout: float = 0.5):
        self.target = target
        self.dropout = dropout
        sizes = [3, *hidden, 3]
        self.weights = [np.zeros((sizes[i], sizes[i + 1])) for i in range(len(sizes) - 1)]
        self.biases = [np.zeros(s) for s in sizes[1:]]
        self.input_mean = np.zeros(3)
        self.input_scale = np.ones(3)

    def init_weights(self, rng: np.random.Generator):
        for i, w in enumerate(self.weights[:-1]):
            fan_in = w.shape[0]
            self.weights[i] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=w.shape)
        self.weights[-1] = np.zeros_like(self.weights[-1])

    def set_input_stats(self, x: np.ndarray):
        x = np.asarray(x, dtype=float)
        self.input_mean = x.mean(axis=0)
        scale = x.std(axis=0)
        self.input_scale = np.where(scale > 1e-12, scale, 1.0)

    # --- forward / backward -------------------------------------------------

    def _forward(self, x: np.ndarray, dropout_masks=None):
        """Returns (output, cache) where cache holds per-layer inputs."""
        h = (np.asarray(x, dtype=float) - self.input_mean) / self.input_scale
        cache = []
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            if i < last:
                a = np.maximum(z, 0.0)
                if dropout_masks is not None and dropout_masks[i] is not None:
                    a = a * dropout_masks[i]
                cache.append((h, z, a))
                h = a
            else:
                cache.append((h, z, z))
                h = z
        return h, cache

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Residual in cm for (n,3) or (3,) positions; dropout disabled."""
        single = np.asarray(x).ndim == 1
        out, _ = self._forward(np.atleast_2d(x))
        return out[0] if single else out

    def objective(self, x: np.ndarray, y: np.ndarray, weight_decay: float) -> float:
        pred, _ = self._forward(np.atleast_2d(x))
        rmse = float(np.sqrt(np.mean((pred - np.atleast_2d(y)) ** 2)))
        return rmse + 0.5 * weight_decay * sum(float(np.sum(w * w)) for w in self.weights)

    def gradients(self, x: np.ndarray, y: np.ndarray, weight_decay: float, dropout_masks=None):
        """Objective value plus gradients w.r.t. every weight and bias."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        pred, cache = self._forward(x, dropout_masks)
        err = pred - y
        mse = np.mean(err * err)
        rmse = float(np.sqrt(mse))
        loss = rmse + 0.5 * weight_decay * sum(float(np.sum(w * w)) for w in self.weights)

        # d rmse / d pred; guarded so a perfect fit yields a zero gradient
        denom = max(rmse, 1e-12) * err.size
        delta = err / denom

        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        last = len(self.weights) - 1
        for i in range(last, -1, -1):
            h_in, z, _ = cache[i]
            grads_w[i] = h_in.T @ delta + weight_decay * self.weights[i]
            grads_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = delta @ self.weights[i].T
                if dropout_masks is not None and dropout_masks[i - 1] is not None:
                    delta = delta * dropout_masks[i - 1]
                delta = delta * (cache[i - 1][1] > 0.0)
        return loss, grads_w, grads_b

    # --- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "target_frame": self.target.value,
            "hidden_layers": [w.shape[1] for w in self.weights[:-1]],
            "dropout": self.dropout,
            "input_mean": self.input_mean.tolist(),
            "input_scale": self.input_scale.tolist(),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ResidualMlp":
        model = cls(Frame(doc["target_frame"]), hidden=tuple(doc["hidden_layers"]), dropout=doc["dropout"])
        model.weights = [np.array(w, dtype=float) for w in doc["weights"]]
        model.biases = [np.array(b, dtype=float) for b in doc["biases"]]
        model.input_mean = np.array(doc["input_mean"], dtype=float)
        model.input_scale = np.array(doc["input_scale"], dtype=float)
        return model


def mlp_gradient_check(model: ResidualMlp, batch, weight_decay: float = 1.5, eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    Runs in evaluation mode (no dropout). Components where both gradients
    are below 1e-7 in magnitude count as agreeing.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    x, y = batch
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if x.size == 0:
        raise ValueError("gradient check needs a non-empty batch")
    _, grads_w, grads_b = model.gradients(x, y, weight_decay)

    max_rel = 0.0
    params = list(zip(model.weights, grads_w)) + list(zip(model.biases, grads_b))
    for arr, grad in params:
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + eps
            hi = model.objective(x, y, weight_decay)
            flat[idx] = orig - eps
            lo = model.objective(x, y, weight_decay)
            flat[idx] = orig
            fd = (hi - lo) / (2.0 * eps)
            scale = max(abs(gflat[idx]), abs(fd), 1e-7)
            max_rel = max(max_rel, abs(gflat[idx] - fd) / scale)
    return max_rel


def _adam_train(model: ResidualMlp, x, y, cfg: TrainingConfig, rng: np.random.Generator):
    """Minibatch Adam on the RMSE objective with decoupled weight decay
    (weights shrink by lr * decay each step); returns per-epoch loss."""
    n = x.shape[0]
    m_w = [np.zeros_like(w) for w in model.weights]
    v_w = [np.zeros_like(w) for w in model.weights]
    m_b = [np.zeros_like(b) for b in model.biases]
    v_b = [np.zeros_like(b) for b in model.biases]
    shrink = 1.0 - cfg.learning_rate * cfg.weight_decay
    if shrink <= 0:
        raise ValueError("learning_rate * weight_decay must stay below 1")
    step = 0
    epoch_loss = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            masks = None
            if cfg.dropout > 0:
                keep = 1.0 - cfg.dropout
                masks = [None] * (len(model.weights) - 1)
                last_hidden = model.weights[-2].shape[1]
                masks[-1] = (rng.random((len(idx), last_hidden)) < keep) / keep
            loss, grads_w, grads_b = model.gradients(x[idx], y[idx], 0.0, masks)
            if not np.isfinite(loss):
                raise FloatingPointError("training diverged to a non-finite loss")
            step += 1
            bc1 = 1.0 - cfg.adam_beta1 ** step
            bc2 = 1.0 - cfg.adam_beta2 ** step
            for params, grads, m, v in (
                (model.weights, grads_w, m_w, v_w),
                (model.biases, grads_b, m_b, v_b),
            ):
                for i, g in enumerate(grads):
                    m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g
                    v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g * g
                    params[i] -= cfg.learning_rate * (m[i] / bc1) / (np.sqrt(v[i] / bc2) + cfg.adam_eps)
            for i in range(len(model.weights)):
                model.weights[i] *= shrink
        epoch_loss.append(model.objective(x, y, cfg.weight_decay))
    return epoch_loss


def fit_residual(
    src: np.ndarray,
    residual: np.ndarray,
    target: Frame,
    cfg: TrainingConfig,
    seed: int = 0,
) -> tuple[ResidualMlp, list[float]]:
    """Train one residual model on (n,3) source positions and residuals."""
    rng = np.random.default_rng(seed)
    model = ResidualMlp(target, dropout=cfg.dropout)
    model.init_weights(rng)
    model.set_input_stats(src)
    history = _adam_train(model, np.asarray(src, float), np.asarray(residual, float), cfg, rng)
    return model, history


def train_residual_mlp(
    pairs_by_trial: dict[str, tuple[np.ndarray, np.ndarray]],
    transform: RigidTransform,
    cfg: TrainingConfig = TrainingConfig(),
    seed: int = 0,
) -> tuple[ResidualMlp, dict]:
    """Leave-one-trial-out training of the residual correction.

    pairs_by_trial maps a trial id to (source positions, target-frame truth
    positions). Each trial becomes one validation fold; the returned model
    is trained on all trials and the report carries per-fold rigid-only and
    corrected RMSE plus their averages.
    """
    trials = sorted(pairs_by_trial)
    if len(trials) < 2:
        raise ValueError("cross-validation needs at least 2 trials")

    def stack(names):
        src = np.concatenate([np.asarray(pairs_by_trial[t][0], float) for t in names])
        dst = np.concatenate([np.asarray(pairs_by_trial[t][1], float) for t in names])
        return src, dst, dst - transform.apply_points(src)

    folds = []
    for held_out in trials:
        train_names = [t for t in trials if t != held_out]
        src, _, res = stack(train_names)
        model, _ = fit_residual(src, res, transform.target, cfg, seed=seed)
        ev_src, _, ev_res = stack([held_out])
        corr = ev_res - model.predict(ev_src)
        folds.append(
            {
                "trial": held_out,
                "n_train": int(src.shape[0]),
                "n_eval": int(ev_src.shape[0]),
                "rigid_rmse_cm": float(np.sqrt(np.mean(ev_res**2))),
                "corrected_rmse_cm": float(np.sqrt(np.mean(corr**2))),
            }
        )

    src_all, _, res_all = stack(trials)
    final, history = fit_residual(src_all, res_all, transform.target, cfg, seed=seed)
    report = {
        "target_frame": transform.target.value,
        "n_trials": len(trials),
        "folds": folds,
        "mean_rigid_rmse_cm": float(np.mean([f["rigid_rmse_cm"] for f in folds])),
        "mean_corrected_rmse_cm": float(np.mean([f["corrected_rmse_cm"] for f in folds])),
        "final_epoch_loss": history,
    }
    return final, report


def predict_corrected(transform: RigidTransform, model: ResidualMlp, positions: np.ndarray) -> np.ndarray:
    """Rigid map plus learned residual correction, for (n,3) or (3,) positions."""
    if model.target != transform.target:
        raise ValueError(
            f"model corrects into frame {model.target.value}, transform targets {transform.target.value}"
        )
    return transform.apply_points(positions) + model.predict(positions)
