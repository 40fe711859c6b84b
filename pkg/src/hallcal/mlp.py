"""Black-box baseline surrogate: a fully connected net from the flattened
system input to the n sensor temperatures.

Hidden layers are 518, 128 and 32 units with ReLU; the output layer is
linear. Inputs are standardized per feature with training-set statistics
(the features mix degC, ratios, watts and cfm/W); targets stay in degC.
The flow rates are ordinary inputs here, so the calibration step can
differentiate the net with respect to them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, EmptyBatchError, EmptyDatasetError
from .hall import SystemInput
from .optim import AdamState, TrainConfig, adam_step
from .surrogate import PenaltyParams, TrainingSample, _penalty_grad, penalty_h

HIDDEN_SIZES = (518, 128, 32)
STD_FLOOR = 1e-8  # features that never vary would otherwise blow up


def flatten_input(x: SystemInput) -> np.ndarray:
    """Feature vector [T_c, V, P, alpha] of length 2l + 2m."""
    return np.concatenate([x.crac_setpoints, x.crac_fan_speeds, x.server_powers, x.flow_rates])


@dataclass(frozen=True)
class MlpWeights:
    """Dense layers plus the input standardization statistics."""

    weights: tuple[np.ndarray, ...]  # per layer, (fan_in, fan_out)
    biases: tuple[np.ndarray, ...]
    input_mean: np.ndarray
    input_std: np.ndarray

    @property
    def n_trainable(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def pack(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.weights + self.biases])

    def unpack(self, flat: np.ndarray) -> "MlpWeights":
        ws, bs = [], []
        pos = 0
        for w in self.weights:
            ws.append(flat[pos:pos + w.size].reshape(w.shape).copy())
            pos += w.size
        for b in self.biases:
            bs.append(flat[pos:pos + b.size].copy())
            pos += b.size
        return MlpWeights(tuple(ws), tuple(bs), self.input_mean, self.input_std)


def init_mlp(in_dim: int, n_sensors: int, seed: int = 0) -> MlpWeights:
    """Fan-in-scaled uniform initialization; identity standardization until fit."""
    rng = np.random.default_rng(seed)
    sizes = (in_dim,) + HIDDEN_SIZES + (n_sensors,)
    ws, bs = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        ws.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        bs.append(np.zeros(fan_out))
    return MlpWeights(tuple(ws), tuple(bs), np.zeros(in_dim), np.ones(in_dim))


def fit_standardizer(w: MlpWeights, batch: list[TrainingSample]) -> MlpWeights:
    """Replace the standardization statistics with the batch's per-feature
    mean and (floored) standard deviation."""
    if not batch:
        raise EmptyBatchError("batch is empty")
    feats = np.stack([flatten_input(s.input) for s in batch])
    return MlpWeights(w.weights, w.biases, feats.mean(axis=0),
                      np.maximum(feats.std(axis=0), STD_FLOOR))


def _forward_cached(w: MlpWeights, feats: np.ndarray):
    """Forward pass keeping pre-activations for backprop; feats is (B, D)."""
    h = (feats - w.input_mean) / w.input_std
    activations = [h]
    pres = []
    last = len(w.weights) - 1
    for i, (wi, bi) in enumerate(zip(w.weights, w.biases)):
        pre = h @ wi + bi
        pres.append(pre)
        h = pre if i == last else np.maximum(pre, 0.0)
        activations.append(h)
    return activations, pres


def mlp_forward(w: MlpWeights, x: SystemInput) -> np.ndarray:
    feats = flatten_input(x)
    if feats.size != w.in_dim:
        raise DimensionMismatchError(f"expected input dim {w.in_dim}, got {feats.size}")
    activations, _ = _forward_cached(w, feats[None, :])
    return activations[-1][0]


def mlp_loss_l1(w: MlpWeights, batch: list[TrainingSample]) -> float:
    if not batch:
        raise EmptyBatchError("batch is empty")
    feats = np.stack([flatten_input(s.input) for s in batch])
    targets = np.stack([s.target for s in batch])
    activations, _ = _forward_cached(w, feats)
    return float(np.mean((activations[-1] - targets) ** 2))


def _backprop(w: MlpWeights, activations, pres, delta_out: np.ndarray):
    """Propagate an output-space delta; returns weight grads and input delta."""
    grads_w = [None] * len(w.weights)
    grads_b = [None] * len(w.biases)
    delta = delta_out
    for i in range(len(w.weights) - 1, -1, -1):
        grads_w[i] = activations[i].T @ delta
        grads_b[i] = delta.sum(axis=0)
        delta = delta @ w.weights[i].T
        if i > 0:
            delta = delta * (pres[i - 1] > 0.0)
    return grads_w, grads_b, delta


def mlp_grad_weights(w: MlpWeights, batch: list[TrainingSample]) -> MlpWeights:
    """Analytic gradient of mlp_loss_l1 with respect to all layers."""
    if not batch:
        raise EmptyBatchError("batch is empty")
    feats = np.stack([flatten_input(s.input) for s in batch])
    targets = np.stack([s.target for s in batch])
    activations, pres = _forward_cached(w, feats)
    residual = activations[-1] - targets
    delta_out = 2.0 / residual.size * residual
    grads_w, grads_b, _ = _backprop(w, activations, pres, delta_out)
    return MlpWeights(tuple(grads_w), tuple(grads_b), w.input_mean, w.input_std)


def mlp_input_gradient(w: MlpWeights, x: SystemInput, upstream: np.ndarray) -> np.ndarray:
    """Gradient of upstream . output with respect to the raw feature vector."""
    feats = flatten_input(x)
    activations, pres = _forward_cached(w, feats[None, :])
    _, _, delta_in = _backprop(w, activations, pres, upstream[None, :])
    return delta_in[0] / w.input_std


def mlp_loss_l2(w: MlpWeights, x: SystemInput, t_meas: np.ndarray,
                params: PenaltyParams) -> float:
    pred = mlp_forward(w, x)
    t_meas = np.asarray(t_meas, dtype=float)
    if pred.shape != t_meas.shape:
        raise DimensionMismatchError("measurement length does not match sensors")
    n = pred.size
    mse = float(np.mean((pred - t_meas) ** 2))
    return mse + params.lam / n * penalty_h(x.flow_rates, x.server_powers, params)


def mlp_grad_alpha(w: MlpWeights, x: SystemInput, t_meas: np.ndarray,
                   params: PenaltyParams) -> np.ndarray:
    """Gradient of mlp_loss_l2 with respect to the flow rates."""
    pred = mlp_forward(w, x)
    t_meas = np.asarray(t_meas, dtype=float)
    n = pred.size
    upstream = 2.0 / n * (pred - t_meas)
    g_feats = mlp_input_gradient(w, x, upstream)
    m = x.flow_rates.size
    g_alpha = g_feats[-m:]
    return g_alpha + params.lam / n * _penalty_grad(x.flow_rates, x.server_powers, params)


def mlp_train(w0: MlpWeights, dataset: list[TrainingSample], hyper: TrainConfig) -> MlpWeights:
    """Full-batch Adam on the squared-error loss; same snapshotting contract
    as the knowledge surrogate's trainer."""
    if not dataset:
        raise EmptyDatasetError("training dataset is empty")
    params = w0.pack()
    best_params = params.copy()
    best_loss = mlp_loss_l1(w0, dataset)
    state = AdamState.init(params.size, hyper.learning_rate)
    for epoch in range(hyper.epochs):
        w = w0.unpack(params)
        g = mlp_grad_weights(w, dataset)
        state.learning_rate = hyper.lr_at(epoch)
        state, params = adam_step(state, params, g.pack())
        loss = mlp_loss_l1(w0.unpack(params), dataset)
        if loss < best_loss:
            best_loss = loss
            best_params = params.copy()
    return w0.unpack(best_params)
