"""Knowledge-structured neural surrogate of the hall's sensor temperatures.

The model splits into a cooling block and a heating block. For sensor k:

  cooling   z_ik = V_i * w_cs[i,k],  c_.k = softmax_i(z_.k) over the CRACs
            with nonzero adjacency to k,  T_cold_k = a_k * sum_i T_ci c_ik + b_k
  heating   X_hot_k = sum_j (P_j / alpha_j) * w_ss[j,k],
            dT_k = c_k * X_hot_k + d_k
  output    That_k = T_cold_k + hot_mask_k * dT_k

Cold-aisle sensors see only the cooling block; hot-aisle sensors see both.
The trainable weights are the 4n per-sensor linear coefficients; the
adjacency matrices stay fixed (a variant that trains them too lives at the
bottom, used by the data-volume study).

The heating block's physical anchor is the per-watt air stream: a server
moving alpha cfm/W heats its air by kappa / alpha degC, with kappa set by
air density, heat capacity, and the cfm unit conversion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatchError,
    EmptyBatchError,
    EmptyDatasetError,
    NonPositiveFlowRateError,
)
from .hall import AdjacencyPriors, SystemInput
from .optim import AdamState, TrainConfig, adam_step

AIR_DENSITY = 1.205  # kg/m^3
AIR_HEAT_CAPACITY = 1005.0  # J/(kg K)
CFM_TO_M3S = 0.3048 ** 3 / 60.0

# degC rise of a per-watt air stream of 1 cfm/W: dT = KAPPA_CFM_PER_W / alpha
KAPPA_CFM_PER_W = 1.0 / (AIR_DENSITY * AIR_HEAT_CAPACITY * CFM_TO_M3S)


@dataclass(frozen=True)
class SurrogateWeights:
    """Per-sensor linear-layer weights; 4n trainables in total."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray

    @property
    def n_sensors(self) -> int:
        return self.a.size

    @property
    def n_trainable(self) -> int:
        return self.a.size + self.b.size + self.c.size + self.d.size

    def pack(self) -> np.ndarray:
        return np.concatenate([self.a, self.b, self.c, self.d])

    @classmethod
    def unpack(cls, flat: np.ndarray, n: int) -> "SurrogateWeights":
        return cls(a=flat[:n].copy(), b=flat[n:2 * n].copy(),
                   c=flat[2 * n:3 * n].copy(), d=flat[3 * n:].copy())


def init_weights(n_sensors: int, kappa: float = KAPPA_CFM_PER_W) -> SurrogateWeights:
    """Physics-anchored start: identity cooling layer, heating slope at the
    first-principle rise constant so the untrained model is already in degC."""
    return SurrogateWeights(
        a=np.ones(n_sensors),
        b=np.zeros(n_sensors),
        c=np.full(n_sensors, kappa),
        d=np.zeros(n_sensors),
    )


@dataclass(frozen=True)
class PenaltyParams:
    """Empirical server temperature-rise band and its hinge penalty."""

    dt_low: float = 5.0  # degC
    dt_high: float = 15.0  # degC
    lam: float = 1.0
    kappa: float = KAPPA_CFM_PER_W  # degC * (cfm/W)

    def __post_init__(self):
        if not 0 < self.dt_low < self.dt_high:
            raise ValueError("need 0 < dt_low < dt_high")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.kappa <= 0:
            raise ValueError("kappa must be > 0")


@dataclass(frozen=True)
class TrainingSample:
    """One (input, solver temperatures) pair."""

    input: SystemInput
    target: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "target", np.asarray(self.target, dtype=float))


def _check_alpha(alpha: np.ndarray) -> None:
    if np.any(alpha <= 0.0):
        raise NonPositiveFlowRateError("all flow rates must be > 0")


def _cooling_coefficients(w_cs: np.ndarray, fan_speeds: np.ndarray) -> np.ndarray:
    """Softmax cooling coefficients, restricted to nonzero-adjacency CRACs.

    fan_speeds may be (l,) or batched (B, l); the result matches with a
    trailing (l, n) or (B, l, n) shape.
    """
    support = w_cs > 0.0
    z = fan_speeds[..., :, None] * w_cs
    z_masked = np.where(support, z, -np.inf)
    z_max = np.max(z_masked, axis=-2, keepdims=True)
    ez = np.where(support, np.exp(z - z_max), 0.0)
    return ez / ez.sum(axis=-2, keepdims=True)


def _blocks(w: SurrogateWeights, priors: AdjacencyPriors, x: SystemInput):
    """Hidden-layer variables of both blocks for one input."""
    if x.crac_setpoints.size != priors.w_cs.shape[0]:
        raise DimensionMismatchError("CRAC count does not match the priors")
    if x.server_powers.size != priors.w_ss.shape[0]:
        raise DimensionMismatchError("server count does not match the priors")
    if w.n_sensors != priors.n_sensors:
        raise DimensionMismatchError("weight count does not match the sensor count")
    _check_alpha(x.flow_rates)
    coeff = _cooling_coefficients(priors.w_cs, x.crac_fan_speeds)
    x_cold = (x.crac_setpoints[:, None] * coeff).sum(axis=0)
    x_hot = ((x.server_powers / x.flow_rates)[:, None] * priors.w_ss).sum(axis=0)
    return coeff, x_cold, x_hot


def forward(w: SurrogateWeights, priors: AdjacencyPriors, x: SystemInput) -> np.ndarray:
    """Predicted temperatures at all sensor locations, degC."""
    _, x_cold, x_hot = _blocks(w, priors, x)
    t_cold = w.a * x_cold + w.b
    dt = w.c * x_hot + w.d
    return t_cold + priors.hot_mask * dt


def _batch_blocks(w: SurrogateWeights, priors: AdjacencyPriors, batch: list[TrainingSample]):
    """Vectorized hidden variables, residuals over a sample batch."""
    if not batch:
        raise EmptyBatchError("batch is empty")
    setpoints = np.stack([s.input.crac_setpoints for s in batch])
    fans = np.stack([s.input.crac_fan_speeds for s in batch])
    powers = np.stack([s.input.server_powers for s in batch])
    alphas = np.stack([s.input.flow_rates for s in batch])
    targets = np.stack([s.target for s in batch])
    _check_alpha(alphas)
    coeff = _cooling_coefficients(priors.w_cs, fans)  # (B, l, n)
    x_cold = (setpoints[:, :, None] * coeff).sum(axis=1)  # (B, n)
    x_hot = ((powers / alphas)[:, :, None] * priors.w_ss).sum(axis=1)  # (B, n)
    pred = w.a * x_cold + w.b + priors.hot_mask * (w.c * x_hot + w.d)
    residual = pred - targets
    return coeff, x_cold, x_hot, setpoints, powers, alphas, residual


def loss_l1(w: SurrogateWeights, priors: AdjacencyPriors, batch: list[TrainingSample]) -> float:
    """Mean over samples of the mean-over-sensors squared error against the
    solver outputs."""
    *_, residual = _batch_blocks(w, priors, batch)
    return float(np.mean(residual ** 2))


def grad_weights(w: SurrogateWeights, priors: AdjacencyPriors,
                 batch: list[TrainingSample]) -> SurrogateWeights:
    """Analytic gradient of loss_l1 with respect to (a, b, c, d)."""
    _, x_cold, x_hot, _, _, _, residual = _batch_blocks(w, priors, batch)
    scale = 2.0 / residual.size  # 1/(B*n)
    mask = priors.hot_mask
    return SurrogateWeights(
        a=scale * (residual * x_cold).sum(axis=0),
        b=scale * residual.sum(axis=0),
        c=scale * (residual * mask * x_hot).sum(axis=0),
        d=scale * (residual * mask).sum(axis=0),
    )


def penalty_h(alpha: np.ndarray, powers: np.ndarray, params: PenaltyParams) -> float:
    """Power-weighted hinge penalty on the per-server first-principle rise.

    Each server's rise kappa/alpha_j must sit inside [dt_low, dt_high];
    excursions are charged proportionally to the server power.
    """
    alpha = np.asarray(alpha, dtype=float)
    powers = np.asarray(powers, dtype=float)
    if alpha.shape != powers.shape:
        raise DimensionMismatchError("alpha and powers differ in length")
    _check_alpha(alpha)
    dt = params.kappa / alpha
    low = np.maximum(0.0, params.dt_low - dt)
    high = np.maximum(0.0, dt - params.dt_high)
    return float(((low + high) * powers).sum())


def _penalty_grad(alpha: np.ndarray, powers: np.ndarray, params: PenaltyParams) -> np.ndarray:
    """d penalty_h / d alpha with subgradient 0 at the hinge kinks."""
    dt = params.kappa / alpha
    direction = np.where(dt < params.dt_low, 1.0, 0.0) - np.where(dt > params.dt_high, 1.0, 0.0)
    return powers * params.kappa / alpha ** 2 * direction


def loss_l2(w: SurrogateWeights, priors: AdjacencyPriors, x: SystemInput,
            t_meas: np.ndarray, params: PenaltyParams) -> float:
    """Mean squared sensor error against measurements plus the scaled hinge
    penalty: MSE + (lam / n) * h."""
    t_meas = np.asarray(t_meas, dtype=float)
    pred = forward(w, priors, x)
    if pred.shape != t_meas.shape:
        raise DimensionMismatchError("measurement length does not match sensors")
    n = pred.size
    mse = float(np.mean((pred - t_meas) ** 2))
    return mse + params.lam / n * penalty_h(x.flow_rates, x.server_powers, params)


def grad_alpha(w: SurrogateWeights, priors: AdjacencyPriors, x: SystemInput,
               t_meas: np.ndarray, params: PenaltyParams) -> np.ndarray:
    """Analytic gradient of loss_l2 with respect to the flow rates.

    Flow rates reach the loss through X_hot (chain -P_j/alpha_j^2 into the
    hot-aisle sensors) and through the hinge penalty.
    """
    t_meas = np.asarray(t_meas, dtype=float)
    _, x_cold, x_hot = _blocks(w, priors, x)
    pred = w.a * x_cold + w.b + priors.hot_mask * (w.c * x_hot + w.d)
    if pred.shape != t_meas.shape:
        raise DimensionMismatchError("measurement length does not match sensors")
    n = pred.size
    residual = pred - t_meas
    sens = residual * priors.hot_mask * w.c  # (n,)
    dxhot_scale = -x.server_powers / x.flow_rates ** 2  # (m,)
    g_mse = 2.0 / n * dxhot_scale * (priors.w_ss @ sens)
    g_pen = params.lam / n * _penalty_grad(x.flow_rates, x.server_powers, params)
    return g_mse + g_pen


def train(w0: SurrogateWeights, priors: AdjacencyPriors, dataset: list[TrainingSample],
          hyper: TrainConfig) -> SurrogateWeights:
    """Full-batch Adam on loss_l1 with a staged learning-rate decay.

    Returns the weights with the lowest observed loss, which is w0 itself
    when no epoch improves on it.
    """
    if not dataset:
        raise EmptyDatasetError("training dataset is empty")
    n = w0.n_sensors
    params = w0.pack()
    best_params = params.copy()
    best_loss = loss_l1(w0, priors, dataset)
    state = AdamState.init(params.size, hyper.learning_rate)
    for epoch in range(hyper.epochs):
        w = SurrogateWeights.unpack(params, n)
        g = grad_weights(w, priors, dataset)
        state.learning_rate = hyper.lr_at(epoch)
        state, params = adam_step(state, params, g.pack())
        loss = loss_l1(SurrogateWeights.unpack(params, n), priors, dataset)
        if loss < best_loss:
            best_loss = loss
            best_params = params.copy()
    return SurrogateWeights.unpack(best_params, n)


# -- variant with trainable adjacency (data-volume study) --------------------
#
# Promoting w_cs / w_ss to trainables changes the softmax support: with the
# matrices free to move there is no fixed zero pattern, so the softmax runs
# over all CRACs.


@dataclass(frozen=True)
class TrainableAdjacencyWeights:
    linear: SurrogateWeights
    w_cs: np.ndarray
    w_ss: np.ndarray

    @property
    def n_trainable(self) -> int:
        return self.linear.n_trainable + self.w_cs.size + self.w_ss.size

    def pack(self) -> np.ndarray:
        return np.concatenate([self.linear.pack(), self.w_cs.ravel(), self.w_ss.ravel()])

    @classmethod
    def unpack(cls, flat: np.ndarray, n: int, l: int, m: int) -> "TrainableAdjacencyWeights":
        linear = SurrogateWeights.unpack(flat[:4 * n], n)
        w_cs = flat[4 * n:4 * n + l * n].reshape(l, n).copy()
        w_ss = flat[4 * n + l * n:].reshape(m, n).copy()
        return cls(linear=linear, w_cs=w_cs, w_ss=w_ss)


def _full_softmax(w_cs: np.ndarray, fans: np.ndarray) -> np.ndarray:
    z = fans[..., :, None] * w_cs
    z = z - z.max(axis=-2, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=-2, keepdims=True)


def forward_trainable(tw: TrainableAdjacencyWeights, hot_mask: np.ndarray,
                      x: SystemInput) -> np.ndarray:
    _check_alpha(x.flow_rates)
    coeff = _full_softmax(tw.w_cs, x.crac_fan_speeds)
    x_cold = (x.crac_setpoints[:, None] * coeff).sum(axis=0)
    x_hot = ((x.server_powers / x.flow_rates)[:, None] * tw.w_ss).sum(axis=0)
    w = tw.linear
    return w.a * x_cold + w.b + hot_mask * (w.c * x_hot + w.d)


def loss_l1_trainable(tw: TrainableAdjacencyWeights, hot_mask: np.ndarray,
                      batch: list[TrainingSample]) -> float:
    if not batch:
        raise EmptyBatchError("batch is empty")
    preds = np.stack([forward_trainable(tw, hot_mask, s.input) for s in batch])
    targets = np.stack([s.target for s in batch])
    return float(np.mean((preds - targets) ** 2))


def grad_trainable(tw: TrainableAdjacencyWeights, hot_mask: np.ndarray,
                   batch: list[TrainingSample]) -> TrainableAdjacencyWeights:
    """Analytic gradient of the trainable-adjacency variant's L1."""
    if not batch:
        raise EmptyBatchError("batch is empty")
    setpoints = np.stack([s.input.crac_setpoints for s in batch])  # (B, l)
    fans = np.stack([s.input.crac_fan_speeds for s in batch])
    powers = np.stack([s.input.server_powers for s in batch])
    alphas = np.stack([s.input.flow_rates for s in batch])
    targets = np.stack([s.target for s in batch])
    _check_alpha(alphas)

    coeff = _full_softmax(tw.w_cs, fans)  # (B, l, n)
    x_cold = (setpoints[:, :, None] * coeff).sum(axis=1)  # (B, n)
    pw = powers / alphas  # (B, m)
    x_hot = pw @ tw.w_ss  # (B, n)
    w = tw.linear
    pred = w.a * x_cold + w.b + hot_mask * (w.c * x_hot + w.d)
    residual = pred - targets
    scale = 2.0 / residual.size

    ga = scale * (residual * x_cold).sum(axis=0)
    gb = scale * residual.sum(axis=0)
    gc = scale * (residual * hot_mask * x_hot).sum(axis=0)
    gd = scale * (residual * hot_mask).sum(axis=0)

    # softmax jacobian: dX_cold/dz_ik = c_ik (T_ci - X_cold_k); dz/dw_cs = V_i
    upstream = scale * residual * w.a  # (B, n)
    dz = coeff * (setpoints[:, :, None] - x_cold[:, None, :])  # (B, l, n)
    g_wcs = (upstream[:, None, :] * dz * fans[:, :, None]).sum(axis=0)
    g_wss = np.einsum("bm,bn->mn", pw, scale * residual * hot_mask * w.c)

    return TrainableAdjacencyWeights(
        linear=SurrogateWeights(a=ga, b=gb, c=gc, d=gd), w_cs=g_wcs, w_ss=g_wss
    )


def train_trainable(tw0: TrainableAdjacencyWeights, hot_mask: np.ndarray,
                    dataset: list[TrainingSample], hyper: TrainConfig) -> TrainableAdjacencyWeights:
    """Same schedule as train(), over the enlarged weight set."""
    if not dataset:
        raise EmptyDatasetError("training dataset is empty")
    n = tw0.linear.n_sensors
    l, m = tw0.w_cs.shape[0], tw0.w_ss.shape[0]
    params = tw0.pack()
    best_params = params.copy()
    best_loss = loss_l1_trainable(tw0, hot_mask, dataset)
    state = AdamState.init(params.size, hyper.learning_rate)
    for epoch in range(hyper.epochs):
        tw = TrainableAdjacencyWeights.unpack(params, n, l, m)
        g = grad_trainable(tw, hot_mask, dataset)
        state.learning_rate = hyper.lr_at(epoch)
        state, params = adam_step(state, params, g.pack())
        loss = loss_l1_trainable(TrainableAdjacencyWeights.unpack(params, n, l, m), hot_mask, dataset)
        if loss < best_loss:
            best_loss = loss
            best_params = params.copy()
    return TrainableAdjacencyWeights.unpack(best_params, n, l, m)
