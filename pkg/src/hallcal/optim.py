"""Search machinery: Adam steps, bounded differential evolution, the
DE-then-Adam hybrid, and a (1+1) evolution strategy with 1/5-rule step
adaptation.

All searchers clip every candidate into the feasible box before the
objective sees it, keep a monotone best-so-far trace, and count objective
invocations exactly (the counts feed the solver-budget comparisons).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DimensionMismatchError, ObjectiveNonFiniteError


@dataclass(frozen=True)
class Bounds:
    """Element-wise box [lower, upper] for the flow-rate vector."""

    lower: float
    upper: float

    def __post_init__(self):
        if not 0 < self.lower < self.upper:
            raise ValueError(f"need 0 < lower < upper, got [{self.lower}, {self.upper}]")

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)

    def contains(self, x: np.ndarray) -> bool:
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lower + self.upper)

    @property
    def span(self) -> float:
        return self.upper - self.lower


@dataclass(frozen=True)
class DeConfig:
    population_size: int = 10
    crossover_rate: float = 0.6
    max_iterations: int = 100
    differential_weight: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 4:
            raise ValueError("population_size must be >= 4")
        if not 0.0 <= self.crossover_rate <= 1.0:
            raise ValueError("crossover_rate must be in [0, 1]")


@dataclass(frozen=True)
class EsConfig:
    sigma0: float = 5.0
    adapt_every: int = 20
    adapt_factor: float = 1.5
    max_evals: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.sigma0 <= 0:
            raise ValueError("sigma0 must be > 0")


@dataclass(frozen=True)
class AdamConfig:
    """Projected-Adam refinement stage."""

    learning_rate: float = 1e-3
    steps: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    """Full-batch surrogate training schedule."""

    epochs: int = 150
    learning_rate: float = 0.1
    decay: float = 0.8
    decay_every: int = 50

    def lr_at(self, epoch: int) -> float:
        return self.learning_rate * self.decay ** (epoch // self.decay_every)


@dataclass
class AdamState:
    """First/second moment accumulators of one Adam-driven parameter vector."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    learning_rate: float = 1e-3

    @classmethod
    def init(cls, size: int, learning_rate: float, beta1: float = 0.9,
             beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(m=np.zeros(size), v=np.zeros(size), step=0,
                   beta1=beta1, beta2=beta2, eps=eps, learning_rate=learning_rate)


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray) -> tuple[AdamState, np.ndarray]:
    """One bias-corrected Adam update; returns new state and parameters."""
    if params.shape != grad.shape or params.shape != state.m.shape:
        raise DimensionMismatchError("params, grad and moments must share a shape")
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_params = params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = AdamState(m=m, v=v, step=t, beta1=state.beta1, beta2=state.beta2,
                          eps=state.eps, learning_rate=state.learning_rate)
    return new_state, new_params


@dataclass
class SearchResult:
    """Outcome of one bounded search run."""

    x: np.ndarray
    fun: float
    n_evals: int
    best_trace: list[float] = field(default_factory=list)
    # stage diagnostics, populated by the searcher that produces them
    losses: Optional[list[float]] = None
    grad_norms: Optional[list[float]] = None
    sigma_trace: Optional[list[float]] = None
    adaptations: Optional[list[tuple[float, float]]] = None
    de_fun: Optional[float] = None


class _Counted:
    """Wrap an objective: clip-checked finiteness, call count, best tracking."""

    def __init__(self, objective: Callable[[np.ndarray], float]):
        self.objective = objective
        self.n_evals = 0
        self.best_x: Optional[np.ndarray] = None
        self.best_f = np.inf
        self.best_trace: list[float] = []

    def __call__(self, x: np.ndarray) -> float:
        f = float(self.objective(x))
        self.n_evals += 1
        if not np.isfinite(f):
            raise ObjectiveNonFiniteError(f"objective returned {f} at {x!r}")
        if f < self.best_f:
            self.best_f = f
            self.best_x = x.copy()
        self.best_trace.append(self.best_f)
        return f


def _lhs_population(rng: np.random.Generator, count: int, dim: int, bounds: Bounds) -> np.ndarray:
    """Latin-hypercube sample of `count` points over the box."""
    strata = (np.argsort(rng.random((count, dim)), axis=0) + rng.random((count, dim))) / count
    return bounds.lower + strata * bounds.span


def de_search(objective: Callable[[np.ndarray], float], bounds: Bounds,
              cfg: DeConfig, x0: np.ndarray,
              init_bounds: Optional[Bounds] = None) -> SearchResult:
    """DE/rand/1/bin over the box, population anchored at x0.

    The remaining members are a Latin-hypercube sample spanning
    `init_bounds` (the full box when not given), so the first generations
    already probe far from the anchor; callers with a known low-penalty
    region can seed inside it while the search itself stays free to roam
    the whole box. Every candidate is clipped into the box before
    evaluation; ties keep the incumbent.
    """
    rng = np.random.default_rng(cfg.seed)
    dim = x0.size
    obj = _Counted(objective)

    pop = np.empty((cfg.population_size, dim))
    pop[0] = bounds.clip(np.asarray(x0, dtype=float))
    pop[1:] = _lhs_population(rng, cfg.population_size - 1, dim, init_bounds or bounds)
    fitness = np.array([obj(pop[i]) for i in range(cfg.population_size)])

    for _ in range(cfg.max_iterations):
        for i in range(cfg.population_size):
            candidates = [j for j in range(cfg.population_size) if j != i]
            r0, r1, r2 = rng.choice(candidates, size=3, replace=False)
            mutant = bounds.clip(pop[r0] + cfg.differential_weight * (pop[r1] - pop[r2]))
            cross = rng.random(dim) < cfg.crossover_rate
            cross[rng.integers(dim)] = True
            trial = np.where(cross, mutant, pop[i])
            f_trial = obj(trial)
            if f_trial < fitness[i]:
                pop[i] = trial
                fitness[i] = f_trial

    return SearchResult(x=obj.best_x, fun=obj.best_f, n_evals=obj.n_evals,
                        best_trace=obj.best_trace)


def adam_search(objective: Callable[[np.ndarray], float],
                gradient: Callable[[np.ndarray], np.ndarray],
                bounds: Bounds, cfg: AdamConfig, x0: np.ndarray) -> SearchResult:
    """Projected Adam descent: clip back into the box after every step.

    Returns the best evaluated point; records per-step loss and mean
    absolute gradient for the convergence traces.
    """
    obj = _Counted(objective)
    params = bounds.clip(np.asarray(x0, dtype=float))
    state = AdamState.init(params.size, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    losses: list[float] = []
    grad_norms: list[float] = []
    for _ in range(cfg.steps):
        losses.append(obj(params))
        g = gradient(params)
        grad_norms.append(float(np.mean(np.abs(g))))
        state, params = adam_step(state, params, g)
        params = bounds.clip(params)
    losses.append(obj(params))
    return SearchResult(x=obj.best_x, fun=obj.best_f, n_evals=obj.n_evals,
                        best_trace=obj.best_trace, losses=losses, grad_norms=grad_norms)


def hybrid_search(objective: Callable[[np.ndarray], float],
                  gradient: Callable[[np.ndarray], np.ndarray],
                  bounds: Bounds, de_cfg: DeConfig, adam_cfg: AdamConfig,
                  x0: np.ndarray, init_bounds: Optional[Bounds] = None) -> SearchResult:
    """Differential evolution followed by projected-Adam refinement of the
    DE winner; returns whichever of the two stages found the lower value."""
    de = de_search(objective, bounds, de_cfg, x0, init_bounds=init_bounds)
    adam = adam_search(objective, gradient, bounds, adam_cfg, de.x)
    if adam.fun <= de.fun:
        x, fun = adam.x, adam.fun
    else:
        x, fun = de.x, de.fun
    trace = de.best_trace + [min(b, de.fun) for b in adam.best_trace]
    return SearchResult(x=x, fun=fun, n_evals=de.n_evals + adam.n_evals,
                        best_trace=trace, losses=adam.losses,
                        grad_norms=adam.grad_norms, de_fun=de.fun)


def cmaes_1p1(objective: Callable[[np.ndarray], float], bounds: Bounds,
              cfg: EsConfig, x0: np.ndarray) -> SearchResult:
    """(1+1) evolution strategy with 1/5-success-rule step adaptation.

    One Gaussian offspring per iteration, clipped into the box; a strictly
    better offspring replaces the parent. Every `adapt_every` mutations the
    step size is scaled up when the windowed success rate exceeds 1/5 and
    down when it falls below.
    """
    rng = np.random.default_rng(cfg.seed)
    obj = _Counted(objective)
    parent = bounds.clip(np.asarray(x0, dtype=float))
    f_parent = obj(parent)
    sigma = cfg.sigma0
    sigma_trace = [sigma]
    adaptations: list[tuple[float, float]] = []
    window_successes = 0
    window_count = 0

    while obj.n_evals < cfg.max_evals:
        child = bounds.clip(parent + sigma * rng.standard_normal(parent.size))
        f_child = obj(child)
        window_count += 1
        if f_child < f_parent:
            parent, f_parent = child, f_child
            window_successes += 1
        if window_count == cfg.adapt_every:
            rate = window_successes / window_count
            if rate > 0.2:
                sigma *= cfg.adapt_factor
            elif rate < 0.2:
                sigma /= cfg.adapt_factor
            adaptations.append((rate, sigma))
            window_successes = 0
            window_count = 0
        sigma_trace.append(sigma)

    return SearchResult(x=obj.best_x, fun=obj.best_f, n_evals=obj.n_evals,
                        best_trace=obj.best_trace, sigma_trace=sigma_trace,
                        adaptations=adaptations)
