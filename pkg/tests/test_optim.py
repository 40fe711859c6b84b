import numpy as np
import pytest

from hallcal.errors import DimensionMismatchError, ObjectiveNonFiniteError
from hallcal.optim import (
    AdamConfig,
    AdamState,
    Bounds,
    DeConfig,
    EsConfig,
    adam_search,
    adam_step,
    cmaes_1p1,
    de_search,
    hybrid_search,
)

BOX = Bounds(0.1, 10.0)
CENTER = np.linspace(1.0, 2.0, 8)


def quadratic(x):
    return float(np.sum((x - CENTER) ** 2))


def quadratic_grad(x):
    return 2.0 * (x - CENTER)


class Recorder:
    """Objective wrapper that logs every candidate it is asked to score."""

    def __init__(self, fn):
        self.fn = fn
        self.candidates = []

    def __call__(self, x):
        self.candidates.append(x.copy())
        return self.fn(x)


class TestAdamStep:
    def test_zero_gradient_leaves_params(self):
        state = AdamState.init(3, learning_rate=0.1)
        params = np.array([1.0, 2.0, 3.0])
        new_state, new_params = adam_step(state, params, np.zeros(3))
        assert np.array_equal(new_params, params)
        assert new_state.step == 1

    def test_first_step_is_signed_learning_rate(self):
        # bias-corrected first step: -lr * g / (|g| + eps) ~ -lr * sign(g)
        lr = 0.05
        state = AdamState.init(3, learning_rate=lr)
        params = np.zeros(3)
        grad = np.array([2.0, -0.5, 1e3])
        _, new_params = adam_step(state, params, grad)
        np.testing.assert_allclose(new_params, -lr * np.sign(grad), rtol=1e-6)

    def test_deterministic(self):
        state = AdamState.init(2, learning_rate=0.01)
        params = np.array([0.5, -0.5])
        grad = np.array([0.3, 0.7])
        out1 = adam_step(state, params, grad)
        state2 = AdamState.init(2, learning_rate=0.01)
        out2 = adam_step(state2, params, grad)
        assert np.array_equal(out1[1], out2[1])
        assert np.array_equal(out1[0].m, out2[0].m)

    def test_dimension_mismatch(self):
        state = AdamState.init(2, learning_rate=0.01)
        with pytest.raises(DimensionMismatchError):
            adam_step(state, np.zeros(3), np.zeros(3))


class TestDeSearch:
    def test_quadratic_minimum_inside_box(self):
        # objective within 1e-2 of the analytic minimum (0) in <= 100 iterations
        res = de_search(quadratic, BOX, DeConfig(seed=2), np.full(8, 5.0))
        assert res.fun <= 1e-2

    def test_minimum_outside_box_lands_on_boundary(self):
        res = de_search(lambda x: float(np.sum((x - 12.0) ** 2)), BOX,
                        DeConfig(seed=0), np.full(8, 5.0))
        np.testing.assert_allclose(res.x, BOX.upper, atol=1e-9)

    def test_all_candidates_feasible(self):
        rec = Recorder(quadratic)
        de_search(rec, BOX, DeConfig(seed=1), np.full(8, 5.0))
        for c in rec.candidates:
            assert BOX.contains(c)

    def test_nonfinite_objective_raises(self):
        with pytest.raises(ObjectiveNonFiniteError):
            de_search(lambda x: float("nan"), BOX, DeConfig(seed=0), np.full(4, 1.0))

    def test_deterministic_under_seed(self):
        r1 = de_search(quadratic, BOX, DeConfig(seed=7), np.full(8, 5.0))
        r2 = de_search(quadratic, BOX, DeConfig(seed=7), np.full(8, 5.0))
        assert np.array_equal(r1.x, r2.x) and r1.fun == r2.fun


def rosenbrock(x):
    return float(100.0 * (x[1] - x[0] ** 2) ** 2 + (1.0 - x[0]) ** 2)


def rosenbrock_grad(x):
    dx = -400.0 * x[0] * (x[1] - x[0] ** 2) - 2.0 * (1.0 - x[0])
    dy = 200.0 * (x[1] - x[0] ** 2)
    return np.array([dx, dy])


class TestHybridSearch:
    def test_never_worse_than_de_alone(self):
        de_cfg = DeConfig(max_iterations=20, seed=3)
        adam_cfg = AdamConfig(learning_rate=0.01, steps=200)
        de_only = de_search(quadratic, BOX, de_cfg, np.full(8, 5.0))
        hybrid = hybrid_search(quadratic, quadratic_grad, BOX, de_cfg, adam_cfg,
                               np.full(8, 5.0))
        assert hybrid.fun <= de_only.fun

    def test_adam_refines_coarse_de_on_rosenbrock(self):
        # a short DE run only locates the valley; the gradient stage must
        # then cut the objective by at least 10x
        box = Bounds(0.01, 3.0)
        de_cfg = DeConfig(max_iterations=10, seed=0)
        adam_cfg = AdamConfig(learning_rate=0.01, steps=2000)
        de_only = de_search(rosenbrock, box, de_cfg, np.array([2.5, 0.5]))
        hybrid = hybrid_search(rosenbrock, rosenbrock_grad, box, de_cfg, adam_cfg,
                               np.array([2.5, 0.5]))
        assert hybrid.de_fun == de_only.fun
        assert hybrid.fun <= 0.1 * de_only.fun

    def test_result_within_bounds(self):
        hybrid = hybrid_search(quadratic, quadratic_grad, BOX, DeConfig(seed=1),
                               AdamConfig(), np.full(8, 11.0))
        assert BOX.contains(hybrid.x)


class TestCmaes:
    def test_sphere_decreases_100x_within_500_evals(self):
        x0 = np.full(8, 5.0)
        res = cmaes_1p1(quadratic, BOX, EsConfig(max_evals=500, seed=0), x0)
        assert res.fun <= quadratic(x0) / 100.0
        assert res.n_evals == 500

    def test_one_fifth_rule_direction(self):
        res = cmaes_1p1(quadratic, BOX, EsConfig(max_evals=400, seed=1), np.full(8, 5.0))
        sigma = EsConfig().sigma0
        assert res.adaptations, "expected at least one adaptation window"
        for rate, sigma_after in res.adaptations:
            if rate > 0.2:
                assert sigma_after == pytest.approx(sigma * 1.5)
            elif rate < 0.2:
                assert sigma_after == pytest.approx(sigma / 1.5)
            else:
                assert sigma_after == pytest.approx(sigma)
            sigma = sigma_after

    def test_candidates_feasible_and_counted(self):
        rec = Recorder(quadratic)
        res = cmaes_1p1(rec, BOX, EsConfig(max_evals=100, seed=2), np.full(8, 5.0))
        assert len(rec.candidates) == res.n_evals == 100
        for c in rec.candidates:
            assert BOX.contains(c)

    def test_deterministic_under_seed(self):
        r1 = cmaes_1p1(quadratic, BOX, EsConfig(max_evals=150, seed=5), np.full(8, 5.0))
        r2 = cmaes_1p1(quadratic, BOX, EsConfig(max_evals=150, seed=5), np.full(8, 5.0))
        assert np.array_equal(r1.x, r2.x) and r1.best_trace == r2.best_trace


@pytest.mark.parametrize("runner", [
    lambda rec: de_search(rec, BOX, DeConfig(seed=4), np.full(8, 5.0)),
    lambda rec: adam_search(rec, quadratic_grad, BOX, AdamConfig(steps=50), np.full(8, 5.0)),
    lambda rec: cmaes_1p1(rec, BOX, EsConfig(max_evals=120, seed=4), np.full(8, 5.0)),
])
def test_budget_accounting_and_monotone_best(runner):
    rec = Recorder(quadratic)
    res = runner(rec)
    assert res.n_evals == len(rec.candidates)
    assert len(res.best_trace) == res.n_evals
    assert all(b2 <= b1 for b1, b2 in zip(res.best_trace, res.best_trace[1:]))


def test_bounds_validation():
    with pytest.raises(ValueError):
        Bounds(0.0, 1.0)
    with pytest.raises(ValueError):
        Bounds(2.0, 1.0)
    with pytest.raises(ValueError):
        DeConfig(population_size=3)
    with pytest.raises(ValueError):
        EsConfig(sigma0=0.0)
