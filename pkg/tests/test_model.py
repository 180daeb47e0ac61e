import math

import numpy as np
import pytest

from tamesde import model, paths, solver


@pytest.fixture(params=["cubic-mult", "cubic-const", "ou"])
def problem(request):
    return model.get_problem(request.param)


def test_cubic_multiplicative_values():
    p = model.builtin_cubic_multiplicative()
    assert p.state_dim == p.noise_dim == 1
    assert p.drift(np.array([0.0]))[0] == 2.0
    assert p.drift(np.array([1.0]))[0] == pytest.approx(1.8, abs=1e-15)
    assert p.monotonicity_const == 0.1
    assert p.growth_consts == (0.1, 2.0)
    assert p.moment_order == 10.0
    assert p.horizon == 1.0
    assert p.diffusion(np.array([2.0]))[0, 0] == 3.0
    assert p.a4_data is None


def test_cubic_constant_values():
    p = model.builtin_cubic_constant_diffusion()
    assert p.diffusion(np.array([7.3]))[0, 0] == 1.0
    assert p.drift(np.array([-1.0]))[0] == pytest.approx(2.2, abs=1e-15)
    assert p.a4_data is not None
    assert np.array_equal(p.a4_data.constant_diffusion, np.ones((1, 1)))


def test_a4_diffusion_is_constant():
    p = model.builtin_cubic_constant_diffusion()
    x = np.random.default_rng(1).uniform(-100, 100, (1000, 1))
    assert np.all(p.diffusion(x) == p.a4_data.constant_diffusion)


def test_ou_rejects_nonpositive_theta():
    with pytest.raises(ValueError):
        model.builtin_linear_ou(0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        model.builtin_linear_ou(-1.0, 0.0, 0.0)


def test_ou_monotone_with_equality():
    p = model.builtin_linear_ou(2.5, 1.0, 0.3)
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=(2, 100, 1))
    lhs = np.sum((p.drift(x) - p.drift(y)) * (x - y), axis=-1)
    sq = np.sum((x - y) ** 2, axis=-1)
    assert np.all(np.abs(lhs + 2.5 * sq) <= 1e-12 * (1 + sq))


def test_ou_deterministic_mean_is_exponential_decay():
    p = model.builtin_linear_ou(1.0, 0.0, 0.0, x0=2.0)
    n = 2**14
    out = solver.simulate(p, solver.Vanilla(), n, paths.generate(0, 0, n), [2.0])
    assert out.endpoint[0] == pytest.approx(2.0 * math.exp(-1.0), rel=1e-4)


def test_ou_mean_matches_fine_euler():
    # oracle: fine-grid Euler mean over many paths against the closed form
    p = model.builtin_linear_ou(1.0, 3.0, 0.5, x0=0.0)
    n, trials = 256, 4000
    dw = paths.generate_batch(3, range(trials), n)
    x0 = np.zeros((trials, 1))
    out = solver.simulate_batch(p, p.drift, n, dw, x0)
    mean = out.endpoint[:, 0].mean()
    se = out.endpoint[:, 0].std() / math.sqrt(trials)
    assert abs(mean - model.ou_mean(1.0, 3.0, 0.0, 1.0)) < 4 * se + 5e-3
    assert out.endpoint[:, 0].var() == pytest.approx(model.ou_variance(1.0, 0.5, 1.0), rel=0.1)


def test_problem_validation():
    good = model.builtin_cubic_multiplicative()
    import dataclasses

    with pytest.raises(ValueError):
        dataclasses.replace(good, monotonicity_const=0.0)
    with pytest.raises(ValueError):
        dataclasses.replace(good, horizon=-1.0)
    with pytest.raises(ValueError):
        dataclasses.replace(good, state_dim=0)
    with pytest.raises(ValueError):
        dataclasses.replace(good, drift=lambda x: np.full(np.shape(x), np.inf))


def test_unknown_problem_name():
    with pytest.raises(ValueError, match="unknown problem"):
        model.get_problem("nope")


def test_strong_monotonicity_on_random_pairs(problem):
    rng = np.random.default_rng(11)
    x = rng.uniform(-100, 100, (10_000, problem.state_dim))
    y = rng.uniform(-100, 100, (10_000, problem.state_dim))
    diff = x - y
    sq = np.sum(diff**2, axis=-1)
    viol = np.sum((problem.drift(x) - problem.drift(y)) * diff, axis=-1) + problem.monotonicity_const * sq
    assert np.all(viol <= 1e-9 * (1 + sq))


def test_diffusion_lipschitz(problem):
    rng = np.random.default_rng(12)
    x = rng.uniform(-100, 100, (10_000, problem.state_dim))
    y = rng.uniform(-100, 100, (10_000, problem.state_dim))
    gap = np.linalg.norm(problem.diffusion(x) - problem.diffusion(y), axis=(-2, -1))
    assert np.all(gap <= problem.diffusion_lipschitz * np.linalg.norm(x - y, axis=-1) * (1 + 1e-12))


def test_coercivity(problem):
    rng = np.random.default_rng(13)
    x = rng.uniform(-100, 100, (10_000, problem.state_dim))
    lhs = np.sum(problem.drift(x) * x, axis=-1)
    rhs = np.sum(problem.drift_at_origin * x, axis=-1) - problem.monotonicity_const * np.sum(x * x, axis=-1)
    assert np.all(lhs <= rhs + 1e-9 * (1 + np.abs(rhs)))


def test_cubic_growth_constant_is_tight():
    # |b(x)-b(y)| / ((1+|x|+|y|)^2 |x-y|) on |x|,|y| <= 1e3 never exceeds H = 0.1
    p = model.builtin_cubic_multiplicative()
    rng = np.random.default_rng(14)
    x, y = rng.uniform(-1e3, 1e3, (2, 100_000, 1))
    ratio = np.abs(p.drift(x) - p.drift(y)) / ((1 + np.abs(x) + np.abs(y)) ** 2 * np.abs(x - y))
    assert ratio.max() <= 0.1
    # and it is approached near the origin
    x, y = np.array([[1e-6]]), np.array([[-1e-6]])
    near = np.abs(p.drift(x) - p.drift(y)) / ((1 + 2e-6) ** 2 * 2e-6)
    assert near[0, 0] == pytest.approx(0.1, rel=1e-4)


def test_without_noise_and_initial_point():
    p = model.builtin_cubic_multiplicative().without_noise().with_initial_point(50.0)
    assert np.all(p.diffusion(np.array([[3.0], [4.0]])) == 0)
    assert p.initial_sampler(np.random.default_rng(0))[0] == 50.0
