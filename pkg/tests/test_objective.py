"""Objectives: closed forms, gradients vs finite differences, oracle moments."""

import math

import numpy as np
import pytest

from dqsim.objective import (
    GradientOracle,
    LogisticObjective,
    QuadraticObjective,
    constants,
    full_gradient,
    loss,
    make_dataset,
    sample_gradient,
)


def test_quadratic_loss_trivial_points():
    obj = QuadraticObjective.isotropic(2, 1.0)
    assert loss(obj, np.zeros(2)) == 0.0
    assert loss(obj, np.array([1.0, 1.0])) == 1.0


def test_quadratic_gradient_examples():
    obj = QuadraticObjective.isotropic(2, 2.0)
    assert np.array_equal(full_gradient(obj, np.array([1.0, 0.0])).values, [2.0, 0.0])
    rng = np.random.default_rng(0)
    obj = QuadraticObjective.random_pd(5, 0.5, 3.0, rng)
    assert np.linalg.norm(obj.gradient(obj.optimum())) <= 1e-10


def test_quadratic_optimal_value_closed_form():
    rng = np.random.default_rng(1)
    obj = QuadraticObjective.random_pd(4, 1.0, 5.0, rng)
    obj = QuadraticObjective(obj.H, A=rng.standard_normal(4), B=0.7)
    x_star = obj.optimum()
    assert obj.optimal_value() == pytest.approx(obj.loss(x_star), rel=1e-12)
    # any perturbation increases the loss
    for _ in range(10):
        assert obj.loss(x_star + 0.1 * rng.standard_normal(4)) > obj.optimal_value()


def test_constants_examples():
    obj = QuadraticObjective(np.diag([1.0, 4.0]))
    assert constants(obj) == (4.0, 1.0)
    obj = QuadraticObjective.isotropic(3, 2.5)
    assert constants(obj) == (2.5, 2.5)


def test_constants_against_power_iteration():
    rng = np.random.default_rng(2)
    obj = QuadraticObjective.random_pd(8, 0.3, 6.0, rng)
    v = rng.standard_normal(8)
    for _ in range(2000):
        v = obj.H @ v
        v /= np.linalg.norm(v)
    top = float(v @ obj.H @ v)
    L, mu = obj.constants()
    assert L == pytest.approx(top, rel=1e-8)
    assert (L, mu) == pytest.approx((6.0, 0.3), rel=1e-10)


def test_non_positive_definite_rejected():
    with pytest.raises(ValueError):
        QuadraticObjective(np.diag([1.0, 0.0]))
    with pytest.raises(ValueError):
        QuadraticObjective(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_logistic_loss_against_brute_force():
    X = np.array(
        [[1.0, 0.5], [-0.3, 2.0], [0.8, -1.2], [0.0, 0.4], [-1.5, -0.7]]
    )
    y = np.array([1.0, -1.0, 1.0, -1.0, 1.0])
    obj = LogisticObjective(X, y, ridge=0.05)
    x = np.array([0.3, -0.8])
    brute = (
        math.fsum(math.log(1.0 + math.exp(-yi * (xi @ x))) for xi, yi in zip(X, y)) / 5
        + 0.025 * float(x @ x)
    )
    assert obj.loss(x) == pytest.approx(brute, rel=1e-12)


@pytest.mark.parametrize("kind", ["quadratic", "logistic"])
def test_gradient_matches_central_differences(kind):
    rng = np.random.default_rng(3)
    if kind == "quadratic":
        obj = QuadraticObjective.random_pd(6, 0.5, 4.0, rng)
        obj = QuadraticObjective(obj.H, A=rng.standard_normal(6), B=0.2)
    else:
        X, y = make_dataset(40, 6, seed=5)
        obj = LogisticObjective(X, y, ridge=0.1)
    x = rng.standard_normal(6)
    grad = obj.gradient(x)
    h = 1e-6
    for j in range(6):
        e = np.zeros(6)
        e[j] = h
        fd = (obj.loss(x + e) - obj.loss(x - e)) / (2 * h)
        assert fd == pytest.approx(grad[j], rel=1e-5, abs=1e-8)


def test_smoothness_inequality_property():
    rng = np.random.default_rng(4)
    obj = QuadraticObjective.random_pd(5, 0.5, 3.0, rng)
    L, _ = obj.constants()
    for _ in range(1000):
        x = rng.standard_normal(5) * 3
        y = rng.standard_normal(5) * 3
        lhs = obj.loss(y)
        rhs = obj.loss(x) + obj.gradient(x) @ (y - x) + 0.5 * L * float((y - x) @ (y - x))
        assert lhs <= rhs * (1 + 1e-12) + 1e-12


def test_pl_inequalities_for_quadratics():
    rng = np.random.default_rng(5)
    obj = QuadraticObjective.random_pd(5, 0.7, 4.0, rng)
    obj = QuadraticObjective(obj.H, A=rng.standard_normal(5))
    L, mu = obj.constants()
    f_star = obj.optimal_value()
    for _ in range(1000):
        x = rng.standard_normal(5) * 2
        gap = obj.loss(x) - f_star
        sq = float(np.linalg.norm(obj.gradient(x)) ** 2)
        assert 2 * mu * gap <= sq * (1 + 1e-10) + 1e-12
        assert sq <= 2 * L * gap * (1 + 1e-10) + 1e-12


def test_logistic_constants_formula():
    X, y = make_dataset(50, 4, seed=6)
    obj = LogisticObjective(X, y, ridge=0.2)
    op = np.linalg.norm(X, ord=2)
    L, mu = obj.constants()
    assert L == pytest.approx(op**2 / (4 * 50) + 0.2, rel=1e-12)
    assert mu == 0.2


def test_gaussian_oracle_degenerate_noise_is_exact():
    obj = QuadraticObjective.isotropic(3, 1.0, A=np.array([0.5, -0.5, 1.0]))
    oracle = GradientOracle(obj, workers=2, noise="gaussian", sigma=0.0)
    x = np.array([1.0, 2.0, 3.0])
    g = sample_gradient(oracle, 0, x, np.random.default_rng(0))
    assert np.array_equal(g.values, obj.gradient(x))


def test_gaussian_oracle_mean_within_5_se():
    obj = QuadraticObjective.isotropic(4, 1.0)
    oracle = GradientOracle(obj, workers=1, noise="gaussian", sigma=0.8)
    x = np.array([1.0, -1.0, 0.5, 2.0])
    rng = np.random.default_rng(7)
    n = 100_000
    draws = np.stack([oracle.sample(0, x, rng).values for _ in range(200)])
    # vectorized equivalent for the big sample
    big = obj.gradient(x) + rng.normal(0, 0.8 / 2.0, size=(n, 4))
    mean = big.mean(axis=0)
    se = big.std(axis=0, ddof=1) / math.sqrt(n)
    assert np.all(np.abs(mean - obj.gradient(x)) <= 5 * se)
    assert draws.shape == (200, 4)


def test_gaussian_oracle_second_moment_calibrated():
    obj = QuadraticObjective.isotropic(6, 1.0)
    sigma = 0.7
    oracle = GradientOracle(obj, workers=2, noise="gaussian", sigma=sigma)
    x = np.ones(6)
    measured, per_worker = oracle.calibrate(x, draws=4000, rng=np.random.default_rng(8))
    n = 4000 * 2
    # chi-square spread of the squared-norm mean
    se = sigma**2 * math.sqrt(2.0 / (6 * n))
    assert measured <= sigma**2 + 5 * se
    assert len(per_worker) == 2


def test_minibatch_full_shard_is_deterministic():
    X, y = make_dataset(40, 3, seed=9)
    obj = LogisticObjective(X, y, ridge=0.1)
    oracle = GradientOracle(
        obj, workers=4, noise="minibatch", batch_size=10**6, shard_mode="replicate"
    )
    x = np.array([0.2, -0.1, 0.4])
    g1 = oracle.sample(0, x, np.random.default_rng(1))
    g2 = oracle.sample(3, x, np.random.default_rng(2))
    assert np.array_equal(g1.values, g2.values)
    assert np.array_equal(g1.values, obj.gradient(x))


def test_minibatch_shards_are_contiguous_equal_splits():
    X, y = make_dataset(12, 2, seed=10)
    obj = LogisticObjective(X, y)
    oracle = GradientOracle(obj, workers=3, noise="minibatch", batch_size=2)
    assert [list(s) for s in oracle.shards] == [
        [0, 1, 2, 3],
        [4, 5, 6, 7],
        [8, 9, 10, 11],
    ]


def test_minibatch_oracle_unbiased_over_shards():
    X, y = make_dataset(60, 3, seed=11)
    obj = LogisticObjective(X, y, ridge=0.05)
    W = 4
    oracle = GradientOracle(obj, workers=W, noise="minibatch", batch_size=5)
    x = np.array([0.3, 0.1, -0.2])
    rng = np.random.default_rng(12)
    n = 20_000
    draws = np.stack(
        [
            np.mean([oracle.sample(i, x, rng).values for i in range(W)], axis=0)
            for _ in range(n)
        ]
    )
    mean = draws.mean(axis=0)
    se = draws.std(axis=0, ddof=1) / math.sqrt(n)
    assert np.all(np.abs(mean - obj.gradient(x)) <= 5 * se)


def test_minibatch_calibration_is_reproducible_bound():
    X, y = make_dataset(80, 4, seed=13)
    obj = LogisticObjective(X, y, ridge=0.1)
    oracle = GradientOracle(obj, workers=4, noise="minibatch", batch_size=4)
    x = 0.1 * np.ones(4)
    first, _ = oracle.calibrate(x, draws=3000, rng=np.random.default_rng(14))
    second, per_worker = oracle.calibrate(x, draws=3000, rng=np.random.default_rng(15))
    # two independent measurements of the same quantity agree within 5 SE
    se = first * math.sqrt(2.0 / 3000)
    assert abs(second - first) <= 5 * se
    assert second == max(per_worker)
    assert len(per_worker) == 4


def test_oracle_error_cases():
    obj = QuadraticObjective.isotropic(2, 1.0)
    with pytest.raises(ValueError):
        GradientOracle(obj, workers=2, noise="minibatch")
    X, y = make_dataset(10, 2, seed=16)
    lobj = LogisticObjective(X, y)
    with pytest.raises(ValueError):
        GradientOracle(lobj, workers=3, noise="minibatch")  # 10 % 3 != 0
    oracle = GradientOracle(obj, workers=2, noise="gaussian", sigma=1.0)
    with pytest.raises(ValueError):
        oracle.sample(2, np.zeros(2), np.random.default_rng(0))
    with pytest.raises(ValueError):
        GradientOracle(obj, workers=2, noise="bogus")
