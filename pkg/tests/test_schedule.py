"""Bit allocation: contraction estimates, the dynamic rule, budget audits."""

import math

import numpy as np
import pytest

from dqsim.schedule import (
    ALPHA_CEIL,
    ALPHA_FLOOR,
    DynamicSchedule,
    FixedSchedule,
    SchedulerState,
    SignSchedule,
    Trend,
    alpha_closed_form,
    alpha_estimate,
    asymptotic_quantization_budget,
    bits_monotonicity_class,
    budget_satisfaction,
    continuous_bits,
    dq_bits,
    fixed_bits_for_budget,
    quantization_budget,
)
from dqsim.theory import am_alpha, gm_alpha


def make_state(**kwargs):
    defaults = dict(T=100, W=8, d=10, eta=0.1, L=1.0, mu=1.0)
    defaults.update(kwargs)
    return SchedulerState(**defaults)


# ---------------------------------------------------------------------------
# contraction factor
# ---------------------------------------------------------------------------


def test_alpha_closed_form_values():
    assert alpha_closed_form(1.0, 1.0, 1.0) == 0.0
    assert alpha_closed_form(0.1, 4.0, 1.0) == pytest.approx(0.84, rel=1e-15)


def test_alpha_decreases_with_eta_below_inverse_L():
    L, mu = 4.0, 1.0
    etas = np.linspace(0.01, 1.0 / L, 40)
    alphas = [alpha_closed_form(float(e), L, mu) for e in etas]
    assert all(a > b for a, b in zip(alphas, alphas[1:]))


def test_alpha_estimate_examples():
    assert alpha_estimate(1.0, 1.0, 5) == ALPHA_CEIL
    assert alpha_estimate(1.0, 0.25, 2) == pytest.approx(0.5, rel=1e-12)
    assert alpha_estimate(1.0, -0.5, 3) == ALPHA_FLOOR
    with pytest.raises(ValueError):
        alpha_estimate(1.0, 0.5, 0)
    with pytest.raises(ValueError):
        alpha_estimate(0.0, 0.5, 1)


def test_alpha_estimate_converges_on_exact_descent():
    # independent descent oracle: x <- (1 - eta*lam) x on an isotropic bowl
    lam, eta, d = 2.0, 0.15, 6
    alpha = alpha_closed_form(eta, lam, lam)
    x = np.ones(d)
    f0 = 0.5 * lam * float(x @ x)
    for t in range(1, 51):
        x = x - eta * lam * x
        ft = 0.5 * lam * float(x @ x)
        if t == 50:
            est = alpha_estimate(f0, ft, t)
            assert abs(est - alpha) / alpha < 0.01


# ---------------------------------------------------------------------------
# the dynamic rule
# ---------------------------------------------------------------------------


def test_constant_alpha_gives_constant_bits():
    vals = [continuous_bits(t, 50, 2.0, 1.0, 3.0) for t in range(50)]
    assert all(v == vals[0] for v in vals)


def test_bits_nondecreasing_in_t_for_fixed_gbar():
    vals = [continuous_bits(t, 50, 2.0, 0.9, 3.0) for t in range(50)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))


def test_hand_evaluated_spot_value():
    # T=100, budget 1, alpha=0.99, gbar=1 at the final step:
    # log2(sqrt(100) * 1 * 1 + 1) + 1 = log2(11) + 1
    state = make_state(eps_q_hat=1.0)
    state.alpha = 0.99
    expected = math.log2(11.0) + 1.0
    assert continuous_bits(99, 100, 1.0, 0.99, 1.0) == pytest.approx(expected, rel=1e-15)
    assert dq_bits(state, 99, 1.0) == math.floor(expected + 0.5) == 4


def test_dq_bits_clamps_and_degenerate_inputs():
    state = make_state(eps_q_hat=1.0, b_min=3, b_max=6)
    assert dq_bits(state, 0, 0.0) == 3
    assert dq_bits(state, 99, 1e12) == 6
    state.alpha = 1e-9  # weight underflow pushes the rule to the floor
    assert dq_bits(state, 0, 1.0) >= 3


def test_monotone_response_of_continuous_rule():
    rng = np.random.default_rng(0)
    for _ in range(200):
        T = int(rng.integers(2, 200))
        t = int(rng.integers(0, T))
        alpha = float(rng.uniform(0.1, 0.999))
        g = float(rng.uniform(0.01, 10))
        eps = float(rng.uniform(0.01, 10))
        b = continuous_bits(t, T, eps, alpha, g)
        assert continuous_bits(t, T, eps, alpha, g * 1.5) >= b
        assert continuous_bits(t, T, eps * 2, alpha, g) <= b


# ---------------------------------------------------------------------------
# monotonicity classification
# ---------------------------------------------------------------------------


def test_trend_examples():
    state = make_state()
    state.alpha = 0.81
    assert bits_monotonicity_class(state, 0, 1.0, 0.9) is Trend.FLAT
    assert bits_monotonicity_class(state, 0, 1.0, 0.5) is Trend.DECREASING
    assert bits_monotonicity_class(state, 0, 1.0, 0.95) is Trend.INCREASING


def test_trend_matches_continuous_difference():
    rng = np.random.default_rng(1)
    state = make_state(T=50, eps_q_hat=2.0)
    for _ in range(300):
        alpha = float(rng.uniform(0.2, 0.999))
        ratio = float(rng.uniform(0.3, 1.5))
        state.alpha = alpha
        gbar = float(rng.uniform(0.1, 5.0))
        t = int(rng.integers(0, 49))
        cls = bits_monotonicity_class(state, t, gbar, ratio * gbar)
        b_now = continuous_bits(t, 50, 2.0, alpha, gbar)
        b_next = continuous_bits(t + 1, 50, 2.0, alpha, ratio * gbar)
        if cls is Trend.DECREASING:
            assert b_next < b_now
        elif cls is Trend.INCREASING:
            assert b_next > b_now
        else:
            assert b_next == pytest.approx(b_now, rel=1e-12)


# ---------------------------------------------------------------------------
# budgets
# ---------------------------------------------------------------------------


def test_budget_split_examples():
    state = make_state(T=100, W=8, d=10, eta=0.1, L=1.0, epsilon=0.1, gamma=0.0)
    eps_q, _ = quantization_budget(state)
    assert eps_q == 0.1
    state = make_state(T=100, W=8, d=10, eta=0.1, L=1.0, epsilon=0.1, gamma=0.5)
    eps_q, eps_q_hat = quantization_budget(state)
    assert eps_q == pytest.approx(0.05, rel=1e-15)
    assert eps_q_hat == pytest.approx(32.0, rel=1e-12)


def test_asymptotic_budget_split():
    # choosing gamma = L eta^2 sigma^2 / (2 W (1-alpha) epsilon) makes the
    # quantization budget equal the epsilon-minus-noise-floor form
    L, eta, sigma, W, alpha, eps = 1.0, 0.1, 2.0, 8, 0.84, 0.1
    gamma = L * eta**2 * sigma**2 / (2 * W * (1 - alpha)) / eps
    state = make_state(W=W, eta=eta, L=L, epsilon=eps, gamma=gamma)
    eps_q, _ = quantization_budget(state)
    assert eps_q == pytest.approx(
        asymptotic_quantization_budget(eps, L, eta, sigma, W, alpha), rel=1e-12
    )


def test_budget_satisfaction_trivial_values():
    assert budget_satisfaction([2, 2], [0.0, 0.0], 0.9) == 0.0
    assert budget_satisfaction([2], [1.0], 0.37, T=1) == 1.0
    with pytest.raises(ValueError):
        budget_satisfaction([1, 2], [1.0, 1.0], 0.9)
    with pytest.raises(ValueError):
        budget_satisfaction([2, 2], [1.0], 0.9)


def test_continuous_rule_recovers_budget_exactly():
    rng = np.random.default_rng(2)
    for _ in range(50):
        T = int(rng.integers(2, 120))
        alpha = float(rng.uniform(0.6, 0.999))
        gbar = rng.uniform(0.3, 5.0, size=T)
        eps_q_hat = float(rng.uniform(0.1, 50.0))
        cont = np.array(
            [continuous_bits(t, T, eps_q_hat, alpha, gbar[t]) for t in range(T)]
        )
        assert budget_satisfaction(cont, gbar, alpha) == pytest.approx(
            eps_q_hat, rel=1e-9
        )


def test_fixed_bits_for_budget_is_minimal():
    rng = np.random.default_rng(3)
    for _ in range(30):
        T = int(rng.integers(5, 100))
        alpha = float(rng.uniform(0.8, 0.999))
        gbar = rng.uniform(0.5, 4.0, size=T)
        eps_q_hat = float(rng.uniform(0.5, 20.0))
        b = fixed_bits_for_budget(gbar, alpha, eps_q_hat)
        assert budget_satisfaction([b] * T, gbar, alpha) <= eps_q_hat * (1 + 1e-9)
        if b > 2:
            assert budget_satisfaction([b - 1] * T, gbar, alpha) > eps_q_hat


def test_am_gm_ordering():
    for alpha in np.linspace(0.01, 0.999, 25):
        for T in (2, 3, 10, 100):
            assert gm_alpha(float(alpha), T) < am_alpha(float(alpha), T)
    assert gm_alpha(0.5, 1) == am_alpha(0.5, 1) == 1.0
    assert am_alpha(0.5, 2) == pytest.approx(0.75)
    assert gm_alpha(0.5, 2) == pytest.approx(math.sqrt(0.5))


# ---------------------------------------------------------------------------
# schedule objects
# ---------------------------------------------------------------------------


def test_state_validation():
    with pytest.raises(ValueError):
        make_state(gamma=1.0)
    with pytest.raises(ValueError):
        make_state(gamma=1.5)
    with pytest.raises(ValueError):
        make_state(b_min=1)
    with pytest.raises(ValueError):
        make_state(b_max=33)
    with pytest.raises(ValueError):
        make_state(eps_q_hat=0.0)
    with pytest.raises(ValueError):
        make_state(tau=0)


def test_state_budget_round_trip():
    direct = make_state(eps_q_hat=32.0)
    assert direct.eps_q == pytest.approx(0.05, rel=1e-12)


def test_fixed_and_sign_schedules_are_constant():
    sched = FixedSchedule(6)
    assert sched.start(1.0) == 6
    assert all(sched.update(t, 0.5, 1.0) == 6 for t in range(5))
    tern = FixedSchedule(2, kind="ternary")
    assert tern.kind == "ternary" and tern.start(1.0) == 2
    with pytest.raises(ValueError):
        FixedSchedule(3, kind="ternary")
    sign = SignSchedule()
    assert sign.start(1.0) == 1 and sign.update(0, 1.0, 1.0) == 1


def test_dynamic_schedule_holds_between_refreshes():
    state = make_state(T=30, tau=10, b0=5, eps_q_hat=4.0, alpha_source="closed_form")
    sched = DynamicSchedule(state)
    bits = [sched.start(4.0)]
    for t in range(29):
        bits.append(sched.update(t, 4.0 * 0.9**t, 2.0))
    # width can only change at rounds 10 and 20
    changes = [t for t in range(1, 30) if bits[t] != bits[t - 1]]
    assert set(changes) <= {10, 20}
    assert bits[:10] == [5] * 10
    assert all(2 <= b <= 32 for b in bits)
    assert sched.realized == bits


def test_dynamic_schedule_never_emits_one_bit():
    state = make_state(T=40, tau=1, eps_q_hat=1e9, b0=2)
    sched = DynamicSchedule(state)
    bits = [sched.start(1.0)]
    for t in range(39):
        bits.append(sched.update(t, 1.0, 1e-9))
    assert min(bits) >= 2


def test_dynamic_schedule_estimates_alpha_at_refresh():
    state = make_state(T=40, tau=10, b0=4, eps_q_hat=4.0, alpha_source="estimate")
    sched = DynamicSchedule(state)
    sched.start(8.0)
    # feed a loss history contracting at exactly 0.8 per step
    for t in range(39):
        sched.update(t, 8.0 * 0.8**t, 1.5)
    assert state.alpha == pytest.approx(0.8, rel=1e-9)
