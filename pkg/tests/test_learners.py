import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lightons.learners import (
    LearnerConfig,
    default_epsilon,
    gamma_core,
    gamma_ons,
    gamma_prime,
    gradient_norm_regret_bound,
    init_learner,
    lightons_core_step,
    lightons_step,
    ons_step,
    projection_budget,
    projection_budget_without_k,
    regret_upper_bound,
    step,
    zeta_schedule,
)
from lightons.linalg import pd_pair_init
from lightons.projection import Ball, Box
from lightons.tasks import LossStream, StreamConfig, offline_best_comparator, sample_stream

# --- curvature parameters -------------------------------------------------


def test_gamma_ons_examples():
    assert gamma_ons(1.0, 0.1, 5.0) == 2.5
    assert gamma_ons(1.0, 1.0, 1e9) == 0.5
    assert gamma_ons(2.0, 2.0, 0.1) == 0.05
    with pytest.raises(ValueError):
        gamma_ons(0.0, 1.0, 1.0)


def test_gamma_core_examples():
    assert gamma_core(1.0, 0.1, 5.0, 2.0) == 2.5
    assert gamma_core(1.0, 1.0, 10.0, 3.0) == 0.25
    assert gamma_core(1.0, 1.0, 10.0, 1.0 + 1e-12) == pytest.approx(gamma_ons(1.0, 1.0, 10.0))
    with pytest.raises(ValueError):
        gamma_core(1.0, 1.0, 1.0, 1.0)


def test_gamma_prime_examples():
    assert gamma_prime(1.0, 0.1, 5.0, 2.0) == 2.5 == gamma_ons(1.0, 0.1, 5.0)
    assert gamma_prime(1.0, 1.0, 10.0, 5.0) == pytest.approx(1 / 3)
    # c_f = 2 halves the two Lipschitz branches
    assert gamma_prime(1.0, 1.0, 100.0, 5.0, c_f=2.0) == pytest.approx(0.5 * gamma_prime(1.0, 1.0, 100.0, 5.0))
    with pytest.raises(ValueError):
        gamma_prime(1.0, 1.0, 1.0, 2.0, c_f=0.5)


@pytest.mark.parametrize("k", [1.5, 2.0, 3.0])
def test_gamma_prime_matches_ons_for_small_k(k):
    for D, G, a in [(1.0, 1.0, 10.0), (2.0, 0.1, 5.0), (1.0, 3.0, 0.01)]:
        assert gamma_prime(D, G, a, k) == gamma_ons(D, G, a)


def test_zeta_schedule_decays_like_inverse_square():
    z = [zeta_schedule(t, 2.5, 2.0, 2.0, 0.1, 92.1) for t in (10, 100, 1000)]
    assert z[0] > z[1] > z[2] > 0
    assert z[2] * 1000**2 <= z[0] * 10**2 * (1 + 1e-12)


# --- audits ---------------------------------------------------------------


def cfg(**kw):
    base = dict(d=10, D=1.0, G=0.1, alpha=5.0, epsilon=10.0, k=2.0)
    base.update(kw)
    return LearnerConfig(**base)


def test_projection_budget_examples():
    assert projection_budget(cfg(), 2.5, 10_000) == 80
    assert projection_budget(cfg(), 2.5, 0) == 0
    assert projection_budget(cfg(k=math.inf), 2.5, 10_000) == 0
    assert projection_budget_without_k(cfg(), 2.5, 10_000) == 80
    assert projection_budget_without_k(cfg(k=3.0), 2.5, 10_000) == 2 * projection_budget(cfg(k=3.0), 2.5, 10_000)


def test_regret_bound_examples():
    c = cfg(epsilon=10 * math.log(1e4))
    expected = 2 * math.log1p(100 / (10 * 10 * math.log(1e4))) + 2.5 * 10 * math.log(1e4) / 8
    assert regret_upper_bound(c, 2.5, 10_000) == pytest.approx(expected, rel=1e-14)
    assert regret_upper_bound(c, 2.5, 10_000) == pytest.approx(28.99, abs=0.01)
    assert regret_upper_bound(c, 2.5, 0) == pytest.approx(2.5 * c.epsilon / 8)
    log_term = regret_upper_bound(c, 2.5, 10_000) - regret_upper_bound(c, 2.5, 0)
    half = regret_upper_bound(c, 1.25, 10_000)
    assert half == pytest.approx(2 * log_term + 1.25 * c.epsilon / 8)


def test_default_epsilon():
    assert default_epsilon(10, 10_000) == pytest.approx(10 * math.log(1e4))
    with pytest.raises(ValueError):
        default_epsilon(10, 1)


def test_config_validation():
    with pytest.raises(ValueError):
        cfg(domain=Ball(1.0))  # extends past D/2
    with pytest.raises(ValueError):
        cfg(k=1.0)
    with pytest.raises(ValueError):
        cfg(variant="sketch")  # no d_prime
    with pytest.raises(ValueError):
        cfg(epsilon=0.0)
    assert cfg().domain == Ball(0.5)
    assert cfg(variant="ons", k=0.5).gamma == 2.5


# --- single-step examples -------------------------------------------------


def interval():
    return Box(np.array([-0.5]), np.array([0.5]))


def test_ons_scalar_step():
    s = init_learner(LearnerConfig(1, 1.0, 0.1, 5.0, 1.0, domain=interval(), variant="ons"))
    assert s.gamma == 2.5
    s, rec = ons_step(s, np.array([0.1]))
    np.testing.assert_allclose(s.pd.A, [[1.01]])
    assert s.x[0] == pytest.approx(-0.1 / (2.5 * 1.01), rel=1e-14)
    assert s.x[0] == pytest.approx(-0.039603960396, abs=1e-12)
    assert rec.projected == "none" and s.mahalanobis_projections == 0


@pytest.mark.parametrize("variant", ["ons", "core", "full"])
def test_zero_gradient_only_advances_time(variant):
    s = init_learner(cfg(variant=variant, d=3))
    s, _ = step(s, np.array([0.05, -0.02, 0.01]))
    s2, rec = step(s, np.zeros(3))
    assert s2.t == s.t + 1
    assert s2.pd is s.pd
    np.testing.assert_array_equal(s2.x, s.x)
    np.testing.assert_array_equal(s2.y, s.y)
    assert rec.projected == "none"


def test_ons_exterior_step_projects_into_domain():
    rng = np.random.default_rng(0)
    c = LearnerConfig(3, 1.0, 1.0, 10.0, 0.05, variant="ons")
    s = init_learner(c)
    for _ in range(30):
        s, rec = ons_step(s, rng.standard_normal(3) * 0.5)
        assert c.domain.contains(s.x)
    assert s.mahalanobis_projections > 0


def test_ons_box_projection_is_exact_qp():
    c = LearnerConfig(2, 2 * math.sqrt(2), 1.0, 10.0, 0.1, domain=Box.cube(2, 1.0), variant="ons")
    s = init_learner(c)
    s, rec = ons_step(s, np.array([-0.9, 0.3]))
    assert rec.projected == "mahalanobis"
    assert c.domain.contains(s.x)


def core_config(**kw):
    base = dict(d=1, D=1.0, G=1.0, alpha=0.5, epsilon=3.0, k=2.0, domain=interval(), variant="core")
    base.update(kw)
    return LearnerConfig(**base)


def test_core_boundary_is_inclusive():
    s = init_learner(core_config())
    assert s.gamma == 0.25
    s, rec = lightons_core_step(s, np.array([-1.0]))
    assert s.x[0] == 1.0  # exactly k D / 2
    assert rec.projected == "none"


def test_core_accepts_points_outside_domain():
    # gamma = 1/3, eps = 1, g = -1/3 gives x_hat = 0.9
    s = init_learner(core_config(alpha=10.0, epsilon=1.0))
    s, rec = lightons_core_step(s, np.array([-1.0 / 3.0]))
    assert s.x[0] == pytest.approx(0.9, abs=1e-14)
    assert rec.projected == "none"
    assert not interval().contains(s.x)


def test_core_projects_beyond_hysteresis_radius():
    # gamma = 1/3, eps = 1, g = -1 gives x_hat = 1.5 > 1
    s = init_learner(core_config(alpha=10.0, epsilon=1.0))
    s, rec = lightons_core_step(s, np.array([-1.0]))
    assert rec.projected == "mahalanobis"
    assert s.mahalanobis_projections == 1
    np.testing.assert_allclose(s.x, [0.5])


def test_lightons_first_round_by_hand():
    c = LearnerConfig(2, 1.0, 1.0, 10.0, 1.0, k=2.0)
    s = init_learner(c)
    assert s.gamma == 0.5
    s, rec = lightons_step(s, np.array([1.0, 0.0]))
    np.testing.assert_array_equal(rec.grad_g, [1.0, 0.0])
    np.testing.assert_allclose(s.pd.A, np.diag([2.0, 1.0]))
    np.testing.assert_allclose(s.y, [-1.0, 0.0])
    np.testing.assert_allclose(s.x, [-0.5, 0.0])
    assert rec.projected == "euclidean_only"
    assert s.mahalanobis_projections == 0


def test_lightons_forced_projection_lands_in_inner_ball():
    c = LearnerConfig(2, 1.0, 1.0, 10.0, 0.1, k=2.0)
    s = init_learner(c)
    s, rec = lightons_step(s, np.array([1.0, 0.5]))
    assert rec.projected == "mahalanobis"
    assert np.linalg.norm(s.y) <= 0.5
    assert c.domain.contains(s.x)
    assert rec.zeta_t > 0


def test_step_dispatch_guards():
    s = init_learner(cfg(variant="ons", d=2))
    with pytest.raises(ValueError):
        lightons_step(s, np.zeros(2))
    with pytest.raises(ValueError):
        ons_step(init_learner(cfg(d=2)), np.zeros(2))
    with pytest.raises(ValueError):
        step(s, np.zeros(3))


def test_gradient_bound_violation_warns_once(caplog):
    s = init_learner(cfg(d=2))
    with caplog.at_level(logging.WARNING, logger="lightons.learners"):
        s, _ = step(s, np.array([1.0, 0.0]))
        s, _ = step(s, np.array([1.0, 0.0]))
    assert s.warned
    assert sum("exceeds G" in r.message for r in caplog.records) == 1


def test_trace_is_opt_in():
    c = cfg(d=2)
    s = init_learner(c, trace=True)
    for _ in range(3):
        s, _ = step(s, np.array([0.05, 0.0]))
    assert [r.t for r in s.trace] == [1, 2, 3]
    assert init_learner(c).trace is None


# --- trajectory properties --------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(
    variant=st.sampled_from(["ons", "core", "full"]),
    d=st.integers(1, 6),
    eps=st.floats(0.01, 5.0),
    scale=st.floats(0.1, 3.0),
    seed=st.integers(0, 2**32 - 1),
)
def test_containment_and_budget(variant, d, eps, scale, seed):
    rng = np.random.default_rng(seed)
    c = LearnerConfig(d, 2.0, 1.0, 1.0, eps, k=2.0, variant=variant)
    s = init_learner(c)
    T = 60
    for _ in range(T):
        g = rng.standard_normal(d)
        g *= min(1.0, scale * rng.uniform()) / np.linalg.norm(g)
        s, rec = step(s, g)
        if variant == "ons":
            assert c.domain.contains(s.x)
        else:
            assert np.linalg.norm(s.y) <= c.k * c.D / 2 + 1e-12
        if variant == "full":
            assert c.domain.contains(s.x)
        if rec.projected == "mahalanobis" and variant == "full":
            assert np.linalg.norm(s.y) <= c.D / 2
    if variant != "ons":
        assert s.mahalanobis_projections <= projection_budget(c, s.gamma, T)


def folded_stream(task, d=5, T=3000, seed=3):
    return sample_stream(StreamConfig(task, d, T, seed))


@pytest.mark.parametrize("task", ["linear", "logistic"])
def test_exp_concave_curvature_inequality(task):
    stream = folded_stream(task, T=10_000)
    g0 = gamma_ons(2.0, 0.1, stream.alpha)
    rng = np.random.default_rng(4)
    d = stream.X.shape[1]
    ball = Ball(1.0)
    worst = -math.inf
    for t in range(10_000):
        x = ball.project(rng.standard_normal(d) * rng.uniform(0, 1.5))
        u = ball.project(rng.standard_normal(d) * rng.uniform(0, 1.5))
        fx, gx = stream.loss_grad(t, x)
        fu, _ = stream.loss_grad(t, u)
        lin = gx @ (x - u)
        worst = max(worst, fx - fu - (lin - g0 / 2 * lin**2))
    assert worst <= 1e-12


@pytest.mark.parametrize("task", ["linear", "logistic"])
def test_per_round_surrogate_decomposition(task):
    stream = folded_stream(task, T=500)
    d = stream.X.shape[1]
    c = LearnerConfig(d, 2.0, 0.1, stream.alpha, 1.0, k=2.0)
    s = init_learner(c)
    rng = np.random.default_rng(5)
    U = rng.standard_normal((50, d))
    U *= (rng.uniform(size=50) ** (1 / d) / np.linalg.norm(U, axis=1))[:, None]
    for t in range(len(stream)):
        y = s.y
        f, g = stream.loss_grad(t, s.x)
        s, rec = step(s, g, f)
        fu = np.array([stream.loss_grad(t, u)[0] for u in U])
        lin = (y - U) @ rec.grad_g
        assert np.all(f - fu <= lin - s.gamma / 2 * lin**2 + 1e-12)


def test_gradient_norm_adaptive_regret():
    base = folded_stream("linear", d=5, T=5000, seed=9)
    w = 1.0 / np.sqrt(np.arange(1, len(base) + 1))
    stream = LossStream("linear", base.X * w[:, None], base.y * w, base.feature_scale, alpha=base.alpha)
    d = 5
    c = LearnerConfig(d, 2.0, 0.1, stream.alpha, default_epsilon(d, len(stream)), k=2.0)
    s = init_learner(c)
    losses, grad_sq = [], 0.0
    for t in range(len(stream)):
        f, g = stream.loss_grad(t, s.x)
        s, _ = step(s, g, f)
        losses.append(f)
        grad_sq += g @ g
    u = offline_best_comparator(stream, c.domain).u
    regret = float(np.sum(losses) - np.sum(stream.losses(u)))
    assert regret <= gradient_norm_regret_bound(c, s.gamma, grad_sq) + 2.0
    # the adaptive bound is far tighter than the worst-case one here
    assert gradient_norm_regret_bound(c, s.gamma, grad_sq) < regret_upper_bound(c, s.gamma, len(stream))


def test_refresh_knob_reaches_pd_state():
    c = cfg(d=2, refresh_every=5)
    s = init_learner(c)
    assert s.pd.refresh_every == 5
    assert pd_pair_init(2, 1.0).refresh_every is None
