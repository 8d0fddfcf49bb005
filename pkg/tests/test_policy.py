import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from realftrl import oracle
from realftrl.policy import (
    BoBWRealFTRL,
    RealLinExp3,
    ScheduleConstants,
    UniformAgent,
    beta_1,
    entropies,
    ftrl_dist,
    gamma_t,
    make_agent,
    mgr_iterations,
    softmax_rows,
    update_beta,
)

CONSTS = ScheduleConstants(K=2, d=2, T=1000, c_loss=0.5, c_x=1.0, lambda_min=0.5)


def test_ftrl_dist_examples():
    np.testing.assert_allclose(ftrl_dist(np.zeros((3, 2)), [1.0, 0.0], 2.0), [1 / 3] * 3)
    beta = 1.7
    L = np.array([[0.0], [beta * math.log(2)]])
    np.testing.assert_allclose(ftrl_dist(L, [1.0], beta), [2 / 3, 1 / 3], atol=1e-15)
    np.testing.assert_allclose(oracle.ftrl_argmin_numeric([0.0, beta * math.log(2)], beta), [2 / 3, 1 / 3], atol=1e-6)
    with pytest.raises(ValueError):
        ftrl_dist(L, [1.0], 0.0)


def test_softmax_survives_huge_scores():
    q = softmax_rows(np.array([1e6, 0.0, 2e6]), 1.0)
    assert np.isfinite(q).all() and q[1] == pytest.approx(1.0)
    assert q.min() > 0


@settings(max_examples=100, deadline=None)
@given(
    L=st.lists(st.floats(-20, 20), min_size=2, max_size=8),
    beta=st.floats(0.1, 100.0),
    shift=st.floats(-50, 50),
    scale=st.floats(0.01, 100.0),
)
def test_softmax_invariances(L, beta, shift, scale):
    L = np.array(L)
    q = softmax_rows(L, beta)
    np.testing.assert_allclose(softmax_rows(L + shift, beta), q, atol=1e-10)
    np.testing.assert_allclose(softmax_rows(L * scale, beta * scale), q, atol=1e-10)
    assert q.sum() == pytest.approx(1.0)


@settings(max_examples=40, deadline=None)
@given(L=st.lists(st.floats(-5, 5), min_size=2, max_size=8), beta=st.floats(0.1, 100.0))
def test_closed_form_matches_numeric_minimiser(L, beta):
    np.testing.assert_allclose(softmax_rows(np.array(L), beta), oracle.ftrl_argmin_numeric(L, beta), atol=1e-6)


def test_update_beta_examples():
    b1 = 1.3
    beta, s = b1, 0.0
    for t in range(1, 6):
        beta, s = update_beta(beta, b1, s, 0.0, 2)
        assert beta == pytest.approx((t + 1) * b1)
    b2, _ = update_beta(b1, b1, 0.0, math.log(2), 2)
    assert b2 == pytest.approx(b1 * (1 + 1 / math.sqrt(2)))
    beta, s = b1, 0.0
    for t in range(1, 50):
        beta, s = update_beta(beta, b1, s, math.log(3), 3)
        want = b1 * (1 + sum(1 / math.sqrt(1 + u) for u in range(1, t + 1)))
        assert beta == pytest.approx(want, rel=1e-12)


def test_gamma_examples():
    assert gamma_t(400.0, 2, math.exp(10), 0.5, 0.5) == pytest.approx(0.1)
    assert gamma_t(1e-3, 2, 1000, 0.5, 0.5) == 1.0
    assert gamma_t(1e12, 2, 1000, 0.5, 0.5) < 1e-9
    with pytest.raises(ValueError):
        gamma_t(0.0, 2, 1000, 0.5, 0.5)


def test_beta_1_examples():
    want = math.sqrt(2 * (1 / (0.5 * math.log(2)) + 2))
    assert beta_1(1.0, 2, math.e, 0.5, 1.0, 2) == pytest.approx(want)
    assert want == pytest.approx(3.1257, abs=2e-4)  # quoted value is truncated
    assert beta_1(2.0, 3, 500, 0.5, 0.3, 2) == pytest.approx(2 * beta_1(1.0, 3, 500, 0.5, 0.3, 2))
    assert beta_1(1.0, 2, 0.5, 0.5, 1.0, 2, mode="simple") == pytest.approx(1.0)
    with pytest.raises(ValueError):
        beta_1(1.0, 1, 100, 0.5, 1.0, 2)
    with pytest.raises(ValueError):
        beta_1(1.0, 2, 100, 0.5, 1.0, 2, mode="other")


@settings(max_examples=200, deadline=None)
@given(
    beta=st.floats(0.05, 1e4),
    K=st.integers(2, 10),
    T=st.integers(2, 10**6),
    delta=st.floats(0.05, 2.0),
    lam=st.floats(0.01, 1.0),
)
def test_mgr_iterations_is_minimal(beta, K, T, delta, lam):
    g = gamma_t(beta, K, T, delta, lam)
    M = mgr_iterations(g, K, T, delta, lam)
    assert oracle.bias_bound_eval(g, delta, lam, M, K, 1.0, 1.0, T)[2]
    if M > 0:
        assert not oracle.bias_bound_eval(g, delta, lam, M - 1, K, 1.0, 1.0, T)[2]
    if g < 1.0:
        assert abs(M - math.ceil(2 * beta)) <= 1


def test_first_decision_is_uniform():
    agent = BoBWRealFTRL(CONSTS)
    agent.state.L[:] = [[5.0, 0.0], [-5.0, 0.0]]  # ignored in round one
    dec = agent.act([1.0, 0.0], np.random.default_rng(0))
    np.testing.assert_allclose(dec.pi, [0.5, 0.5])
    np.testing.assert_allclose(dec.q, [0.5, 0.5])


def test_full_exploration_is_uniform():
    agent = BoBWRealFTRL(CONSTS, overrides={"gamma": 1.0})
    agent.state.t = 5
    agent.state.L[:] = [[5.0, 0.0], [-5.0, 0.0]]
    dec = agent.act([1.0, 0.0], np.random.default_rng(0))
    np.testing.assert_allclose(dec.pi, [0.5, 0.5])


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10**6), gamma=st.floats(0.0, 1.0))
def test_mixing_floor(seed, gamma):
    rng = np.random.default_rng(seed)
    agent = BoBWRealFTRL(ScheduleConstants(4, 2, 100, 1.0, 1.0, 0.5), overrides={"gamma": gamma})
    agent.state.t = 3
    agent.state.L[:] = rng.normal(0, 30, (4, 2))
    dec = agent.act(rng.normal(size=2), rng)
    assert dec.pi.min() >= gamma / 4 - 1e-15
    np.testing.assert_allclose(dec.pi, (1 - gamma) * dec.q + gamma / 4, atol=1e-12)


def _play(agent, rounds, seed):
    rng = np.random.default_rng(seed)
    decisions, hats = [], []
    for _ in range(rounds):
        x = rng.normal(size=2)
        dec = agent.act(x, rng)
        hat = np.zeros((2, 2))
        hat[dec.arm] = rng.normal(size=2)
        agent.observe(dec, hat)
        decisions.append(dec)
        hats.append(hat)
    return decisions, hats


def test_observe_accumulates_and_advances():
    agent = BoBWRealFTRL(CONSTS)
    b1 = agent.state.beta
    dec = agent.act([1.0, 0.0], np.random.default_rng(0))
    agent.observe(dec, np.zeros((2, 2)))
    assert agent.state.t == 2
    assert agent.state.beta == pytest.approx(b1 * (1 + 1 / math.sqrt(2)))
    np.testing.assert_array_equal(agent.state.L, 0.0)

    agent = BoBWRealFTRL(CONSTS)
    decisions, hats = _play(agent, 30, 4)
    np.testing.assert_allclose(agent.state.L, np.sum(hats, axis=0), atol=1e-12)
    assert agent.state.s_h == pytest.approx(sum(d.entropy for d in decisions))


def test_replay_is_bit_identical():
    a, b = BoBWRealFTRL(CONSTS), BoBWRealFTRL(CONSTS)
    _play(a, 25, 8)
    _play(b, 25, 8)
    np.testing.assert_array_equal(a.state.L, b.state.L)
    assert a.state.beta == b.state.beta


def test_beta_lower_bound_chain():
    agent = BoBWRealFTRL(CONSTS)
    b1 = agent.state.beta1
    for t in range(1, 60):
        st_ = agent.state
        assert st_.beta >= t * b1 / math.sqrt(1 + st_.s_h / math.log(2)) - 1e-12
        before = st_.beta
        _play(agent, 1, t)
        assert agent.state.beta >= before
        assert 0 <= agent.state.s_h <= agent.state.t * math.log(2)


def test_reallinexp3_matches_pinned_bobw():
    base = RealLinExp3(CONSTS, eta=0.2, gamma=0.3, M=17)
    pinned = BoBWRealFTRL(CONSTS, overrides={"beta": 5.0, "beta1": 5.0, "gamma": 0.3, "mgr_iterations": 17})
    da, _ = _play(base, 40, 2)
    db, _ = _play(pinned, 40, 2)
    assert [d.arm for d in da] == [d.arm for d in db]
    np.testing.assert_array_equal(np.array([d.pi for d in da]), np.array([d.pi for d in db]))
    assert base.mgr_iterations() == 17 and base.state.beta == 5.0


def test_reallinexp3_limits():
    tiny = RealLinExp3(CONSTS, eta=1e-12, gamma=0.1)
    tiny.state.t = 4
    tiny.state.L[:] = [[3.0, 1.0], [-3.0, 0.0]]
    np.testing.assert_allclose(tiny.act([1.0, 1.0], np.random.default_rng(0)).q, [0.5, 0.5], atol=1e-9)
    with pytest.raises(ValueError):
        RealLinExp3(CONSTS, eta=0.0)
    with pytest.raises(ValueError):
        RealLinExp3(CONSTS, eta=0.1, gamma=0.0)


def test_uniform_agent_and_factory():
    u = UniformAgent(CONSTS)
    dec = u.act([1.0, 0.0], np.random.default_rng(0))
    np.testing.assert_allclose(dec.pi, [0.5, 0.5])
    assert not u.needs_estimates and u.mgr_iterations() == 0
    assert isinstance(make_agent({"id": "uniform"}, CONSTS), UniformAgent)
    assert make_agent({"id": "bobw_real_ftrl", "beta1_mode": "simple"}, CONSTS).beta1_mode == "simple"
    assert isinstance(make_agent({"id": "real_lin_exp3", "eta": 0.1}, CONSTS), RealLinExp3)
    with pytest.raises(ValueError):
        BoBWRealFTRL(CONSTS, overrides={"bogus": 1})


def test_entropies_handles_zeros():
    np.testing.assert_allclose(entropies(np.array([[1.0, 0.0], [0.5, 0.5]])), [0.0, math.log(2)])
