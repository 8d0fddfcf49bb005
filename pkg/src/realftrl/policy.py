"""Entropy-regularised FTRL agents over the K-simplex.

The agent keeps, per arm, the running sum ``L(a)`` of estimated loss
parameters. At context ``x`` the FTRL distribution with regulariser
``-beta_t * H(q)`` is the Gibbs distribution ``q(a) ~ exp(-<x, L(a)> / beta_t)``,
which is then mixed with the uniform distribution at rate ``gamma_t``.

Three agents share this machinery:

* :class:`BoBWRealFTRL` with the entropy-adaptive ``beta_t`` schedule;
* :class:`RealLinExp3` with a fixed rate and fixed exploration;
* :class:`UniformAgent`, which never learns.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import sample_categorical

PROB_FLOOR = 1e-300


def softmax_rows(scores: np.ndarray, beta: float) -> np.ndarray:
    """Rows of ``exp(-scores / beta)`` normalised, with max-subtraction."""
    z = -np.asarray(scores, dtype=np.float64) / beta
    z -= z.max(axis=-1, keepdims=True)
    e = np.maximum(np.exp(z), PROB_FLOOR)
    return e / e.sum(axis=-1, keepdims=True)


def ftrl_dist(L: np.ndarray, x, beta: float) -> np.ndarray:
    """FTRL distribution at context ``x`` for cumulative parameters ``L`` (K, d)."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    return softmax_rows(L @ np.asarray(x, dtype=np.float64), beta)


def entropies(Q: np.ndarray) -> np.ndarray:
    Q = np.asarray(Q)
    return -(Q * np.log(np.where(Q > 0, Q, 1.0))).sum(axis=-1)


def beta_1(
    omega: float,
    K: int,
    T: int,
    delta: float,
    lambda_min: float,
    d: int,
    mode: str = "tuned",
) -> float:
    """Initial regularisation weight.

    ``mode="tuned"`` (default) gives
    ``omega * sqrt(K log T (log T / (delta lambda_min log K) + d))``;
    ``mode="simple"`` gives ``omega * sqrt(log(K d T) / log K)``.
    """
    if K < 2:
        raise ValueError("at least two arms are required (log K = 0)")
    if min(omega, delta, lambda_min) <= 0 or d < 1:
        raise ValueError("omega, delta, lambda_min must be positive and d >= 1")
    logK = math.log(K)
    if mode == "tuned":
        if T < 2:
            raise ValueError("horizon must be at least 2")
        logT = math.log(T)
        return omega * math.sqrt(K * logT * (logT / (delta * lambda_min * logK) + d))
    if mode == "simple":
        if K * d * T < K:
            raise ValueError("need d * T >= 1")
        return omega * math.sqrt(math.log(K * d * T) / logK)
    raise ValueError(f"unknown beta_1 mode {mode!r}")


def gamma_t(beta: float, K: int, T: int, delta: float, lambda_min: float) -> float:
    """Exploration rate ``K log T / (2 delta lambda_min beta)``, clamped to [0, 1]."""
    if not beta > 0 or not lambda_min > 0:
        raise ValueError("beta and lambda_min must be positive")
    raw = K * math.log(T) / (2.0 * delta * lambda_min * beta)
    return min(1.0, raw)


def mgr_iterations(gamma: float, K: int, T: int, delta: float, lambda_min: float) -> int:
    """Smallest ``M`` with ``exp(-gamma delta lambda_min M / K) <= 1 / T``.

    For an unclamped ``gamma`` this is ``ceil(2 beta_t)``.
    """
    if T <= 1:
        return 0
    if gamma <= 0:
        raise ValueError("gamma must be positive for T > 1")
    target = K * math.log(T) / (gamma * delta * lambda_min)
    M = math.ceil(target)
    # guard the ceiling against rounding just below an integer
    while math.exp(-gamma * delta * lambda_min * M / K) > 1.0 / T:
        M += 1
    return M


def update_beta(beta: float, beta1: float, s_h: float, h: float, K: int) -> tuple[float, float]:
    """Add the round's entropy ``h`` to ``s_h`` and return ``(beta_next, s_h_next)``."""
    s_h = s_h + h
    return beta + beta1 / math.sqrt(1.0 + s_h / math.log(K)), s_h


@dataclass
class AgentDecision:
    q: np.ndarray
    pi: np.ndarray
    gamma: float
    beta: float
    arm: int
    entropy: float


@dataclass
class PolicySnapshot:
    """Frozen (L, beta, gamma) evaluable at a batch of contexts."""

    L: np.ndarray
    beta: float
    gamma: float

    @property
    def K(self) -> int:
        return self.L.shape[0]

    def q(self, X) -> np.ndarray:
        return softmax_rows(np.atleast_2d(X) @ self.L.T, self.beta)

    def probs(self, X) -> np.ndarray:
        return (1.0 - self.gamma) * self.q(X) + self.gamma / self.K


@dataclass
class FtrlState:
    K: int
    d: int
    beta: float
    beta1: float
    L: np.ndarray = None
    s_h: float = 0.0
    t: int = 1

    def __post_init__(self):
        if self.L is None:
            self.L = np.zeros((self.K, self.d))


@dataclass(frozen=True)
class ScheduleConstants:
    """Problem constants the schedules depend on."""

    K: int
    d: int
    T: int
    c_loss: float
    c_x: float
    lambda_min: float

    @property
    def omega(self) -> float:
        return self.c_loss * self.c_x

    @property
    def delta(self) -> float:
        return 1.0 / (2.0 * self.c_loss * self.c_x)


class FtrlAgent:
    """Shared act/observe loop; subclasses decide ``beta``, ``gamma`` and ``M``."""

    id = "ftrl"
    needs_estimates = True

    def __init__(self, consts: ScheduleConstants, beta: float, beta1: float):
        self.consts = consts
        self.state = FtrlState(consts.K, consts.d, beta=beta, beta1=beta1)

    # schedule hooks
    def gamma(self) -> float:
        raise NotImplementedError

    def mgr_iterations(self) -> int:
        raise NotImplementedError

    def _advance_beta(self, h: float) -> None:
        raise NotImplementedError

    def snapshot(self) -> PolicySnapshot:
        return PolicySnapshot(self.state.L.copy(), self.state.beta, self.gamma())

    def q_at(self, X) -> np.ndarray:
        """FTRL distributions at the rows of ``X`` for the current state."""
        st = self.state
        X = np.atleast_2d(X)
        if st.t == 1:
            # no estimates yet: q_1 is uniform whatever the context
            return np.full((X.shape[0], st.K), 1.0 / st.K)
        return softmax_rows(X @ st.L.T, st.beta)

    def act(self, x, rng: np.random.Generator, q: np.ndarray | None = None) -> AgentDecision:
        """Sample an arm at context ``x``.

        ``q`` may carry the FTRL distribution at ``x`` when the caller has
        already evaluated it for the current state.
        """
        st = self.state
        if q is None:
            q = self.q_at(x)[0]
        g = self.gamma()
        pi = (1.0 - g) * q + g / st.K
        arm = sample_categorical(pi, rng)
        h = float(entropies(q))
        return AgentDecision(q, pi, g, st.beta, arm, h)

    def observe(self, decision: AgentDecision, theta_hat: np.ndarray | None) -> None:
        st = self.state
        if theta_hat is not None:
            st.L += theta_hat
        self._advance_beta(decision.entropy)
        st.t += 1


class BoBWRealFTRL(FtrlAgent):
    """Entropy-adaptive FTRL with exploration mixing.

    ``beta_{t+1} = beta_t + beta_1 / sqrt(1 + S_H / log K)`` where ``S_H`` sums
    the entropies of ``q_s`` at the realised contexts. ``gamma``, ``beta`` and
    ``M`` may be pinned through ``overrides`` (used to recover fixed-rate
    behaviour).
    """

    id = "bobw_real_ftrl"

    def __init__(self, consts: ScheduleConstants, beta1_mode: str = "tuned", overrides: dict | None = None):
        b1 = beta_1(consts.omega, consts.K, consts.T, consts.delta, consts.lambda_min, consts.d, beta1_mode)
        self.overrides = dict(overrides or {})
        unknown = set(self.overrides) - {"beta", "gamma", "mgr_iterations", "beta1"}
        if unknown:
            raise ValueError(f"unknown overrides {sorted(unknown)}")
        b1 = float(self.overrides.get("beta1", b1))
        super().__init__(consts, beta=float(self.overrides.get("beta", b1)), beta1=b1)
        self.beta1_mode = beta1_mode

    def gamma(self) -> float:
        if "gamma" in self.overrides:
            return float(self.overrides["gamma"])
        c = self.consts
        return gamma_t(self.state.beta, c.K, c.T, c.delta, c.lambda_min)

    def mgr_iterations(self) -> int:
        if "mgr_iterations" in self.overrides:
            return int(self.overrides["mgr_iterations"])
        c = self.consts
        return mgr_iterations(self.gamma(), c.K, c.T, c.delta, c.lambda_min)

    def _advance_beta(self, h: float) -> None:
        st = self.state
        if "beta" in self.overrides:
            st.s_h += h
            return
        st.beta, st.s_h = update_beta(st.beta, st.beta1, st.s_h, h, st.K)


def real_lin_exp3_rate(consts: ScheduleConstants) -> float:
    """Horizon-tuned fixed rate ``sqrt(log K / (d K T)) / omega``."""
    c = consts
    return math.sqrt(math.log(c.K) / (c.d * c.K * c.T)) / c.omega


class RealLinExp3(BoBWRealFTRL):
    """Fixed-rate baseline: ``q(a|x) ~ exp(-eta <x, L(a)>)``, fixed ``gamma`` and ``M``.

    Unset parameters default to the horizon-tuned rate, the exploration rate
    the adaptive schedule would use at ``beta = 1 / eta``, and the matching
    iteration count.
    """

    id = "real_lin_exp3"

    def __init__(self, consts: ScheduleConstants, eta: float | None = None,
                 gamma: float | None = None, M: int | None = None):
        eta = real_lin_exp3_rate(consts) if eta is None else float(eta)
        if not eta > 0:
            raise ValueError("eta must be positive")
        beta = 1.0 / eta
        if gamma is None:
            gamma = gamma_t(beta, consts.K, consts.T, consts.delta, consts.lambda_min)
        if not 0.0 < gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if M is None:
            M = mgr_iterations(gamma, consts.K, consts.T, consts.delta, consts.lambda_min)
        self.eta = eta
        super().__init__(consts, overrides={"beta": beta, "beta1": beta, "gamma": gamma, "mgr_iterations": M})


class UniformAgent(FtrlAgent):
    id = "uniform"
    needs_estimates = False

    def __init__(self, consts: ScheduleConstants):
        super().__init__(consts, beta=1.0, beta1=1.0)

    def gamma(self) -> float:
        return 1.0

    def mgr_iterations(self) -> int:
        return 0

    def act(self, x, rng, q=None):
        st = self.state
        q = np.full(st.K, 1.0 / st.K)
        arm = sample_categorical(q, rng)
        return AgentDecision(q, q.copy(), 1.0, st.beta, arm, math.log(st.K))

    def _advance_beta(self, h):
        self.state.s_h += h


AGENTS = {
    BoBWRealFTRL.id: BoBWRealFTRL,
    RealLinExp3.id: RealLinExp3,
    UniformAgent.id: UniformAgent,
}


def make_agent(desc: dict, consts: ScheduleConstants) -> FtrlAgent:
    desc = dict(desc)
    agent_id = desc.pop("id", BoBWRealFTRL.id)
    desc.pop("mgr_tail_tol", None)
    if agent_id == BoBWRealFTRL.id:
        return BoBWRealFTRL(consts, desc.get("beta1_mode", "tuned"), desc.get("overrides"))
    if agent_id == RealLinExp3.id:
        return RealLinExp3(consts, desc.get("eta"), desc.get("gamma"), desc.get("M"))
    if agent_id == UniformAgent.id:
        return UniformAgent(consts)
    raise ValueError(f"unknown agent {agent_id!r}; expected one of {sorted(AGENTS)}")
