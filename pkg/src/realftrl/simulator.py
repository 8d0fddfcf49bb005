"""The round loop, regret bookkeeping and aggregation over seeds."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .contexts import ContextModel
from .environment import Environment, History
from .linalg import RngStreams
from .mgr import MgrConfig, mgr
from .policy import FtrlAgent, PolicySnapshot, entropies

DEFAULT_TAIL_TOL = 1e-13
CONTINUOUS_PROBES = 256


@dataclass
class RoundLog:
    t: int
    x: np.ndarray
    q: np.ndarray
    pi: np.ndarray
    gamma: float
    beta: float
    arm: int
    loss: float
    regret: float
    entropy: float
    miss_mass: float


@dataclass
class TrialLog:
    """Per-round records stored column-wise."""

    x: np.ndarray
    q: np.ndarray
    pi: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    arm: np.ndarray
    loss: np.ndarray
    mean_loss: np.ndarray
    noise: np.ndarray
    entropy: np.ndarray
    mgr_m: np.ndarray
    mgr_used: np.ndarray
    hat_floor: np.ndarray
    opt_arm: np.ndarray = None
    regret_inst: np.ndarray = None
    regret_realized: np.ndarray = None

    @classmethod
    def empty(cls, T: int, K: int, d: int) -> "TrialLog":
        return cls(
            x=np.zeros((T, d)),
            q=np.zeros((T, K)),
            pi=np.zeros((T, K)),
            gamma=np.zeros(T),
            beta=np.zeros(T),
            arm=np.zeros(T, dtype=np.int64),
            loss=np.zeros(T),
            mean_loss=np.zeros((T, K)),
            noise=np.zeros((T, K)),
            entropy=np.zeros(T),
            mgr_m=np.zeros(T, dtype=np.int64),
            mgr_used=np.zeros(T, dtype=np.int64),
            hat_floor=np.full(T, np.inf),
        )

    def __len__(self) -> int:
        return len(self.arm)

    def rounds(self):
        for i in range(len(self)):
            a_star = self.opt_arm[i]
            yield RoundLog(
                t=i + 1,
                x=self.x[i],
                q=self.q[i],
                pi=self.pi[i],
                gamma=float(self.gamma[i]),
                beta=float(self.beta[i]),
                arm=int(self.arm[i]),
                loss=float(self.loss[i]),
                regret=float(self.regret_inst[i]),
                entropy=float(self.entropy[i]),
                miss_mass=float(1.0 - self.pi[i, a_star]),
            )


@dataclass
class ProbeStats:
    """Per-probe-context sums over rounds, used for Qbar and the entropy bound."""

    X: np.ndarray
    weights: np.ndarray
    pi_sum: np.ndarray
    q_sum: np.ndarray
    entropy_sum: np.ndarray
    opt_arm: np.ndarray = None

    def miss_mass(self, T: int, use_q: bool = False) -> np.ndarray:
        """``Q(a*|x) = sum_t (1 - p_t(a*(x)|x))`` per probe."""
        sums = self.q_sum if use_q else self.pi_sum
        return T - sums[np.arange(len(self.X)), self.opt_arm]


@dataclass
class ExperimentResult:
    seed: int
    T: int
    agent_id: str
    env_id: str
    regret: np.ndarray
    realized_regret: np.ndarray
    q_bar: float
    entropy_trace: np.ndarray
    wall_clock: float
    config_hash: str = ""
    diagnostics: dict = field(default_factory=dict)

    @property
    def final_regret(self) -> float:
        return float(self.regret[-1]) if self.T else 0.0


def regret_increment(pi, mean_losses, a_star: int) -> float:
    """Expected regret of one round given the action distribution.

    ``mean_losses[a] = <x_t, theta_t(a)>``; the noise cancels in expectation.
    """
    pi = np.asarray(pi)
    mean_losses = np.asarray(mean_losses)
    return float(pi @ mean_losses - mean_losses[a_star])


def probe_contexts(model: ContextModel, streams: RngStreams, n: int = CONTINUOUS_PROBES):
    if model.support is not None:
        return np.asarray(model.support), np.asarray(model.weights)
    X = model.sample_many(streams.stream("probe"), n)
    return X, np.full(n, 1.0 / n)


def _hat_floor(theta_hat_row: np.ndarray, probes: np.ndarray, model: ContextModel, beta: float) -> float:
    # discrete supports: exact minimum; continuous: worst case over the C_X ball
    if model.support is not None:
        return float((probes @ theta_hat_row).min()) / beta
    return -model.c_x * float(np.linalg.norm(theta_hat_row)) / beta


@dataclass
class Trial:
    log: TrialLog
    result: ExperimentResult
    probes: ProbeStats


def run_trial(
    env: Environment,
    model: ContextModel,
    agent: FtrlAgent,
    T: int,
    seed: int,
    tail_tol: float = DEFAULT_TAIL_TOL,
    config_hash: str = "",
    env_id: str = "",
    n_probes: int = CONTINUOUS_PROBES,
) -> Trial:
    """Play ``T`` rounds.

    Each round follows the order: the environment commits ``theta_t`` from
    rounds ``< t``; the context is drawn; the agent acts; the loss is
    realised; MGR and the estimator run for the played arm; the agent
    observes. The comparator ``a*`` is resolved after the last round.
    """
    if env.d != model.d or agent.consts.d != model.d:
        raise ValueError("context, environment and agent dimensions differ")
    if env.K != agent.consts.K:
        raise ValueError("environment and agent disagree on the number of arms")
    if T > env.horizon:
        raise ValueError(f"T={T} exceeds the environment horizon {env.horizon}")
    started = time.perf_counter()
    env.reset()
    K, d = env.K, model.d
    streams = RngStreams(seed)
    ctx_rng = streams.stream("context")
    pol_rng = streams.stream("policy")
    noise_rng = streams.stream("noise")
    mgr_rng = streams.stream("mgr")
    history = History(K)
    log = TrialLog.empty(T, K, d)
    probes, pweights = probe_contexts(model, streams, n_probes)
    P = len(probes)
    pi_sum = np.zeros((P, K))
    q_sum = np.zeros((P, K))
    h_sum = np.zeros(P)
    delta = agent.consts.delta
    discrete = model.support is not None
    support = model.support

    for t in range(1, T + 1):
        i = t - 1
        theta = env.emit_round_params(t, history)
        qp = agent.q_at(probes)
        if discrete:
            # probes are the support, so q at the context is a row of qp
            j = model.sample_index(ctx_rng)
            x = support[j]
            dec = agent.act(x, pol_rng, qp[j])
        else:
            x = model.sample(ctx_rng)
            dec = agent.act(x, pol_rng)
        mean = theta @ x
        eps = env.draw_noise(noise_rng)
        loss = float(mean[dec.arm] + eps[dec.arm])

        pip = (1.0 - dec.gamma) * qp + dec.gamma / K
        q_sum += qp
        pi_sum += pip
        h_sum += entropies(qp)

        theta_hat = None
        if agent.needs_estimates:
            st = agent.state
            M = agent.mgr_iterations()
            cfg = MgrConfig(delta, M, tail_tol)
            snap = PolicySnapshot(st.L, st.beta, dec.gamma)
            table = pip[:, dec.arm] if discrete else None
            res = mgr(model, snap, dec.arm, cfg, mgr_rng, table=table)
            row = res.sigma_dagger @ x * loss
            theta_hat = np.zeros((K, d))
            theta_hat[dec.arm] = row
            log.mgr_m[i] = M
            log.mgr_used[i] = res.iterations
            log.hat_floor[i] = _hat_floor(row, probes, model, st.beta)

        log.x[i] = x
        log.q[i] = dec.q
        log.pi[i] = dec.pi
        log.gamma[i] = dec.gamma
        log.beta[i] = dec.beta
        log.arm[i] = dec.arm
        log.loss[i] = loss
        log.mean_loss[i] = mean
        log.noise[i] = eps
        log.entropy[i] = dec.entropy

        agent.observe(dec, theta_hat)
        history.append(x, dec.arm, loss)

    comparator = env.optimal_policy(T)
    idx = np.arange(T)
    if T:
        log.opt_arm = comparator(log.x)
        best_mean = log.mean_loss[idx, log.opt_arm]
        log.regret_inst = (log.pi * log.mean_loss).sum(axis=1) - best_mean
        log.regret_realized = log.loss - (best_mean + log.noise[idx, log.opt_arm])
    else:
        log.opt_arm = np.zeros(0, dtype=np.int64)
        log.regret_inst = np.zeros(0)
        log.regret_realized = np.zeros(0)

    pstats = ProbeStats(probes, pweights, pi_sum, q_sum, h_sum, comparator(probes))
    q_bar = float(pweights @ pstats.miss_mass(T)) if T else 0.0
    result = ExperimentResult(
        seed=seed,
        T=T,
        agent_id=agent.id,
        env_id=env_id or env.regime,
        regret=np.cumsum(log.regret_inst),
        realized_regret=np.cumsum(log.regret_realized),
        q_bar=q_bar,
        entropy_trace=np.cumsum(log.entropy),
        wall_clock=time.perf_counter() - started,
        config_hash=config_hash,
        diagnostics={
            "min_hat_floor": float(log.hat_floor.min(initial=np.inf)),
            "mgr_iterations_total": int(log.mgr_used.sum()),
            "budget": env.budget,
        },
    )
    return Trial(log, result, pstats)


def q_bar_estimate(results) -> tuple[float, float]:
    """Mean and standard error of per-seed ``Qbar`` values."""
    vals = np.array([r.q_bar for r in results], dtype=np.float64)
    if len(vals) == 0:
        raise ValueError("no results")
    se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return float(vals.mean()), se


def _stderr(a: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    if n < 2:
        return np.zeros(a.shape[1:])
    return a.std(axis=0, ddof=1) / math.sqrt(n)


def aggregate(results) -> dict:
    """Per-round mean, standard error, min and max of the regret curves."""
    results = list(results)
    if not results:
        raise ValueError("nothing to aggregate")
    first = results[0]
    for r in results[1:]:
        if (r.config_hash, r.T, r.agent_id, r.env_id) != (first.config_hash, first.T, first.agent_id, first.env_id):
            raise ValueError("cannot aggregate results from different configurations")
    seeds = [r.seed for r in results]
    if len(set(seeds)) != len(seeds):
        raise ValueError("duplicate seeds in aggregate")
    curves = np.stack([r.regret for r in results]) if first.T else np.zeros((len(results), 0))
    final = curves[:, -1] if first.T else np.zeros(len(results))
    realized = np.array([r.realized_regret[-1] if r.T else 0.0 for r in results])
    q_mean, q_se = q_bar_estimate(results)
    return {
        "config_hash": first.config_hash,
        "agent": first.agent_id,
        "environment": first.env_id,
        "T": first.T,
        "seeds": seeds,
        "t": np.arange(1, first.T + 1),
        "mean": curves.mean(axis=0),
        "stderr": _stderr(curves),
        "min": curves.min(axis=0) if first.T else np.zeros(0),
        "max": curves.max(axis=0) if first.T else np.zeros(0),
        "final_mean": float(final.mean()),
        "final_stderr": float(_stderr(final[:, None])[0]),
        "realized_final_mean": float(realized.mean()),
        "realized_final_stderr": float(_stderr(realized[:, None])[0]),
        "q_bar_mean": q_mean,
        "q_bar_stderr": q_se,
    }


def fit_loglog(horizons, mean_regret) -> tuple[float, float]:
    """Least-squares slope and intercept of ``log R`` against ``log T``."""
    x = np.log(np.asarray(horizons, dtype=np.float64))
    r = np.asarray(mean_regret, dtype=np.float64)
    if len(x) < 2:
        raise ValueError("need at least two horizons")
    if not np.all(r > 0):
        raise ValueError("regret must be positive to fit a log-log slope")
    y = np.log(r)
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)
